#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ulb {

// Bins per-example eps into points 2/2^n with n = floor(eps/bin_width) +
// index_offset. The published formula reads n = floor(eps/bin-width) while
// also requiring n in [1, B]; with offset 1 (the default) the two agree and
// scores stay in [0,1]. Offset 0 keeps the literal floor, lower-clamped to 1.
struct BinningConfig {
    double bin_width = 0.5;
    int bins = 13;  // eps at or beyond bins*bin_width (and +inf) scores 0
    int index_offset = 1;

    void validate() const;
};

double h_points(double eps, const BinningConfig& cfg);

// F: mean of h_points over the forget set.
double forgetting_quality(std::span<const double> eps, const BinningConfig& cfg);

// F scaled by the retain- and test-accuracy ratios against retraining.
// Ratios are not capped at 1.
double final_score(double forgetting, double retain_acc_unlearned, double retain_acc_retrained,
                   double test_acc_unlearned, double test_acc_retrained);

// |forget-set accuracy of unlearned - retrained|.
double accuracy_gap(double forget_acc_unlearned, double forget_acc_retrained);

// Baseline membership-inference gap: per world, a single-feature logistic
// classifier separates forget losses (positive) from test losses (negative)
// under k-fold cross-validation; the gap is the absolute difference of the
// two worlds' mean held-out accuracies.
double mia_gap(std::span<const double> losses_unlearned_forget, std::span<const double> losses_unlearned_test,
               std::span<const double> losses_retrained_forget, std::span<const double> losses_retrained_test,
               int folds, std::uint64_t seed);

// One experiment's outcome sheet.
struct Scorecard {
    std::vector<double> eps;  // per forget example; +inf allowed
    double forgetting = 0.0;  // F
    double retain_acc_unlearned = 0.0, retain_acc_retrained = 0.0;
    double test_acc_unlearned = 0.0, test_acc_retrained = 0.0;
    double forget_acc_unlearned = 0.0, forget_acc_retrained = 0.0;
    double final = 0.0;
    int all_discard_rows = 0;   // rows whose every attack was discarded
    int over_budget_runs = 0;   // unlearning runs flagged over the runtime budget
};

}  // namespace ulb
