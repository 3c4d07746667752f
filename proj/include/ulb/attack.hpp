#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "ulb/data.hpp"
#include "ulb/nn.hpp"

namespace ulb {

enum class World { unlearned, retrained };

// Logit-scaled correct-class confidences: one row per forget example, one
// column per model sample. Row-major so per-example rows are contiguous and
// estimation can run read-only in parallel across rows.
struct StatMatrix {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;
    World world = World::unlearned;

    int examples() const { return static_cast<int>(values.rows()); }
    int samples() const { return static_cast<int>(values.cols()); }
    std::span<const double> row(int i) const {
        return {values.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(values.cols()),
                static_cast<std::size_t>(values.cols())};
    }
};

// Entry (i, j) = logit_scale(confidence_correct(model_j, x_i, y_i)).
StatMatrix collect_statistics(const std::vector<ParamsF>& models, const Dataset& ds,
                              const std::vector<int>& example_idx, World world, int workers = 1);

// CSV persistence (row = example, columns = samples, no header) so external
// stacks can inject their own matrices.
void save_stat_csv(const StatMatrix& m, const std::filesystem::path& path);
StatMatrix load_stat_csv(const std::filesystem::path& path, World world);

// A threshold decision rule. The positive region (predict "unlearned") is
// v > t1 for single rules and t1 < v <= t2 for double rules; `complement`
// flips the region.
struct AttackRule {
    bool two_sided = false;
    double t1 = 0.0;
    double t2 = 0.0;
    bool complement = false;
};

// FPR = fraction of retrained samples predicted unlearned, FNR = fraction of
// unlearned samples predicted retrained.
struct Rates {
    double fpr = 0.0;
    double fnr = 0.0;
};
Rates rule_rates(const AttackRule& rule, std::span<const double> unlearned_row,
                 std::span<const double> retrained_row);

// eps estimate for one attack: a real value, +infinity (perfect separation),
// or discarded (exactly one error rate is zero).
struct EpsEstimate {
    enum class Kind { value, infinite, discard } kind = Kind::discard;
    double value = 0.0;
};
EpsEstimate eps_from_rates(double fpr, double fnr, double delta);

struct EpsilonConfig {
    double delta = 0.0;
    int quantile_grid = 64;  // candidate grid size for double-threshold rules
    double eps_cap = std::numeric_limits<double>::infinity();  // applied before binning
    bool disentangled = false;  // split samples into fit/eval halves, smooth eval with a KDE
    // Smoothed error rates are kept at least this far from 0 and 1; far-tail
    // kernel masses otherwise underflow and resurrect the exact-zero rates
    // the KDE step exists to avoid.
    double kde_mass_floor = 1e-2;

    void validate() const;
};

struct ExampleEpsilon {
    double eps = 0.0;
    bool all_discarded = false;  // every candidate rule was discarded; eps fell back to 0
};

// Strongest-attack estimate for one example: maximizes over single-threshold
// rules at pooled order-statistic midpoints and double-threshold rules on a
// quantile grid of the pooled values, both orientations each.
ExampleEpsilon per_example_epsilon(std::span<const double> unlearned_row,
                                   std::span<const double> retrained_row, const EpsilonConfig& cfg);

// Disentangled variant: the best rule is chosen on the fit rows, then scored
// against Gaussian-KDE-smoothed eval rows (Silverman bandwidth, floored).
ExampleEpsilon per_example_epsilon_disentangled(std::span<const double> u_fit,
                                                std::span<const double> r_fit,
                                                std::span<const double> u_eval,
                                                std::span<const double> r_eval,
                                                const EpsilonConfig& cfg);

// Row-parallel estimation over whole matrices. Honors cfg.disentangled by
// splitting columns into halves (fit first, eval second).
std::vector<ExampleEpsilon> per_example_epsilons(const StatMatrix& unlearned, const StatMatrix& retrained,
                                                 const EpsilonConfig& cfg, int workers = 1);

double silverman_bandwidth(std::span<const double> values);

// Linear-interpolation quantile of sorted data at probability p.
double quantile_sorted(std::span<const double> sorted, double p);

}  // namespace ulb
