#include "ulb/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ulb/rng.hpp"

namespace ulb {

void BinningConfig::validate() const {
    if (!(bin_width > 0)) throw std::invalid_argument("binning: bin_width must be positive");
    if (bins < 1) throw std::invalid_argument("binning: need at least one bin");
    if (index_offset != 0 && index_offset != 1)
        throw std::invalid_argument("binning: index_offset must be 0 or 1");
}

double h_points(double eps, const BinningConfig& cfg) {
    cfg.validate();
    if (eps < 0.0) throw std::invalid_argument("h_points: eps must be non-negative");
    if (!std::isfinite(eps)) return 0.0;
    const double raw = std::floor(eps / cfg.bin_width) + static_cast<double>(cfg.index_offset);
    if (raw > static_cast<double>(cfg.bins)) return 0.0;
    const int n = std::max(1, static_cast<int>(raw));
    return std::ldexp(2.0, -n);  // 2 / 2^n
}

double forgetting_quality(std::span<const double> eps, const BinningConfig& cfg) {
    if (eps.empty()) throw std::invalid_argument("forgetting_quality: empty eps vector");
    double total = 0.0;
    for (double e : eps) total += h_points(e, cfg);
    return total / static_cast<double>(eps.size());
}

double final_score(double forgetting, double retain_acc_unlearned, double retain_acc_retrained,
                   double test_acc_unlearned, double test_acc_retrained) {
    if (!(retain_acc_retrained > 0.0) || !(test_acc_retrained > 0.0))
        throw std::invalid_argument("final_score: retrained accuracies must be positive");
    return forgetting * (retain_acc_unlearned / retain_acc_retrained) *
           (test_acc_unlearned / test_acc_retrained);
}

double accuracy_gap(double forget_acc_unlearned, double forget_acc_retrained) {
    return std::abs(forget_acc_unlearned - forget_acc_retrained);
}

namespace {

// 1-d logistic regression, feature standardized with train-fold statistics
// (which also makes the fit exactly invariant to positive-scale affine
// transforms of the losses). Full-batch gradient descent to tolerance.
struct LogisticFit {
    double w = 0.0, b = 0.0, mean = 0.0, sd = 1.0;

    static LogisticFit fit(const std::vector<double>& x, const std::vector<int>& y) {
        LogisticFit f;
        const auto n = static_cast<double>(x.size());
        for (double v : x) f.mean += v;
        f.mean /= n;
        double var = 0.0;
        for (double v : x) var += (v - f.mean) * (v - f.mean);
        f.sd = std::sqrt(var / n);
        if (!(f.sd > 1e-12)) f.sd = 1.0;
        std::vector<double> z(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - f.mean) / f.sd;

        const double lr = 0.5;
        for (int iter = 0; iter < 20000; ++iter) {
            double gw = 0.0, gb = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double p = 1.0 / (1.0 + std::exp(-(f.w * z[i] + f.b)));
                const double d = p - static_cast<double>(y[i]);
                gw += d * z[i];
                gb += d;
            }
            gw /= n;
            gb /= n;
            f.w -= lr * gw;
            f.b -= lr * gb;
            if (std::abs(gw) < 1e-8 && std::abs(gb) < 1e-8) break;
        }
        return f;
    }

    bool predict(double x) const { return f_of(x) > 0.0; }
    double f_of(double x) const { return w * (x - mean) / sd + b; }
};

// Mean held-out accuracy of the logistic attacker over seeded stratified folds.
double mia_world_score(std::span<const double> forget_losses, std::span<const double> test_losses, int folds,
                       Rng& rng) {
    auto fold_of = [&](std::size_t count) {
        std::vector<int> assignment(count);
        for (std::size_t i = 0; i < count; ++i) assignment[i] = static_cast<int>(i % static_cast<std::size_t>(folds));
        rng.shuffle(assignment);
        return assignment;
    };
    const std::vector<int> fold_f = fold_of(forget_losses.size());
    const std::vector<int> fold_t = fold_of(test_losses.size());

    double acc_sum = 0.0;
    for (int k = 0; k < folds; ++k) {
        std::vector<double> x;
        std::vector<int> y;
        for (std::size_t i = 0; i < forget_losses.size(); ++i)
            if (fold_f[i] != k) {
                x.push_back(forget_losses[i]);
                y.push_back(1);
            }
        for (std::size_t i = 0; i < test_losses.size(); ++i)
            if (fold_t[i] != k) {
                x.push_back(test_losses[i]);
                y.push_back(0);
            }
        const LogisticFit fit = LogisticFit::fit(x, y);
        int correct = 0, total = 0;
        for (std::size_t i = 0; i < forget_losses.size(); ++i)
            if (fold_f[i] == k) {
                correct += fit.predict(forget_losses[i]) ? 1 : 0;
                ++total;
            }
        for (std::size_t i = 0; i < test_losses.size(); ++i)
            if (fold_t[i] == k) {
                correct += fit.predict(test_losses[i]) ? 0 : 1;
                ++total;
            }
        acc_sum += static_cast<double>(correct) / static_cast<double>(total);
    }
    return acc_sum / static_cast<double>(folds);
}

}  // namespace

double mia_gap(std::span<const double> losses_unlearned_forget, std::span<const double> losses_unlearned_test,
               std::span<const double> losses_retrained_forget, std::span<const double> losses_retrained_test,
               int folds, std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("mia_gap: need at least 2 folds");
    for (auto s : {losses_unlearned_forget, losses_unlearned_test, losses_retrained_forget,
                   losses_retrained_test})
        if (s.size() < static_cast<std::size_t>(folds))
            throw std::invalid_argument("mia_gap: fewer examples than folds");
    // Fold assignment depends only on the seed and list sizes, so swapping
    // the two worlds swaps the scores and the gap is exactly symmetric.
    auto world_rng = [&](std::span<const double> f, std::span<const double> t) {
        return Rng(derive_seed(seed, "mia-folds", f.size(), t.size()));
    };
    Rng rng_u = world_rng(losses_unlearned_forget, losses_unlearned_test);
    Rng rng_r = world_rng(losses_retrained_forget, losses_retrained_test);
    const double score_u = mia_world_score(losses_unlearned_forget, losses_unlearned_test, folds, rng_u);
    const double score_r = mia_world_score(losses_retrained_forget, losses_retrained_test, folds, rng_r);
    return std::abs(score_u - score_r);
}

}  // namespace ulb
