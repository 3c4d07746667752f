#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "ulb/loss.hpp"
#include "ulb/nn.hpp"

namespace oracles {

// Central finite differences of the loss over every parameter entry.
template <class BatchT, class SpecT>
ulb::ParamsD fd_gradients(const ulb::ParamsD& params, const BatchT& batch, const SpecT& spec,
                          const ulb::ClassWeights& weights, double step = 1e-4) {
    ulb::ParamsD grads = ulb::zeros_like(params);
    ulb::ParamsD probe = params;
    auto eval = [&]() { return ulb::loss_and_grad(probe, batch, spec, weights).loss; };
    auto central = [&](double& slot) {
        const double saved = slot;
        slot = saved + step;
        const double up = eval();
        slot = saved - step;
        const double down = eval();
        slot = saved;
        return (up - down) / (2.0 * step);
    };
    for (int l = 0; l < params.num_layers(); ++l) {
        auto li = static_cast<std::size_t>(l);
        for (Eigen::Index r = 0; r < params.weights[li].rows(); ++r)
            for (Eigen::Index c = 0; c < params.weights[li].cols(); ++c)
                grads.weights[li](r, c) = central(probe.weights[li](r, c));
        for (Eigen::Index r = 0; r < params.biases[li].size(); ++r)
            grads.biases[li][r] = central(probe.biases[li][r]);
    }
    return grads;
}

// Central differences are invalid across the rectifier kink; callers redraw
// any configuration whose hidden pre-activations come this close to zero.
template <class BatchT>
bool near_rectifier_kink(const ulb::ParamsD& params, const BatchT& batch, double margin = 1e-3) {
    auto scan = [&](const ulb::MatrixX<double>& x) {
        if (x.cols() == 0) return false;
        ulb::MatrixX<double> a = x;
        for (int l = 0; l + 1 < params.num_layers(); ++l) {
            const auto li = static_cast<std::size_t>(l);
            ulb::MatrixX<double> z = (params.weights[li] * a).colwise() + params.biases[li];
            if (z.cwiseAbs().minCoeff() < margin) return true;
            a = z.cwiseMax(0.0);
        }
        return false;
    };
    return scan(batch.main_x) || scan(batch.aux_x);
}

// Worst elementwise deviation |a - f| / (max(|a|, |f|) + floor).
inline double max_grad_deviation(const ulb::ParamsD& analytic, const ulb::ParamsD& fd) {
    double worst = 0.0;
    auto check = [&](double a, double f) {
        const double denom = std::max(std::abs(a), std::abs(f)) + 1e-5;
        worst = std::max(worst, std::abs(a - f) / denom);
    };
    for (int l = 0; l < analytic.num_layers(); ++l) {
        auto li = static_cast<std::size_t>(l);
        for (Eigen::Index r = 0; r < analytic.weights[li].rows(); ++r)
            for (Eigen::Index c = 0; c < analytic.weights[li].cols(); ++c)
                check(analytic.weights[li](r, c), fd.weights[li](r, c));
        for (Eigen::Index r = 0; r < analytic.biases[li].size(); ++r)
            check(analytic.biases[li][r], fd.biases[li][r]);
    }
    return worst;
}

// Exhaustive strongest-attack epsilon over every distinct single- and
// double-threshold rule on the pooled values, with naive counting and an
// inline restatement of the estimate formula.
struct BruteForceEps {
    double eps = 0.0;
    bool all_discarded = false;
};

inline BruteForceEps brute_force_epsilon(std::span<const double> u, std::span<const double> r,
                                         double delta) {
    std::vector<double> distinct(u.begin(), u.end());
    distinct.insert(distinct.end(), r.begin(), r.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    const double inf = std::numeric_limits<double>::infinity();
    double best = -inf;
    bool any = false;

    auto consider_region = [&](auto&& in_region) {
        for (int orient = 0; orient < 2; ++orient) {
            std::size_t u_in = 0, r_in = 0;
            for (double v : u) u_in += (in_region(v) != (orient == 1)) ? 1 : 0;
            for (double v : r) r_in += (in_region(v) != (orient == 1)) ? 1 : 0;
            const double fpr = static_cast<double>(r_in) / static_cast<double>(r.size());
            const double fnr = static_cast<double>(u.size() - u_in) / static_cast<double>(u.size());
            if (fpr == 0.0 && fnr == 0.0) {
                best = inf;
                any = true;
                continue;
            }
            if (fpr == 0.0 || fnr == 0.0) continue;
            const double a1 = (1.0 - delta - fpr) / fnr;
            const double a2 = (1.0 - delta - fnr) / fpr;
            if (a1 <= 0.0 && a2 <= 0.0) continue;
            double eps;
            if (a1 > 0.0 && a2 > 0.0)
                eps = std::max(std::log(a1), std::log(a2));
            else
                eps = std::log(a1 > 0.0 ? a1 : a2);
            any = true;
            best = std::max(best, eps);
        }
    };

    // single rules: cut below the minimum or at any distinct value
    std::vector<double> cuts;
    cuts.push_back(distinct.front() - 1.0);
    cuts.insert(cuts.end(), distinct.begin(), distinct.end());
    for (double t : cuts) consider_region([t](double v) { return v > t; });
    // double rules: (t1, t2] over the same cut set
    for (std::size_t a = 0; a < cuts.size(); ++a)
        for (std::size_t b = 0; b < distinct.size(); ++b) {
            if (distinct[b] <= cuts[a]) continue;
            const double t1 = cuts[a], t2 = distinct[b];
            consider_region([t1, t2](double v) { return v > t1 && v <= t2; });
        }

    if (!any) return {0.0, true};
    // no rule better than chance carries zero evidence
    return {best < 0.0 ? 0.0 : best, false};
}

}  // namespace oracles
