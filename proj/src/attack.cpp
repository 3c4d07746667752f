#include "ulb/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ulb/parallel.hpp"

namespace ulb {

void EpsilonConfig::validate() const {
    if (delta < 0.0 || delta >= 1.0) throw std::invalid_argument("epsilon: delta must be in [0,1)");
    if (quantile_grid < 2) throw std::invalid_argument("epsilon: quantile grid needs at least 2 points");
    if (!(eps_cap > 0.0)) throw std::invalid_argument("epsilon: cap must be positive");
    if (!(kde_mass_floor > 0.0) || kde_mass_floor >= 0.5)
        throw std::invalid_argument("epsilon: kde mass floor must be in (0, 0.5)");
}

StatMatrix collect_statistics(const std::vector<ParamsF>& models, const Dataset& ds,
                              const std::vector<int>& example_idx, World world, int workers) {
    if (models.size() < 2) throw std::invalid_argument("collect_statistics: need at least 2 models");
    if (example_idx.empty()) throw std::invalid_argument("collect_statistics: empty example set");
    const Architecture arch = models.front().arch();
    for (const auto& m : models)
        if (m.arch() != arch) throw std::invalid_argument("collect_statistics: architecture mismatch");

    StatMatrix out;
    out.world = world;
    out.values.resize(static_cast<Eigen::Index>(example_idx.size()), static_cast<Eigen::Index>(models.size()));
    parallel_for(static_cast<int>(models.size()), workers, [&](int j) {
        const ParamsF& model = models[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < example_idx.size(); ++i) {
            const int idx = example_idx[i];
            const VectorX<float> x = ds.features.col(idx);
            const double p = confidence_correct(model, x, ds.labels[static_cast<std::size_t>(idx)]);
            out.values(static_cast<Eigen::Index>(i), j) = logit_scale(p);
        }
    });
    return out;
}

void save_stat_csv(const StatMatrix& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    char buf[40];
    for (int i = 0; i < m.examples(); ++i) {
        for (int j = 0; j < m.samples(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m.values(i, j));
            os << (j ? "," : "") << buf;
        }
        os << "\n";
    }
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

StatMatrix load_stat_csv(const std::filesystem::path& path, World world) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(field, &used));
                if (used != field.size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad value '" +
                                         field + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().size() < 2)
        throw std::runtime_error(path.string() + ": need at least one row with two samples");
    StatMatrix m;
    m.world = world;
    m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

namespace {

// count of values <= t in an ascending-sorted row
std::size_t count_le(std::span<const double> sorted, double t) {
    return static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
}

Rates rates_from_counts(std::size_t in_region_u, std::size_t in_region_r, std::size_t nu, std::size_t nr) {
    Rates rates;
    rates.fpr = static_cast<double>(in_region_r) / static_cast<double>(nr);
    rates.fnr = static_cast<double>(nu - in_region_u) / static_cast<double>(nu);
    return rates;
}

}  // namespace

Rates rule_rates(const AttackRule& rule, std::span<const double> unlearned_row,
                 std::span<const double> retrained_row) {
    if (unlearned_row.empty() || retrained_row.empty())
        throw std::invalid_argument("rule_rates: empty row");
    auto in_region = [&](double v) {
        bool inside = rule.two_sided ? (v > rule.t1 && v <= rule.t2) : (v > rule.t1);
        return rule.complement ? !inside : inside;
    };
    std::size_t u_in = 0, r_in = 0;
    for (double v : unlearned_row) u_in += in_region(v) ? 1 : 0;
    for (double v : retrained_row) r_in += in_region(v) ? 1 : 0;
    return rates_from_counts(u_in, r_in, unlearned_row.size(), retrained_row.size());
}

EpsEstimate eps_from_rates(double fpr, double fnr, double delta) {
    if (fpr == 0.0 && fnr == 0.0) return {EpsEstimate::Kind::infinite, std::numeric_limits<double>::infinity()};
    if (fpr == 0.0 || fnr == 0.0) return {EpsEstimate::Kind::discard, 0.0};
    const double a1 = (1.0 - delta - fpr) / fnr;
    const double a2 = (1.0 - delta - fnr) / fpr;
    const bool v1 = a1 > 0.0;
    const bool v2 = a2 > 0.0;
    if (!v1 && !v2) return {EpsEstimate::Kind::discard, 0.0};
    double eps;
    if (v1 && v2)
        eps = std::max(std::log(a1), std::log(a2));
    else
        eps = std::log(v1 ? a1 : a2);
    return {EpsEstimate::Kind::value, eps};
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
    if (p <= 0.0) return sorted.front();
    if (p >= 1.0) return sorted.back();
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - std::floor(h);
    if (frac == 0.0) return sorted[lo];
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

namespace {

struct RegionCounts {
    std::size_t u_in = 0, r_in = 0;
};

struct SortedRows {
    std::vector<double> u, r;

    // positive region v > t
    RegionCounts single(double t) const {
        return {u.size() - count_le(u, t), r.size() - count_le(r, t)};
    }
    // positive region t1 < v <= t2
    RegionCounts double_rule(double t1, double t2) const {
        return {count_le(u, t2) - count_le(u, t1), count_le(r, t2) - count_le(r, t1)};
    }
};

struct BestTracker {
    double best = -std::numeric_limits<double>::infinity();
    bool any_valid = false;
    bool found_infinite = false;
    AttackRule best_rule;

    // Both orientations of one region, rates formed from integer counts so
    // complementary orientations stay exact.
    void feed(const RegionCounts& counts, std::size_t nu, std::size_t nr, const AttackRule& rule,
              double delta) {
        const Rates plain = rates_from_counts(counts.u_in, counts.r_in, nu, nr);
        consider(eps_from_rates(plain.fpr, plain.fnr, delta), rule);
        AttackRule comp = rule;
        comp.complement = true;
        const Rates flipped = rates_from_counts(nu - counts.u_in, nr - counts.r_in, nu, nr);
        consider(eps_from_rates(flipped.fpr, flipped.fnr, delta), comp);
    }

    void consider(const EpsEstimate& est, const AttackRule& rule) {
        if (est.kind == EpsEstimate::Kind::discard) return;
        any_valid = true;
        if (est.kind == EpsEstimate::Kind::infinite) {
            found_infinite = true;
            best = std::numeric_limits<double>::infinity();
            best_rule = rule;
            return;
        }
        if (est.value > best) {
            best = est.value;
            best_rule = rule;
        }
    }
};

// Enumerates the candidate families over the pooled values and feeds each
// rule (both orientations) to the tracker. Single thresholds sit at midpoints
// between consecutive distinct pooled order statistics, which is outcome-
// complete for single rules; double thresholds come from a Q-point
// linear-interpolation quantile grid of the pooled values.
void sweep_rules(const SortedRows& rows, const EpsilonConfig& cfg, BestTracker& tracker) {
    std::vector<double> pooled;
    pooled.reserve(rows.u.size() + rows.r.size());
    pooled.insert(pooled.end(), rows.u.begin(), rows.u.end());
    pooled.insert(pooled.end(), rows.r.begin(), rows.r.end());
    std::sort(pooled.begin(), pooled.end());

    const std::size_t nu = rows.u.size();
    const std::size_t nr = rows.r.size();
    for (std::size_t i = 0; i + 1 < pooled.size(); ++i) {
        if (pooled[i] == pooled[i + 1]) continue;
        const double t = pooled[i] + 0.5 * (pooled[i + 1] - pooled[i]);
        AttackRule rule{false, t, 0.0, false};
        tracker.feed(rows.single(t), nu, nr, rule, cfg.delta);
        if (tracker.found_infinite) return;
    }

    std::vector<double> grid(static_cast<std::size_t>(cfg.quantile_grid));
    for (int q = 0; q < cfg.quantile_grid; ++q)
        grid[static_cast<std::size_t>(q)] =
            quantile_sorted(pooled, static_cast<double>(q) / static_cast<double>(cfg.quantile_grid - 1));
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    for (std::size_t a = 0; a < grid.size(); ++a) {
        for (std::size_t b = a + 1; b < grid.size(); ++b) {
            AttackRule rule{true, grid[a], grid[b], false};
            tracker.feed(rows.double_rule(grid[a], grid[b]), nu, nr, rule, cfg.delta);
            if (tracker.found_infinite) return;
        }
    }
}

SortedRows sort_rows(std::span<const double> u, std::span<const double> r) {
    SortedRows rows;
    rows.u.assign(u.begin(), u.end());
    rows.r.assign(r.begin(), r.end());
    std::sort(rows.u.begin(), rows.u.end());
    std::sort(rows.r.begin(), rows.r.end());
    return rows;
}

}  // namespace

ExampleEpsilon per_example_epsilon(std::span<const double> unlearned_row,
                                   std::span<const double> retrained_row, const EpsilonConfig& cfg) {
    cfg.validate();
    if (unlearned_row.size() < 2 || retrained_row.size() < 2)
        throw std::invalid_argument("per_example_epsilon: rows need at least 2 samples");
    const SortedRows rows = sort_rows(unlearned_row, retrained_row);
    BestTracker tracker;
    sweep_rules(rows, cfg, tracker);
    if (!tracker.any_valid) return {0.0, true};
    // Heavily tied rows (clamped statistics) can leave only anti-predictive
    // rules; no rule beats chance, which is zero evidence, not negative.
    return {std::max(0.0, tracker.best), false};
}

double silverman_bandwidth(std::span<const double> values) {
    const auto n = static_cast<double>(values.size());
    if (values.size() < 2) return 1e-3;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= (n - 1.0);
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    double spread = std::sqrt(var);
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    double bw = 0.9 * spread * std::pow(n, -0.2);
    if (!(bw >= 1e-3)) bw = 1e-3;  // constant rows give a degenerate kernel otherwise
    return bw;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Probability mass of a rule's positive region under a Gaussian KDE.
double kde_region_mass(const AttackRule& rule, std::span<const double> centers, double bw) {
    double mass = 0.0;
    for (double c : centers) {
        double inside;
        if (rule.two_sided)
            inside = normal_cdf((rule.t2 - c) / bw) - normal_cdf((rule.t1 - c) / bw);
        else
            inside = 1.0 - normal_cdf((rule.t1 - c) / bw);
        mass += rule.complement ? (1.0 - inside) : inside;
    }
    return mass / static_cast<double>(centers.size());
}

}  // namespace

ExampleEpsilon per_example_epsilon_disentangled(std::span<const double> u_fit, std::span<const double> r_fit,
                                                std::span<const double> u_eval, std::span<const double> r_eval,
                                                const EpsilonConfig& cfg) {
    cfg.validate();
    if (u_fit.size() < 2 || r_fit.size() < 2 || u_eval.size() < 2 || r_eval.size() < 2)
        throw std::invalid_argument("per_example_epsilon_disentangled: rows need at least 2 samples");

    const SortedRows rows = sort_rows(u_fit, r_fit);
    BestTracker tracker;
    sweep_rules(rows, cfg, tracker);
    if (!tracker.any_valid) return {0.0, true};

    const double bw_u = silverman_bandwidth(u_eval);
    const double bw_r = silverman_bandwidth(r_eval);
    auto clamp_rate = [&](double v) {
        return std::min(1.0 - cfg.kde_mass_floor, std::max(cfg.kde_mass_floor, v));
    };
    const double fpr = clamp_rate(kde_region_mass(tracker.best_rule, r_eval, bw_r));
    const double fnr = clamp_rate(1.0 - kde_region_mass(tracker.best_rule, u_eval, bw_u));
    const EpsEstimate est = eps_from_rates(fpr, fnr, cfg.delta);
    if (est.kind == EpsEstimate::Kind::discard) return {0.0, true};
    // A fixed rule can be anti-predictive on fresh samples; that is evidence
    // of nothing, not negative evidence.
    return {std::max(0.0, est.value), false};
}

std::vector<ExampleEpsilon> per_example_epsilons(const StatMatrix& unlearned, const StatMatrix& retrained,
                                                 const EpsilonConfig& cfg, int workers) {
    cfg.validate();
    if (unlearned.examples() != retrained.examples())
        throw std::invalid_argument("per_example_epsilons: example count mismatch");
    const int rows = unlearned.examples();
    std::vector<ExampleEpsilon> out(static_cast<std::size_t>(rows));
    parallel_for(rows, workers, [&](int i) {
        const auto u = unlearned.row(i);
        const auto r = retrained.row(i);
        if (cfg.disentangled) {
            const std::size_t hu = u.size() / 2;
            const std::size_t hr = r.size() / 2;
            out[static_cast<std::size_t>(i)] = per_example_epsilon_disentangled(
                u.subspan(0, hu), r.subspan(0, hr), u.subspan(hu), r.subspan(hr), cfg);
        } else {
            out[static_cast<std::size_t>(i)] = per_example_epsilon(u, r, cfg);
        }
    });
    return out;
}

}  // namespace ulb
