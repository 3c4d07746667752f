#include "ulb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ulb/parallel.hpp"
#include "ulb/rng.hpp"

namespace ulb {

const char* setup_name(SetupKind s) {
    switch (s) {
        case SetupKind::full: return "full";
        case SetupKind::reuse_n_n: return "reuse_n_n";
        case SetupKind::reuse_n_1: return "reuse_n_1";
        case SetupKind::bootstrap: return "bootstrap";
    }
    throw std::logic_error("unknown setup");
}

SetupKind setup_from_name(const std::string& name) {
    for (SetupKind s : {SetupKind::full, SetupKind::reuse_n_n, SetupKind::reuse_n_1, SetupKind::bootstrap})
        if (name == setup_name(s)) return s;
    throw std::invalid_argument("unknown setup '" + name + "'");
}

void ExperimentConfig::validate() const {
    if (n < 2) throw std::invalid_argument("experiment: n must be >= 2");
    if (e < 1) throw std::invalid_argument("experiment: e must be >= 1");
    if (setup == SetupKind::bootstrap && bootstrap_pool() < n)
        throw std::invalid_argument("experiment: bootstrap pool must be >= n");
    if (workers < 1) throw std::invalid_argument("experiment: workers must be >= 1");
    arch.validate();
    train_cfg.validate();
    pipeline.validate();
    eps_cfg.validate();
    bin_cfg.validate();
    budget.validate();
}

namespace {

std::uint64_t fnv1a_bytes(const void* data, std::size_t size, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t dataset_fingerprint(const Dataset& ds) {
    std::uint64_t h = fnv1a("dataset-v1");
    h = fnv1a_bytes(ds.features.data(),
                    static_cast<std::size_t>(ds.features.size()) * sizeof(float), h);
    h = fnv1a_bytes(ds.labels.data(), ds.labels.size() * sizeof(int), h);
    h = fnv1a_bytes(ds.subjects.data(), ds.subjects.size() * sizeof(int), h);
    return h;
}

std::uint64_t splits_fingerprint(const Splits& sp) {
    std::uint64_t h = fnv1a("splits-v1");
    for (const auto* v : {&sp.train, &sp.val, &sp.test, &sp.retain, &sp.forget}) {
        h = fnv1a_bytes(v->data(), v->size() * sizeof(int), h);
        h = fnv1a_bytes("|", 1, h);
    }
    return h;
}

const std::vector<int>& world_train_indices(const std::string& world, const Splits& splits) {
    if (world == "original") return splits.train;
    if (world == "retrained") return splits.retain;
    throw std::logic_error("unknown world '" + world + "'");
}

}  // namespace

std::uint64_t pool_config_hash(const ExperimentConfig& cfg, const Dataset& ds, const Splits& splits,
                               const std::string& world) {
    std::ostringstream ident;
    ident << "world=" << world << ";seed=" << cfg.base_seed << ";arch=";
    for (int s : cfg.arch.layer_sizes) ident << s << ",";
    ident << ";epochs=" << cfg.train_cfg.epochs << ";batch=" << cfg.train_cfg.batch_size
          << ";lr=" << cfg.train_cfg.lr << ";momentum=" << cfg.train_cfg.momentum
          << ";wd=" << cfg.train_cfg.weight_decay << ";data=" << hash_hex(dataset_fingerprint(ds))
          << ";splits=" << hash_hex(splits_fingerprint(splits));
    return fnv1a(ident.str());
}

int build_pool(const std::string& world, int count, const ExperimentConfig& cfg, const Dataset& ds,
               const Splits& splits, PoolStore& store) {
    const std::uint64_t hash = pool_config_hash(cfg, ds, splits, world);
    const std::vector<int>& idx = world_train_indices(world, splits);
    return store.ensure_pool(
        world, hash, count,
        [&](int index) { return derive_seed(cfg.base_seed, world, static_cast<std::uint64_t>(index)); },
        [&](int, std::uint64_t seed) { return train(ds, idx, cfg.arch, cfg.train_cfg, seed); },
        cfg.workers);
}

namespace {

// Stats plus per-model accuracies for one world's model list.
struct WorldEval {
    StatMatrix stats;
    std::vector<double> retain_acc, test_acc, forget_acc;
    std::vector<char> over_budget;

    double mean(const std::vector<double>& v, std::span<const int> pick = {}) const {
        if (pick.empty()) {
            double s = std::accumulate(v.begin(), v.end(), 0.0);
            return s / static_cast<double>(v.size());
        }
        double s = 0.0;
        for (int i : pick) s += v[static_cast<std::size_t>(i)];
        return s / static_cast<double>(pick.size());
    }
};

using ModelProvider = std::function<ParamsF(int)>;

struct EvalInputs {
    const ExperimentConfig& cfg;
    const Dataset& ds;
    const Splits& splits;
};

WorldEval evaluate_world(const EvalInputs& in, World world, int count, const ModelProvider& provider) {
    WorldEval ev;
    ev.stats.world = world;
    ev.stats.values.resize(static_cast<Eigen::Index>(in.splits.forget.size()), count);
    ev.retain_acc.resize(static_cast<std::size_t>(count));
    ev.test_acc.resize(static_cast<std::size_t>(count));
    ev.forget_acc.resize(static_cast<std::size_t>(count));
    ev.over_budget.assign(static_cast<std::size_t>(count), 0);
    parallel_for(count, in.cfg.workers, [&](int j) {
        const ParamsF model = provider(j);
        for (std::size_t i = 0; i < in.splits.forget.size(); ++i) {
            const int idx = in.splits.forget[i];
            const VectorX<float> x = in.ds.features.col(idx);
            ev.stats.values(static_cast<Eigen::Index>(i), j) =
                logit_scale(confidence_correct(model, x, in.ds.labels[static_cast<std::size_t>(idx)]));
        }
        ev.retain_acc[static_cast<std::size_t>(j)] = accuracy(model, in.ds, in.splits.retain);
        ev.test_acc[static_cast<std::size_t>(j)] = accuracy(model, in.ds, in.splits.test);
        ev.forget_acc[static_cast<std::size_t>(j)] = accuracy(model, in.ds, in.splits.forget);
    });
    return ev;
}

Scorecard assemble_scorecard(const EvalInputs& in, const WorldEval& u, const WorldEval& r,
                             std::span<const int> pick_u = {}, std::span<const int> pick_r = {},
                             CapturedStats* capture = nullptr) {
    const ExperimentConfig& cfg = in.cfg;
    Scorecard card;

    StatMatrix us, rs;
    const StatMatrix* up = &u.stats;
    const StatMatrix* rp = &r.stats;
    if (!pick_u.empty()) {
        us.world = World::unlearned;
        us.values.resize(u.stats.values.rows(), static_cast<Eigen::Index>(pick_u.size()));
        for (std::size_t j = 0; j < pick_u.size(); ++j)
            us.values.col(static_cast<Eigen::Index>(j)) = u.stats.values.col(pick_u[j]);
        up = &us;
    }
    if (!pick_r.empty()) {
        rs.world = World::retrained;
        rs.values.resize(r.stats.values.rows(), static_cast<Eigen::Index>(pick_r.size()));
        for (std::size_t j = 0; j < pick_r.size(); ++j)
            rs.values.col(static_cast<Eigen::Index>(j)) = r.stats.values.col(pick_r[j]);
        rp = &rs;
    }

    if (capture && !capture->valid) {
        capture->unlearned = *up;
        capture->retrained = *rp;
        capture->valid = true;
    }
    const std::vector<ExampleEpsilon> eps = per_example_epsilons(*up, *rp, cfg.eps_cfg, cfg.workers);
    card.eps.reserve(eps.size());
    std::vector<double> capped;
    capped.reserve(eps.size());
    for (const auto& e : eps) {
        card.eps.push_back(e.eps);
        capped.push_back(std::min(e.eps, cfg.eps_cfg.eps_cap));
        card.all_discard_rows += e.all_discarded ? 1 : 0;
    }
    card.forgetting = forgetting_quality(capped, cfg.bin_cfg);
    card.retain_acc_unlearned = u.mean(u.retain_acc, pick_u);
    card.retain_acc_retrained = r.mean(r.retain_acc, pick_r);
    card.test_acc_unlearned = u.mean(u.test_acc, pick_u);
    card.test_acc_retrained = r.mean(r.test_acc, pick_r);
    card.forget_acc_unlearned = u.mean(u.forget_acc, pick_u);
    card.forget_acc_retrained = r.mean(r.forget_acc, pick_r);
    card.final = final_score(card.forgetting, card.retain_acc_unlearned, card.retain_acc_retrained,
                             card.test_acc_unlearned, card.test_acc_retrained);
    if (pick_u.empty()) {
        for (char f : u.over_budget) card.over_budget_runs += f;
    } else {
        for (int i : pick_u) card.over_budget_runs += u.over_budget[static_cast<std::size_t>(i)];
    }
    return card;
}

// Unlearns `count` models, one per index, fetching the source original model
// through `original_of`.
WorldEval evaluate_unlearned(const EvalInputs& in, int count, int experiment,
                             const std::function<ParamsF(int)>& original_of) {
    const ExperimentConfig& cfg = in.cfg;
    std::vector<char> over_budget(static_cast<std::size_t>(count), 0);
    WorldEval ev = evaluate_world(in, World::unlearned, count, [&](int j) -> ParamsF {
        const ParamsF theta_o = original_of(j);
        const std::uint64_t seed =
            derive_seed(cfg.base_seed, "unlearn", static_cast<std::uint64_t>(experiment),
                        static_cast<std::uint64_t>(j));
        PipelineRunOptions opts;
        opts.batch_size = cfg.unlearn_batch_size;
        PipelineResult res = run_pipeline(cfg.pipeline, theta_o, in.splits, in.ds, seed, cfg.budget, opts);
        if (res.over_budget) over_budget[static_cast<std::size_t>(j)] = 1;
        return std::move(res.params);
    });
    ev.over_budget = std::move(over_budget);
    return ev;
}

}  // namespace

std::vector<Scorecard> run_experiment(const ExperimentConfig& cfg, const Dataset& ds, const Splits& splits,
                                      PoolStore& store, CapturedStats* capture) {
    cfg.validate();
    if (splits.forget.empty()) throw std::invalid_argument("run_experiment: empty forget set");
    if (cfg.setup == SetupKind::bootstrap) return run_bootstrap(cfg, ds, splits, store, capture);

    const EvalInputs in{cfg, ds, splits};
    const std::uint64_t orig_hash = pool_config_hash(cfg, ds, splits, "original");
    const std::uint64_t retr_hash = pool_config_hash(cfg, ds, splits, "retrained");

    const int originals = cfg.setup == SetupKind::full ? cfg.n * cfg.e
                          : cfg.setup == SetupKind::reuse_n_n ? cfg.n
                                                              : 1;
    const int retrained = cfg.setup == SetupKind::full ? cfg.n * cfg.e : cfg.n;
    build_pool("original", originals, cfg, ds, splits, store);
    build_pool("retrained", retrained, cfg, ds, splits, store);

    std::vector<Scorecard> cards;
    cards.reserve(static_cast<std::size_t>(cfg.e));

    // retrained stats can be shared whenever the pool slice is shared
    WorldEval shared_retrained;
    if (cfg.setup != SetupKind::full)
        shared_retrained = evaluate_world(in, World::retrained, cfg.n,
                                          [&](int j) { return store.load("retrained", retr_hash, j); });

    for (int exp = 0; exp < cfg.e; ++exp) {
        WorldEval u, r;
        switch (cfg.setup) {
            case SetupKind::full: {
                const int offset = exp * cfg.n;
                u = evaluate_unlearned(in, cfg.n, exp,
                                       [&](int j) { return store.load("original", orig_hash, offset + j); });
                r = evaluate_world(in, World::retrained, cfg.n,
                                   [&](int j) { return store.load("retrained", retr_hash, offset + j); });
                break;
            }
            case SetupKind::reuse_n_n: {
                u = evaluate_unlearned(in, cfg.n, exp,
                                       [&](int j) { return store.load("original", orig_hash, j); });
                r = shared_retrained;
                break;
            }
            case SetupKind::reuse_n_1: {
                const ParamsF theta_o = store.load("original", orig_hash, 0);
                u = evaluate_unlearned(in, cfg.n, exp, [&](int) { return theta_o; });
                r = shared_retrained;
                break;
            }
            case SetupKind::bootstrap:
                throw std::logic_error("unreachable");
        }
        cards.push_back(assemble_scorecard(in, u, r, {}, {}, capture));
    }
    return cards;
}

std::vector<Scorecard> run_bootstrap(const ExperimentConfig& cfg, const Dataset& ds, const Splits& splits,
                                     PoolStore& store, CapturedStats* capture) {
    cfg.validate();
    if (splits.forget.empty()) throw std::invalid_argument("run_bootstrap: empty forget set");
    const EvalInputs in{cfg, ds, splits};
    const int pool = cfg.bootstrap_pool();
    const std::uint64_t orig_hash = pool_config_hash(cfg, ds, splits, "original");
    const std::uint64_t retr_hash = pool_config_hash(cfg, ds, splits, "retrained");
    build_pool("original", pool, cfg, ds, splits, store);
    build_pool("retrained", pool, cfg, ds, splits, store);

    // K triplets built once: experiment index 0 seeds the unlearning runs
    const WorldEval u = evaluate_unlearned(in, pool, 0, [&](int j) { return store.load("original", orig_hash, j); });
    const WorldEval r =
        evaluate_world(in, World::retrained, pool, [&](int j) { return store.load("retrained", retr_hash, j); });

    std::vector<Scorecard> cards;
    cards.reserve(static_cast<std::size_t>(cfg.e));
    for (int exp = 0; exp < cfg.e; ++exp) {
        Rng rng(derive_seed(cfg.base_seed, "bootstrap-resample", static_cast<std::uint64_t>(exp)));
        std::vector<int> pick(static_cast<std::size_t>(cfg.n));
        for (auto& p : pick) p = static_cast<int>(rng.below(static_cast<std::uint64_t>(pool)));
        cards.push_back(assemble_scorecard(in, u, r, pick, pick, capture));
    }
    return cards;
}

Scorecard run_self_calibration(const ExperimentConfig& cfg, const Dataset& ds, const Splits& splits,
                               PoolStore& store) {
    cfg.validate();
    const EvalInputs in{cfg, ds, splits};
    const std::uint64_t retr_hash = pool_config_hash(cfg, ds, splits, "retrained");
    build_pool("retrained", 2 * cfg.n, cfg, ds, splits, store);
    const WorldEval a = evaluate_world(in, World::unlearned, cfg.n,
                                       [&](int j) { return store.load("retrained", retr_hash, j); });
    const WorldEval b = evaluate_world(in, World::retrained, cfg.n,
                                       [&](int j) { return store.load("retrained", retr_hash, cfg.n + j); });
    return assemble_scorecard(in, a, b);
}

Interval confidence_interval(std::span<const double> samples, double level) {
    if (samples.size() < 2) throw std::invalid_argument("confidence_interval: need at least 2 samples");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence_interval: bad level");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    Interval ci;
    ci.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    const double tail = (1.0 - level) / 2.0;
    ci.lo = quantile_sorted(sorted, tail);
    ci.hi = quantile_sorted(sorted, 1.0 - tail);
    return ci;
}

std::vector<std::vector<std::string>> rank_algorithms(
    const std::vector<std::pair<std::string, std::vector<double>>>& scores, double level) {
    if (scores.empty()) throw std::invalid_argument("rank_algorithms: no algorithms");
    struct Row {
        std::string name;
        Interval ci;
    };
    std::vector<Row> rows;
    for (const auto& [name, samples] : scores) {
        if (samples.empty()) throw std::invalid_argument("rank_algorithms: empty score list for " + name);
        Row row{name, {}};
        if (samples.size() == 1)
            row.ci = {samples[0], samples[0], samples[0]};
        else
            row.ci = confidence_interval(samples, level);
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ci.mean > b.ci.mean; });

    std::vector<std::vector<std::string>> groups;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool overlaps_previous =
            i > 0 && rows[i].ci.hi >= rows[i - 1].ci.lo && rows[i - 1].ci.hi >= rows[i].ci.lo;
        if (i == 0 || !overlaps_previous) groups.emplace_back();
        groups.back().push_back(rows[i].name);
    }
    return groups;
}

}  // namespace ulb
