// Acceptance gate: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line each. Exit code 0 only if all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "ulb/harness.hpp"
#include "ulb/report.hpp"
#include "ulb/rng.hpp"
#include "ulb/workbench.hpp"

using namespace ulb;

namespace {

namespace fs = std::filesystem;

constexpr double kInf = std::numeric_limits<double>::infinity();

int pick_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return std::clamp(static_cast<int>(hw), 1, 8);
}

// ---------------------------------------------------------------------------
// the reference toy problem
// ---------------------------------------------------------------------------

SyntheticSpec toy_data_spec() {
    SyntheticSpec spec;
    spec.n_subjects = 250;
    spec.min_examples_per_subject = 7;
    spec.max_examples_per_subject = 9;
    spec.num_classes = 10;
    spec.feature_dim = 16;
    spec.imbalance_exponent = 1.0;
    spec.class_separation = 1.0;
    spec.subject_sigma = 2.5;
    spec.noise_sigma = 0.3;
    return spec;
}

struct Toy {
    Dataset ds;
    Splits splits;
    ExperimentConfig cfg;  // pipeline left empty; filled per use
};

Toy make_toy() {
    Toy toy;
    toy.ds = generate_synthetic(toy_data_spec(), 101);
    Splits partial = split_train_val_test(toy.ds, 0.8, 0.1, 0.1, 202);
    toy.splits = split_retain_forget(toy.ds, partial, 0.024, 303);
    toy.cfg.n = 64;
    toy.cfg.e = 5;
    toy.cfg.base_seed = 11;
    toy.cfg.workers = pick_workers();
    toy.cfg.arch = Architecture{{16, 32, 10}};
    toy.cfg.train_cfg.epochs = 30;
    toy.cfg.train_cfg.batch_size = 32;
    toy.cfg.train_cfg.lr = 0.05;
    toy.cfg.train_cfg.momentum = 0.9;
    toy.cfg.train_cfg.weight_decay = 0.0;
    return toy;
}

struct Gate {
    int passed = 0, failed = 0;

    void check(int index, const std::string& name, const std::function<bool(std::string&)>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = body(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%2d] %s  %-24s (%5.1f s)%s%s\n", index, ok ? "PASS" : "FAIL", name.c_str(), dt,
                    detail.empty() ? "" : "  ", detail.c_str());
        std::fflush(stdout);
        (ok ? passed : failed) += 1;
    }
};

bool close_to(double value, double target, double tol) { return std::abs(value - target) <= tol; }

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::vector<double> forgetting_samples(const std::vector<Scorecard>& cards) {
    std::vector<double> fs;
    for (const auto& c : cards) fs.push_back(c.forgetting);
    return fs;
}

bool intervals_overlap(const Interval& a, const Interval& b) { return a.hi >= b.lo && b.hi >= a.lo; }

}  // namespace

int main() {
    Gate gate;
    Toy toy = make_toy();
    const fs::path work = fs::temp_directory_path() / "ulb_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    PoolStore store(work / "store");

    std::printf("toy problem: %d examples, |S| = %zu, arch [16,32,10], workers %d\n", toy.ds.size(),
                toy.splits.forget.size(), toy.cfg.workers);

    // ------------------------------------------------------------------ 1
    gate.check(1, "eps formula suite", [&](std::string& detail) {
        bool ok = true;
        for (double delta : {0.0, 0.01, 0.2}) {
            const EpsEstimate perfect = eps_from_rates(0.0, 0.0, delta);
            ok &= perfect.kind == EpsEstimate::Kind::infinite;
        }
        ok &= eps_from_rates(0.0, 0.3, 0.0).kind == EpsEstimate::Kind::discard;
        ok &= eps_from_rates(0.3, 0.0, 0.0).kind == EpsEstimate::Kind::discard;
        const EpsEstimate even = eps_from_rates(0.5, 0.5, 0.0);
        ok &= even.kind == EpsEstimate::Kind::value && close_to(even.value, 0.0, 1e-12);
        const EpsEstimate hand = eps_from_rates(0.1, 0.2, 0.0);
        ok &= hand.kind == EpsEstimate::Kind::value && close_to(hand.value, std::log(8.0), 1e-12);
        detail = fmt("ln8 branch = %.15f", hand.value);
        return ok;
    });

    // ------------------------------------------------------------------ 2
    gate.check(2, "brute-force attack oracle", [&](std::string& detail) {
        EpsilonConfig cfg;
        Rng rng(777);
        int exact = 0;
        for (int trial = 0; trial < 200; ++trial) {
            const int n = 2 + static_cast<int>(rng.below(7));
            std::vector<double> u(static_cast<std::size_t>(n)), r(static_cast<std::size_t>(n));
            for (auto& v : u) v = 2.0 * rng.normal();
            const double shift = rng.uniform(-1.5, 1.5);
            for (auto& v : r) v = shift + 2.0 * rng.normal();
            if (trial % 4 == 0) {
                r[0] = u[0];  // exercise tied pooled values
                if (n > 3) r[1] = u[1];
            }
            const ExampleEpsilon mine = per_example_epsilon(u, r, cfg);
            const oracles::BruteForceEps ref = oracles::brute_force_epsilon(u, r, cfg.delta);
            const bool same = mine.all_discarded == ref.all_discarded &&
                              ((std::isinf(mine.eps) && std::isinf(ref.eps)) || mine.eps == ref.eps);
            exact += same ? 1 : 0;
        }
        detail = fmt("%d / 200 pairs exactly equal", exact);
        return exact == 200;
    });

    // ------------------------------------------------------------------ 3
    gate.check(3, "gradient correctness", [&](std::string& detail) {
        const Architecture arch{{3, 4, 2}};
        ClassWeights weights;
        weights.values.resize(2);
        weights.values << 0.7, 1.9;
        const LossKind kinds[] = {LossKind::ce,          LossKind::ce_entropy_mse, LossKind::ce_sym_kl,
                                  LossKind::kl_distill,  LossKind::mse_distill,    LossKind::uniform_kl,
                                  LossKind::contrastive, LossKind::neggrad_plus,   LossKind::l1_ce};
        double worst = 0.0;
        Rng rng(555);
        for (LossKind kind : kinds) {
            for (int net = 0; net < 100; ++net) {
                ParamsD params;
                ParamsD reference;
                LossBatch<double> batch;
                // redraw configurations whose pre-activations sit on the
                // rectifier kink, where central differences are undefined
                do {
                    const std::uint64_t seed = rng.next_u64();
                    params = init_params<double>(arch, seed);
                    Rng jitter(derive_seed(seed, "jitter"));
                    for (auto& w : params.weights)
                        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += 0.7 * jitter.normal();
                    for (auto& b : params.biases)
                        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * jitter.normal();
                    reference = init_params<double>(arch, derive_seed(seed, "ref"));

                    batch = LossBatch<double>{};
                    const int main_count = 4, aux_count = 3;
                    batch.main_x.resize(3, main_count);
                    batch.main_y.resize(main_count);
                    for (int i = 0; i < main_count; ++i) {
                        for (int d = 0; d < 3; ++d) batch.main_x(d, i) = jitter.normal();
                        batch.main_y[i] = static_cast<int>(jitter.below(2));
                    }
                    if (loss_needs_aux_group(kind) || kind == LossKind::kl_distill) {
                        batch.aux_x.resize(3, aux_count);
                        batch.aux_y.resize(aux_count);
                        for (int i = 0; i < aux_count; ++i) {
                            for (int d = 0; d < 3; ++d) batch.aux_x(d, i) = jitter.normal();
                            batch.aux_y[i] = static_cast<int>(jitter.below(2));
                        }
                    }
                } while (oracles::near_rectifier_kink(params, batch));
                LossSpec<double> spec;
                spec.kind = kind;
                if (loss_needs_reference(kind)) spec.reference = &reference;
                if (kind == LossKind::neggrad_plus) spec.alpha = 0.65;
                if (kind == LossKind::kl_distill) {
                    spec.alpha = 0.8;
                    spec.temperature = 1.3;
                }
                if (kind == LossKind::contrastive) spec.temperature = 2.0;
                if (kind == LossKind::l1_ce) spec.l1_weight = 0.03;

                const ParamsD analytic = loss_and_grad(params, batch, spec, weights).grads;
                const ParamsD fd = oracles::fd_gradients(params, batch, spec, weights);
                worst = std::max(worst, oracles::max_grad_deviation(analytic, fd));
            }
        }
        detail = fmt("worst relative deviation %.2e over 9 x 100 nets", worst);
        return worst <= 1e-4;
    });

    // ------------------------------------------------------------------ 4
    gate.check(4, "null calibration", [&](std::string& detail) {
        // Monte-Carlo null: strongest-attack eps on two same-distribution
        // continuous rows of n = 64 is rank-based, hence distribution-free.
        EpsilonConfig eps_cfg;
        Rng rng(4044);
        std::vector<double> null_eps;
        for (int trial = 0; trial < 300; ++trial) {
            std::vector<double> a(64), b(64);
            for (auto& v : a) v = rng.normal();
            for (auto& v : b) v = rng.normal();
            null_eps.push_back(per_example_epsilon(a, b, eps_cfg).eps);
        }
        std::sort(null_eps.begin(), null_eps.end());
        const double bound = quantile_sorted(null_eps, 0.95);

        ExperimentConfig cfg = toy.cfg;
        cfg.pipeline = make_preset("identity");
        const Scorecard card = run_self_calibration(cfg, toy.ds, toy.splits, store);
        const double observed = median(card.eps);
        detail = fmt("median eps %.3f <= null 95th pct %.3f", observed, bound);
        return observed <= bound;
    });

    // shared ordering runs for criteria 5-7
    const auto shared_t0 = std::chrono::steady_clock::now();
    struct AlgResult {
        std::string name;
        Interval full_ci, reuse_ci;
        double boot_mean = 0.0;
    };
    std::vector<AlgResult> algs;
    for (const char* name : {"identity", "finetune", "retrain_oracle"}) {
        AlgResult res;
        res.name = name;
        for (SetupKind setup : {SetupKind::full, SetupKind::reuse_n_n, SetupKind::bootstrap}) {
            ExperimentConfig cfg = toy.cfg;
            cfg.setup = setup;
            cfg.pipeline = make_preset(name);
            const auto cards = run_experiment(cfg, toy.ds, toy.splits, store);
            const Interval ci = confidence_interval(forgetting_samples(cards));
            if (setup == SetupKind::full) res.full_ci = ci;
            if (setup == SetupKind::reuse_n_n) res.reuse_ci = ci;
            if (setup == SetupKind::bootstrap) res.boot_mean = ci.mean;
        }
        algs.push_back(res);
    }
    const AlgResult& identity = algs[0];
    const AlgResult& finetune = algs[1];
    const AlgResult& oracle = algs[2];
    std::printf("     (shared full/reuse/bootstrap runs for criteria 5-7: %.1f s)\n",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - shared_t0).count());

    // ------------------------------------------------------------------ 5
    gate.check(5, "ordering property", [&](std::string& detail) {
        const bool separated = identity.full_ci.hi < oracle.full_ci.lo;
        const bool between = identity.full_ci.mean <= finetune.full_ci.mean &&
                             finetune.full_ci.mean <= oracle.full_ci.mean;
        const bool ties_side = intervals_overlap(finetune.full_ci, identity.full_ci) ||
                               intervals_overlap(finetune.full_ci, oracle.full_ci);
        detail = fmt("F(id) %.4f [%.4f,%.4f] < F(oracle) %.4f [%.4f,%.4f]; F(finetune) %.4f",
                     identity.full_ci.mean, identity.full_ci.lo, identity.full_ci.hi, oracle.full_ci.mean,
                     oracle.full_ci.lo, oracle.full_ci.hi, finetune.full_ci.mean);
        return separated && (between || ties_side);
    });

    // ------------------------------------------------------------------ 6
    gate.check(6, "setup stability", [&](std::string& detail) {
        auto order_of = [&](auto pick) {
            std::vector<int> idx{0, 1, 2};
            std::sort(idx.begin(), idx.end(), [&](int a, int b) {
                return pick(algs[static_cast<std::size_t>(a)]) > pick(algs[static_cast<std::size_t>(b)]);
            });
            return idx;
        };
        const auto full_rank = order_of([](const AlgResult& a) { return a.full_ci.mean; });
        const auto reuse_rank = order_of([](const AlgResult& a) { return a.reuse_ci.mean; });
        detail = fmt("full means %.4f/%.4f/%.4f, reuse %.4f/%.4f/%.4f", identity.full_ci.mean,
                     finetune.full_ci.mean, oracle.full_ci.mean, identity.reuse_ci.mean,
                     finetune.reuse_ci.mean, oracle.reuse_ci.mean);
        return full_rank == reuse_rank;  // Spearman 1 over the three algorithms
    });

    // ------------------------------------------------------------------ 7
    gate.check(7, "bootstrap fidelity", [&](std::string& detail) {
        bool ok = true;
        std::string parts;
        for (const AlgResult& a : algs) {
            const double gap = std::abs(a.boot_mean - a.full_ci.mean);
            const double half_width = (a.full_ci.hi - a.full_ci.lo) / 2.0;
            ok &= gap <= half_width;
            parts += fmt("%s %.4f<=%.4f ", a.name.c_str(), gap, half_width);
        }
        detail = parts;
        return ok;
    });

    // ------------------------------------------------------------------ 8
    gate.check(8, "compute accounting", [&](std::string& detail) {
        SyntheticSpec spec;
        spec.n_subjects = 40;
        spec.min_examples_per_subject = 2;
        spec.max_examples_per_subject = 3;
        spec.num_classes = 3;
        spec.feature_dim = 5;
        const Dataset ds = generate_synthetic(spec, 7);
        Splits partial = split_train_val_test(ds, 0.8, 0.1, 0.1, 11);
        const Splits splits = split_retain_forget(ds, partial, 0.08, 12);
        ExperimentConfig cfg;
        cfg.n = 4;
        cfg.e = 2;
        cfg.k = 8;
        cfg.base_seed = 3;
        cfg.workers = toy.cfg.workers;
        cfg.arch = Architecture{{5, 6, 3}};
        cfg.train_cfg.epochs = 2;
        cfg.train_cfg.lr = 0.05;
        cfg.pipeline = make_preset("finetune");

        bool ok = true;
        std::string parts;
        const struct {
            SetupKind setup;
            int originals, retrained;
        } expected[] = {
            {SetupKind::full, cfg.n * cfg.e, cfg.n * cfg.e},
            {SetupKind::reuse_n_n, cfg.n, cfg.n},
            {SetupKind::reuse_n_1, 1, cfg.n},
            {SetupKind::bootstrap, cfg.k, cfg.k},
        };
        int tag = 0;
        for (const auto& row : expected) {
            PoolStore fresh(work / ("accounting" + std::to_string(tag++)));
            cfg.setup = row.setup;
            run_experiment(cfg, ds, splits, fresh);
            const bool match =
                fresh.trainings("original") == row.originals && fresh.trainings("retrained") == row.retrained;
            ok &= match;
            parts += fmt("%s %d/%d ", setup_name(row.setup), fresh.trainings("original"),
                         fresh.trainings("retrained"));
        }
        detail = parts + "(original/retrained)";
        return ok;
    });

    // ------------------------------------------------------------------ 9
    gate.check(9, "scoring arithmetic", [&](std::string& detail) {
        bool ok = true;
        ok &= final_score(0.4, 0.95, 1.0, 0.90, 1.0) == 0.4 * 0.95 * 0.90;
        ok &= close_to(final_score(0.4, 0.95, 1.0, 0.90, 1.0), 0.342, 1e-12);
        ok &= final_score(0.7312, 0.91, 0.91, 0.83, 0.83) == 0.7312;  // unit ratios return F exactly
        ok &= close_to(accuracy_gap(0.936, 0.856), 0.080, 1e-12);
        ok &= accuracy_gap(0.5, 0.5) == 0.0;
        BinningConfig bins;
        ok &= h_points(0.0, bins) == 1.0;
        ok &= h_points(0.7, bins) == 0.5;
        ok &= h_points(kInf, bins) == 0.0;
        const std::vector<double> eps{0.0, 0.7};
        ok &= forgetting_quality(eps, bins) == 0.75;
        detail = fmt("eq2 product %.15f", final_score(0.4, 0.95, 1.0, 0.90, 1.0));
        return ok;
    });

    // ------------------------------------------------------------------ 10
    gate.check(10, "determinism", [&](std::string& detail) {
        std::ostringstream cfg_text;
        cfg_text << "data.subjects = 250\ndata.min_per_subject = 7\ndata.max_per_subject = 9\n"
                 << "data.classes = 10\ndata.features = 16\ndata.imbalance = 1.0\n"
                 << "data.class_separation = 1.0\ndata.subject_sigma = 2.5\ndata.noise_sigma = 0.3\n"
                 << "data.seed = 101\nsplit.seed = 202\nsplit.forget_fraction = 0.024\n"
                 << "arch.hidden = 32\ntrain.epochs = 30\ntrain.lr = 0.05\n"
                 << "eval.setup = reuse_n_n\neval.n = 16\neval.e = 2\neval.base_seed = 11\n"
                 << "eval.workers = " << toy.cfg.workers << "\npipeline.preset = finetune\n"
                 << "store.dir = " << (work / "det_store").string() << "\n"
                 << "report.path = " << (work / "det_report.json").string() << "\n";
        std::string bytes[2];
        for (int run = 0; run < 2; ++run) {
            const Workbench wb = workbench_from_config(ConfigMap::parse_text(cfg_text.str()));
            PoolStore det_store(wb.store_dir);
            emit_report(run_and_report(wb, det_store), wb.report_path);
            std::ifstream is(wb.report_path, std::ios::binary);
            std::stringstream ss;
            ss << is.rdbuf();
            bytes[run] = ss.str();
        }
        detail = fmt("report bytes %zu", bytes[0].size());
        return !bytes[0].empty() && bytes[0] == bytes[1];
    });

    // ------------------------------------------------------------------ 11
    gate.check(11, "runtime budget", [&](std::string& detail) {
        const ParamsF theta_o = train(toy.ds, toy.splits.train, toy.cfg.arch, toy.cfg.train_cfg, 1);
        std::vector<double> retrain_times;
        for (int i = 0; i < 3; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            train(toy.ds, toy.splits.retain, toy.cfg.arch, toy.cfg.train_cfg,
                  100 + static_cast<std::uint64_t>(i));
            retrain_times.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        const double retrain_s = median(retrain_times);

        RuntimeBudget budget;
        budget.fraction = 0.20;
        budget.reference_seconds = retrain_s;
        bool ok = true;
        double worst_ratio = 0.0;
        std::string over;
        for (const auto& name : preset_names()) {
            double best = kInf;
            // min over repeats absorbs scheduler noise at this tiny scale
            for (int rep = 0; rep < 3; ++rep) {
                const PipelineResult res = run_pipeline(make_preset(name), theta_o, toy.splits, toy.ds,
                                                        40 + static_cast<std::uint64_t>(rep), budget);
                best = std::min(best, res.elapsed_seconds);
            }
            const double ratio = best / retrain_s;
            worst_ratio = std::max(worst_ratio, ratio);
            if (ratio > budget.fraction) {
                ok = false;
                over += name + " ";
            }
        }
        // the flag contract itself
        RuntimeBudget impossible;
        impossible.fraction = 1e-9;
        impossible.reference_seconds = 1e-9;
        const PipelineResult flagged =
            run_pipeline(make_preset("finetune"), theta_o, toy.splits, toy.ds, 5, impossible);
        ok &= flagged.over_budget;
        detail = fmt("retrain %.3fs, worst preset ratio %.3f (cap 0.20), 1e-9 budget flags: %s%s%s",
                     retrain_s, worst_ratio, flagged.over_budget ? "yes" : "no",
                     over.empty() ? "" : "; over: ", over.c_str());
        return ok;
    });

    // ------------------------------------------------------------------ 12
    gate.check(12, "mia-gap nulls", [&](std::string& detail) {
        double worst = 0.0;
        for (std::uint64_t trial = 0; trial < 3; ++trial) {
            Rng rng(9000 + trial);
            auto draw = [&](int n) {
                std::vector<double> v(static_cast<std::size_t>(n));
                for (auto& x : v) x = rng.normal();
                return v;
            };
            const auto uf = draw(1000), ut = draw(1000), rf = draw(1000), rt = draw(1000);
            worst = std::max(worst, mia_gap(uf, ut, rf, rt, 10, 77 + trial));
        }
        detail = fmt("worst null gap %.4f (cap 0.05) over 3 seeded trials", worst);
        return worst <= 0.05;
    });

    std::printf("%d passed, %d failed\n", gate.passed, gate.failed);
    fs::remove_all(work);
    return gate.failed == 0 ? 0 : 1;
}
