#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ulb/attack.hpp"
#include "ulb/data.hpp"
#include "ulb/scoring.hpp"
#include "ulb/store.hpp"
#include "ulb/train.hpp"
#include "ulb/unlearn.hpp"

namespace ulb {

// Sampling regimes trading evaluation fidelity for training cost.
enum class SetupKind { full, reuse_n_n, reuse_n_1, bootstrap };
const char* setup_name(SetupKind s);
SetupKind setup_from_name(const std::string& name);

struct ExperimentConfig {
    SetupKind setup = SetupKind::reuse_n_n;
    int n = 64;  // model samples per world per estimate
    int e = 20;  // estimates (for confidence intervals)
    int k = 0;   // bootstrap pool size; 0 means 8*n
    std::uint64_t base_seed = 1;
    int workers = 1;
    Architecture arch;
    TrainConfig train_cfg;
    PipelineSpec pipeline;
    EpsilonConfig eps_cfg;
    BinningConfig bin_cfg;
    RuntimeBudget budget;
    int unlearn_batch_size = 32;

    int bootstrap_pool() const { return k > 0 ? k : 8 * n; }
    void validate() const;
};

// Per-world pool identity; pools depend on the training recipe and data but
// not on the unlearning pipeline, so algorithms share them.
std::uint64_t pool_config_hash(const ExperimentConfig& cfg, const Dataset& ds, const Splits& splits,
                               const std::string& world);

// Trains (or reuses) `count` models of a world with seeds derived from the
// base seed; returns how many trainings this call performed.
int build_pool(const std::string& world, int count, const ExperimentConfig& cfg, const Dataset& ds,
               const Splits& splits, PoolStore& store);

// First estimate's statistic matrices, for histogram export.
struct CapturedStats {
    StatMatrix unlearned, retrained;
    bool valid = false;
};

// One Scorecard per estimate, per the configured setup.
std::vector<Scorecard> run_experiment(const ExperimentConfig& cfg, const Dataset& ds, const Splits& splits,
                                      PoolStore& store, CapturedStats* capture = nullptr);

// Bootstrapping: K (theta_o, theta_u, theta_r) triplets built once; each
// estimate resamples n of them with replacement.
std::vector<Scorecard> run_bootstrap(const ExperimentConfig& cfg, const Dataset& ds, const Splits& splits,
                                     PoolStore& store, CapturedStats* capture = nullptr);

// Null-calibration: evaluates one half of a 2n retrained pool against the
// other, i.e. both "worlds" are draws of the same distribution.
Scorecard run_self_calibration(const ExperimentConfig& cfg, const Dataset& ds, const Splits& splits,
                               PoolStore& store);

struct Interval {
    double mean = 0.0, lo = 0.0, hi = 0.0;
};

// Percentile interval (linear interpolation) plus the arithmetic mean.
Interval confidence_interval(std::span<const double> samples, double level = 0.95);

// Descending by mean score; algorithms whose intervals overlap the previous
// entry's chain into one tied group.
std::vector<std::vector<std::string>> rank_algorithms(
    const std::vector<std::pair<std::string, std::vector<double>>>& scores, double level = 0.95);

}  // namespace ulb
