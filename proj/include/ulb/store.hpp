#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "ulb/nn.hpp"

namespace ulb {

// FNV-1a over an identity string; stable across builds so manifests stay
// valid between runs.
std::uint64_t fnv1a(const std::string& text);
std::string hash_hex(std::uint64_t h);

// Directory of model checkpoints, one pool per (world, config-hash). Builds
// are idempotent: indices with a valid manifest entry and file are reused,
// missing ones are trained and written atomically (tmp + rename), and the
// manifest is rewritten once per build under a lock. Counts every training
// actually performed, which is what the compute-accounting checks read.
class PoolStore {
public:
    explicit PoolStore(std::filesystem::path dir);

    using TrainFn = std::function<ParamsF(int index, std::uint64_t seed)>;
    using SeedFn = std::function<std::uint64_t(int index)>;

    // Ensures indices [0, count) of the pool exist; returns how many models
    // were trained by this call. count = 0 creates just the (empty) manifest.
    int ensure_pool(const std::string& world, std::uint64_t config_hash, int count, const SeedFn& seed_of,
                    const TrainFn& train_model, int workers = 1);

    ParamsF load(const std::string& world, std::uint64_t config_hash, int index) const;

    // Entries recorded in the pool manifest (index -> seed).
    std::vector<std::pair<int, std::uint64_t>> manifest_entries(const std::string& world,
                                                                std::uint64_t config_hash) const;
    int manifest_count(const std::string& world, std::uint64_t config_hash) const;

    // Trainings performed through this store instance, by world.
    int trainings(const std::string& world) const;
    int total_trainings() const;

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path pool_dir(const std::string& world, std::uint64_t config_hash) const;

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, int> trainings_;
};

}  // namespace ulb
