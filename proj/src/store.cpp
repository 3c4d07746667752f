#include "ulb/store.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <fstream>

#include "ulb/checkpoint.hpp"
#include "ulb/parallel.hpp"

namespace ulb {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::string model_file(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "model_%06d.bin", index);
    return buf;
}

json read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) return json();
    json m;
    is >> m;
    return m;
}

void write_manifest_atomic(const std::filesystem::path& path, const json& m) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write manifest: " + tmp.string());
        os << m.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

PoolStore::PoolStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path PoolStore::pool_dir(const std::string& world, std::uint64_t config_hash) const {
    return dir_ / (world + "_" + hash_hex(config_hash));
}

int PoolStore::ensure_pool(const std::string& world, std::uint64_t config_hash, int count,
                           const SeedFn& seed_of, const TrainFn& train_model, int workers) {
    if (count < 0) throw std::invalid_argument("ensure_pool: negative count");
    const std::filesystem::path pd = pool_dir(world, config_hash);
    std::filesystem::create_directories(pd);
    const std::filesystem::path manifest_path = pd / "manifest.json";

    json manifest = read_manifest(manifest_path);
    if (!manifest.is_null()) {
        if (manifest.value("config_hash", std::string()) != hash_hex(config_hash))
            throw std::runtime_error("pool store: manifest config-hash mismatch in " + pd.string());
        if (manifest.value("world", std::string()) != world)
            throw std::runtime_error("pool store: manifest world mismatch in " + pd.string());
    } else {
        manifest = json{{"world", world}, {"config_hash", hash_hex(config_hash)}, {"entries", json::array()}};
    }

    std::unordered_map<int, std::uint64_t> existing;
    for (const auto& e : manifest["entries"]) {
        const int idx = e.at("index").get<int>();
        existing[idx] = e.at("seed").get<std::uint64_t>();
    }

    std::vector<int> missing;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t seed = seed_of(i);
        auto it = existing.find(i);
        if (it != existing.end()) {
            if (it->second != seed)
                throw std::runtime_error("pool store: seed mismatch for index " + std::to_string(i) + " in " +
                                         pd.string());
            if (std::filesystem::exists(pd / model_file(i))) continue;
        }
        missing.push_back(i);
    }

    std::atomic<int> trained{0};
    parallel_for(static_cast<int>(missing.size()), workers, [&](int j) {
        const int index = missing[static_cast<std::size_t>(j)];
        const std::uint64_t seed = seed_of(index);
        const ParamsF model = train_model(index, seed);
        const std::filesystem::path final_path = pd / model_file(index);
        const std::filesystem::path tmp = final_path.string() + ".tmp";
        save_checkpoint(model, tmp);
        std::filesystem::rename(tmp, final_path);
        trained.fetch_add(1);
    });

    // one manifest rewrite per build, under the store lock
    json entries = json::array();
    for (int i = 0; i < count; ++i)
        entries.push_back(json{{"index", i}, {"seed", seed_of(i)}, {"file", model_file(i)}});
    for (const auto& e : manifest["entries"])
        if (e.at("index").get<int>() >= count) entries.push_back(e);
    manifest["entries"] = entries;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        write_manifest_atomic(manifest_path, manifest);
        trainings_[world] += trained.load();
    }
    return trained.load();
}

ParamsF PoolStore::load(const std::string& world, std::uint64_t config_hash, int index) const {
    return load_checkpoint(pool_dir(world, config_hash) / model_file(index));
}

std::vector<std::pair<int, std::uint64_t>> PoolStore::manifest_entries(const std::string& world,
                                                                       std::uint64_t config_hash) const {
    const json manifest = read_manifest(pool_dir(world, config_hash) / "manifest.json");
    std::vector<std::pair<int, std::uint64_t>> out;
    if (manifest.is_null()) return out;
    for (const auto& e : manifest.at("entries"))
        out.emplace_back(e.at("index").get<int>(), e.at("seed").get<std::uint64_t>());
    return out;
}

int PoolStore::manifest_count(const std::string& world, std::uint64_t config_hash) const {
    return static_cast<int>(manifest_entries(world, config_hash).size());
}

int PoolStore::trainings(const std::string& world) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = trainings_.find(world);
    return it == trainings_.end() ? 0 : it->second;
}

int PoolStore::total_trainings() const {
    std::lock_guard<std::mutex> lock(mutex_);
    int total = 0;
    for (const auto& [_, n] : trainings_) total += n;
    return total;
}

}  // namespace ulb
