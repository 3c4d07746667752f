#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace ulb {

// Bad command lines, missing/unparseable config files. Exit code 2 at the CLI.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat ordered key/value store backing the canonical experiment/pipeline file
// format: one "key = value" per line, '#' comments, dotted keys for nesting.
class ConfigMap {
public:
    static ConfigMap parse_file(const std::filesystem::path& path);
    static ConfigMap parse_text(const std::string& text, const std::string& origin = "<text>");

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    const std::string& get(const std::string& key) const;  // throws UsageError when absent
    std::string get_or(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::int64_t get_i64(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // "key=value"; applied after file load, inserting or replacing.
    void apply_override(const std::string& assignment);

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ulb
