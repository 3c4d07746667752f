#include "ulb/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ulb {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

ConfigMap ConfigMap::parse_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot open config file: " + path.string());
    std::stringstream buffer;
    buffer << is.rdbuf();
    return parse_text(buffer.str(), path.string());
}

ConfigMap ConfigMap::parse_text(const std::string& text, const std::string& origin) {
    ConfigMap cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw UsageError(origin + ":" + std::to_string(line_no) + ": empty key");
        cfg.set(key, value);
    }
    return cfg;
}

void ConfigMap::set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it != index_.end()) {
        entries_[it->second].second = value;
        return;
    }
    index_.emplace(key, entries_.size());
    entries_.emplace_back(key, value);
}

bool ConfigMap::has(const std::string& key) const { return index_.count(key) > 0; }

const std::string& ConfigMap::get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw UsageError("config: missing required key '" + key + "'");
    return entries_[it->second].second;
}

std::string ConfigMap::get_or(const std::string& key, const std::string& fallback) const {
    auto it = index_.find(key);
    return it == index_.end() ? fallback : entries_[it->second].second;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    auto [p, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || p != end)
        throw UsageError("config: key '" + key + "' has a non-numeric value '" + text + "'");
    return value;
}

template <>
double parse_number<double>(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw UsageError("config: key '" + key + "' has a non-numeric value '" + text + "'");
    }
}

}  // namespace

int ConfigMap::get_int(const std::string& key, int fallback) const {
    return has(key) ? parse_number<int>(key, get(key)) : fallback;
}
std::int64_t ConfigMap::get_i64(const std::string& key, std::int64_t fallback) const {
    return has(key) ? parse_number<std::int64_t>(key, get(key)) : fallback;
}
std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? parse_number<std::uint64_t>(key, get(key)) : fallback;
}
double ConfigMap::get_double(const std::string& key, double fallback) const {
    return has(key) ? parse_number<double>(key, get(key)) : fallback;
}
bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config: key '" + key + "' has a non-boolean value '" + v + "'");
}

void ConfigMap::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw UsageError("override must look like key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string ConfigMap::serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

void ConfigMap::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << serialize();
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace ulb
