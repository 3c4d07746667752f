#include "ulb/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ulb {

using nlohmann::json;

std::vector<StatHistogram> stat_histograms(const CapturedStats& stats, int bins) {
    std::vector<StatHistogram> out;
    if (!stats.valid || bins < 1) return out;
    const auto& u = stats.unlearned.values;
    const auto& r = stats.retrained.values;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        StatHistogram h;
        h.example = static_cast<int>(i);
        h.lo = std::min(u.row(i).minCoeff(), r.row(i).minCoeff());
        h.hi = std::max(u.row(i).maxCoeff(), r.row(i).maxCoeff());
        if (h.hi <= h.lo) h.hi = h.lo + 1.0;
        h.unlearned.assign(static_cast<std::size_t>(bins), 0);
        h.retrained.assign(static_cast<std::size_t>(bins), 0);
        auto bin_of = [&](double v) {
            int b = static_cast<int>(std::floor((v - h.lo) / (h.hi - h.lo) * bins));
            return std::clamp(b, 0, bins - 1);
        };
        for (Eigen::Index j = 0; j < u.cols(); ++j) h.unlearned[static_cast<std::size_t>(bin_of(u(i, j)))]++;
        for (Eigen::Index j = 0; j < r.cols(); ++j) h.retrained[static_cast<std::size_t>(bin_of(r(i, j)))]++;
        out.push_back(std::move(h));
    }
    return out;
}

namespace {

// JSON has no infinity literal; per-example eps uses "inf" strings instead.
json eps_to_json(double v) {
    if (std::isinf(v)) return json("inf");
    return json(v);
}

double eps_from_json(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw std::runtime_error("report: bad eps entry '" + j.get<std::string>() + "'");
    }
    return j.get<double>();
}

json card_to_json(const Scorecard& c) {
    json eps = json::array();
    for (double e : c.eps) eps.push_back(eps_to_json(e));
    return json{{"f", c.forgetting},
                {"final_score", c.final},
                {"retain_acc_unlearned", c.retain_acc_unlearned},
                {"retain_acc_retrained", c.retain_acc_retrained},
                {"test_acc_unlearned", c.test_acc_unlearned},
                {"test_acc_retrained", c.test_acc_retrained},
                {"forget_acc_unlearned", c.forget_acc_unlearned},
                {"forget_acc_retrained", c.forget_acc_retrained},
                {"eps", eps},
                {"all_discard_rows", c.all_discard_rows},
                {"over_budget_runs", c.over_budget_runs}};
}

Scorecard card_from_json(const json& j) {
    Scorecard c;
    c.forgetting = j.at("f").get<double>();
    c.final = j.at("final_score").get<double>();
    c.retain_acc_unlearned = j.at("retain_acc_unlearned").get<double>();
    c.retain_acc_retrained = j.at("retain_acc_retrained").get<double>();
    c.test_acc_unlearned = j.at("test_acc_unlearned").get<double>();
    c.test_acc_retrained = j.at("test_acc_retrained").get<double>();
    c.forget_acc_unlearned = j.at("forget_acc_unlearned").get<double>();
    c.forget_acc_retrained = j.at("forget_acc_retrained").get<double>();
    for (const auto& e : j.at("eps")) c.eps.push_back(eps_from_json(e));
    c.all_discard_rows = j.at("all_discard_rows").get<int>();
    c.over_budget_runs = j.at("over_budget_runs").get<int>();
    return c;
}

std::string format_double(double v) {
    if (std::isinf(v)) return "inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& path) {
    if (report.experiments.empty()) throw std::invalid_argument("emit_report: no experiments");
    json j;
    j["kind"] = "unlearnbench-report";
    j["format_version"] = report.format_version;
    j["setup"] = report.setup;
    j["delta"] = report.delta;
    j["binning"] = json{{"bin_width", report.binning.bin_width},
                        {"bins", report.binning.bins},
                        {"index_offset", report.binning.index_offset}};
    json config = json::array();
    for (const auto& [k, v] : report.config) config.push_back(json::array({k, v}));
    j["config"] = config;
    json experiments = json::array();
    for (const auto& card : report.experiments) experiments.push_back(card_to_json(card));
    j["experiments"] = experiments;
    if (report.experiments.size() >= 2) {
        std::vector<double> fs, finals;
        for (const auto& c : report.experiments) {
            fs.push_back(c.forgetting);
            finals.push_back(c.final);
        }
        const Interval fi = confidence_interval(fs);
        const Interval si = confidence_interval(finals);
        j["f_interval"] = json{{"mean", fi.mean}, {"lo", fi.lo}, {"hi", fi.hi}};
        j["final_interval"] = json{{"mean", si.mean}, {"lo", si.lo}, {"hi", si.hi}};
    }

    {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write report: " + path.string());
        os << j.dump(2) << "\n";
        if (!os) throw std::runtime_error("report write failed: " + path.string());
    }

    // eps side file: one row per forget example, one column per estimate
    {
        const std::filesystem::path eps_path = path.string() + ".eps.csv";
        std::ofstream os(eps_path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + eps_path.string());
        os << "example";
        for (std::size_t e = 0; e < report.experiments.size(); ++e) os << ",e" << e;
        os << "\n";
        const std::size_t rows = report.experiments.front().eps.size();
        for (std::size_t i = 0; i < rows; ++i) {
            os << i;
            for (const auto& card : report.experiments) os << ',' << format_double(card.eps[i]);
            os << "\n";
        }
    }

    {
        const std::filesystem::path hist_path = path.string() + ".hist.csv";
        std::ofstream os(hist_path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + hist_path.string());
        os << "example,world,lo,hi";
        const std::size_t bins = report.histograms.empty() ? 0 : report.histograms.front().unlearned.size();
        for (std::size_t b = 0; b < bins; ++b) os << ",b" << b;
        os << "\n";
        for (const auto& h : report.histograms) {
            for (const char* world : {"unlearned", "retrained"}) {
                os << h.example << ',' << world << ',' << format_double(h.lo) << ',' << format_double(h.hi);
                const auto& counts = std::string(world) == "unlearned" ? h.unlearned : h.retrained;
                for (int c : counts) os << ',' << c;
                os << "\n";
            }
        }
    }
}

EvalReport load_report(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open report: " + path.string());
    json j;
    is >> j;
    if (j.value("kind", std::string()) != "unlearnbench-report")
        throw std::runtime_error("not a report file: " + path.string());
    EvalReport r;
    r.format_version = j.at("format_version").get<int>();
    r.setup = j.at("setup").get<std::string>();
    r.delta = j.at("delta").get<double>();
    r.binning.bin_width = j.at("binning").at("bin_width").get<double>();
    r.binning.bins = j.at("binning").at("bins").get<int>();
    r.binning.index_offset = j.at("binning").at("index_offset").get<int>();
    for (const auto& kv : j.at("config"))
        r.config.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    for (const auto& e : j.at("experiments")) r.experiments.push_back(card_from_json(e));
    return r;
}

std::string report_summary(const EvalReport& report) {
    std::ostringstream os;
    os << "setup " << report.setup << ", delta " << report.delta << ", "
       << report.experiments.size() << " estimate(s)\n";
    int idx = 0;
    for (const auto& c : report.experiments) {
        os << "  [" << idx++ << "] F=" << c.forgetting << " final=" << c.final
           << " retain_u/r=" << c.retain_acc_unlearned << "/" << c.retain_acc_retrained
           << " test_u/r=" << c.test_acc_unlearned << "/" << c.test_acc_retrained;
        if (c.all_discard_rows > 0) os << " [warn: " << c.all_discard_rows << " all-discard rows]";
        if (c.over_budget_runs > 0) os << " [warn: " << c.over_budget_runs << " over-budget runs]";
        os << "\n";
    }
    if (report.experiments.size() >= 2) {
        std::vector<double> fs, finals;
        for (const auto& c : report.experiments) {
            fs.push_back(c.forgetting);
            finals.push_back(c.final);
        }
        const Interval fi = confidence_interval(fs);
        const Interval si = confidence_interval(finals);
        os << "  F mean " << fi.mean << " [" << fi.lo << ", " << fi.hi << "]\n";
        os << "  final mean " << si.mean << " [" << si.lo << ", " << si.hi << "]\n";
    }
    return os.str();
}

}  // namespace ulb
