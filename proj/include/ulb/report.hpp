#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ulb/harness.hpp"
#include "ulb/scoring.hpp"

namespace ulb {

// Fixed-bin histogram of one example's statistic samples under both worlds.
struct StatHistogram {
    int example = 0;
    double lo = 0.0, hi = 0.0;
    std::vector<int> unlearned, retrained;
};

std::vector<StatHistogram> stat_histograms(const CapturedStats& stats, int bins = 20);

struct EvalReport {
    int format_version = 1;
    std::vector<std::pair<std::string, std::string>> config;  // resolved config, verbatim
    std::string setup;
    double delta = 0.0;
    BinningConfig binning;
    std::vector<Scorecard> experiments;
    std::vector<StatHistogram> histograms;
};

// JSON report plus CSV side files <path>.eps.csv (one row per forget example,
// one column per estimate) and <path>.hist.csv (statistic histograms).
void emit_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

std::string report_summary(const EvalReport& report);

}  // namespace ulb
