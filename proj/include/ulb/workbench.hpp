#pragma once

#include <filesystem>
#include <string>

#include "ulb/config.hpp"
#include "ulb/harness.hpp"
#include "ulb/report.hpp"

namespace ulb {

// Everything an experiment run needs, resolved from one config file plus
// overrides. The resolved ConfigMap is echoed verbatim into reports.
struct Workbench {
    ConfigMap resolved;
    Dataset ds;
    Splits splits;
    ExperimentConfig cfg;
    std::filesystem::path store_dir;
    std::filesystem::path report_path;
};

// Builds the dataset (synthetic or CSV), splits, pipeline and experiment
// config from dotted keys; see the bundled example config for the schema.
Workbench workbench_from_config(const ConfigMap& cfg);

// Synthetic generation parameters only (for gen-data).
SyntheticSpec synthetic_spec_from_config(const ConfigMap& cfg);

// Preset name, or path to a pipeline config file.
PipelineSpec resolve_pipeline(const std::string& name_or_path);

// Runs the configured experiment and wraps the results into a report.
EvalReport run_and_report(const Workbench& wb, PoolStore& store);

}  // namespace ulb
