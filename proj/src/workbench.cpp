#include "ulb/workbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "ulb/rng.hpp"

namespace ulb {

SyntheticSpec synthetic_spec_from_config(const ConfigMap& cfg) {
    SyntheticSpec spec;
    spec.n_subjects = cfg.get_int("data.subjects", spec.n_subjects);
    spec.min_examples_per_subject = cfg.get_int("data.min_per_subject", spec.min_examples_per_subject);
    spec.max_examples_per_subject = cfg.get_int("data.max_per_subject", spec.max_examples_per_subject);
    spec.num_classes = cfg.get_int("data.classes", spec.num_classes);
    spec.feature_dim = cfg.get_int("data.features", spec.feature_dim);
    spec.imbalance_exponent = cfg.get_double("data.imbalance", spec.imbalance_exponent);
    spec.class_separation = cfg.get_double("data.class_separation", spec.class_separation);
    spec.subject_sigma = cfg.get_double("data.subject_sigma", spec.subject_sigma);
    spec.noise_sigma = cfg.get_double("data.noise_sigma", spec.noise_sigma);
    return spec;
}

PipelineSpec resolve_pipeline(const std::string& name_or_path) {
    const auto& known = preset_names();
    if (std::find(known.begin(), known.end(), name_or_path) != known.end()) return make_preset(name_or_path);
    const auto& extra = evaluation_pipeline_names();
    if (std::find(extra.begin(), extra.end(), name_or_path) != extra.end()) return make_preset(name_or_path);
    if (std::filesystem::exists(name_or_path)) return pipeline_from_config(ConfigMap::parse_file(name_or_path));
    throw std::invalid_argument("'" + name_or_path + "' is neither a preset name nor a pipeline file");
}

namespace {

int config_version_check(const ConfigMap& cfg) {
    const int v = cfg.get_int("config.version", 1);
    if (v != 1) throw UsageError("unsupported config.version " + std::to_string(v));
    return v;
}

}  // namespace

Workbench workbench_from_config(const ConfigMap& cfg) {
    config_version_check(cfg);
    Workbench wb;
    wb.resolved = cfg;

    if (cfg.has("data.csv")) {
        wb.ds = load_csv(cfg.get("data.csv"));
    } else {
        wb.ds = generate_synthetic(synthetic_spec_from_config(cfg), cfg.get_u64("data.seed", 7));
    }

    const double train_f = cfg.get_double("split.train", 0.8);
    const double val_f = cfg.get_double("split.val", 0.1);
    const double test_f = cfg.get_double("split.test", 0.1);
    const std::uint64_t split_seed = cfg.get_u64("split.seed", 11);
    Splits partial = split_train_val_test(wb.ds, train_f, val_f, test_f, split_seed);
    wb.splits = split_retain_forget(wb.ds, partial, cfg.get_double("split.forget_fraction", 0.025),
                                    derive_seed(split_seed, "forget-partition"));

    ExperimentConfig& ec = wb.cfg;
    ec.setup = setup_from_name(cfg.get_or("eval.setup", "reuse_n_n"));
    ec.n = cfg.get_int("eval.n", 64);
    ec.e = cfg.get_int("eval.e", 20);
    ec.k = cfg.get_int("eval.k", 0);
    ec.base_seed = cfg.get_u64("eval.base_seed", 1);
    ec.workers = cfg.get_int("eval.workers", 4);
    ec.unlearn_batch_size = cfg.get_int("eval.unlearn_batch_size", 32);

    ec.arch.layer_sizes = {wb.ds.feature_dim()};
    {
        std::stringstream hidden(cfg.get_or("arch.hidden", "32"));
        std::string tok;
        while (std::getline(hidden, tok, ','))
            if (!tok.empty()) ec.arch.layer_sizes.push_back(std::stoi(tok));
    }
    ec.arch.layer_sizes.push_back(wb.ds.num_classes);

    ec.train_cfg.epochs = cfg.get_int("train.epochs", 30);
    ec.train_cfg.batch_size = cfg.get_int("train.batch_size", 32);
    ec.train_cfg.lr = cfg.get_double("train.lr", 0.05);
    ec.train_cfg.momentum = cfg.get_double("train.momentum", 0.9);
    ec.train_cfg.weight_decay = cfg.get_double("train.weight_decay", 0.0);

    // pipeline.preset takes a built-in name or a pipeline file path;
    // pipeline.file and inline pipeline.phases are the explicit forms.
    // Empty values count as unset so overrides can switch between them.
    const std::string preset = cfg.get_or("pipeline.preset", "");
    const std::string file = cfg.get_or("pipeline.file", "");
    const bool has_inline = !cfg.get_or("pipeline.phases", "").empty();
    const int choices = static_cast<int>(!preset.empty()) + static_cast<int>(!file.empty()) +
                        static_cast<int>(has_inline);
    if (choices != 1)
        throw UsageError("config: set exactly one of pipeline.preset, pipeline.file, pipeline.phases");
    if (!preset.empty())
        ec.pipeline = resolve_pipeline(preset);
    else if (!file.empty())
        ec.pipeline = pipeline_from_config(ConfigMap::parse_file(file));
    else
        ec.pipeline = pipeline_from_config(cfg);

    ec.eps_cfg.delta = cfg.get_double("epsilon.delta", 0.0);
    ec.eps_cfg.quantile_grid = cfg.get_int("epsilon.quantile_grid", 64);
    const std::string cap = cfg.get_or("epsilon.cap", "inf");
    ec.eps_cfg.eps_cap = cap == "inf" ? std::numeric_limits<double>::infinity() : std::stod(cap);
    ec.eps_cfg.disentangled = cfg.get_bool("epsilon.disentangled", false);

    ec.bin_cfg.bin_width = cfg.get_double("binning.width", 0.5);
    ec.bin_cfg.bins = cfg.get_int("binning.bins", 13);
    ec.bin_cfg.index_offset = cfg.get_int("binning.offset", 1);

    ec.budget.fraction = cfg.get_double("budget.fraction", 0.20);
    ec.budget.reference_seconds = cfg.get_double("budget.retrain_seconds", 0.0);

    std::string store_dir = cfg.get_or("store.dir", "");
    if (store_dir.empty()) {
        const char* env = std::getenv("ULB_STORE_DIR");
        store_dir = env && *env ? env : "store";
    }
    wb.store_dir = store_dir;
    wb.report_path = cfg.get_or("report.path", "report.json");

    ec.validate();
    return wb;
}

EvalReport run_and_report(const Workbench& wb, PoolStore& store) {
    CapturedStats captured;
    const std::vector<Scorecard> cards = run_experiment(wb.cfg, wb.ds, wb.splits, store, &captured);
    EvalReport report;
    report.config = wb.resolved.entries();
    report.setup = setup_name(wb.cfg.setup);
    report.delta = wb.cfg.eps_cfg.delta;
    report.binning = wb.cfg.bin_cfg;
    report.experiments = cards;
    report.histograms = stat_histograms(captured);
    return report;
}

}  // namespace ulb
