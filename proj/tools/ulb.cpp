#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "ulb/checkpoint.hpp"
#include "ulb/workbench.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output;
};

ulb::ConfigMap load_config(const CommonArgs& args) {
    ulb::ConfigMap cfg = ulb::ConfigMap::parse_file(args.config_path);
    for (const auto& ov : args.overrides) cfg.apply_override(ov);
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "experiment config file");
    if (config_required) opt->required();
    cmd->add_option("--override", args.overrides, "config override key=value (repeatable)");
    cmd->add_option("--output", args.output, "output path");
}

int cmd_gen_data(const CommonArgs& args) {
    const ulb::ConfigMap cfg = load_config(args);
    const ulb::Dataset ds =
        ulb::generate_synthetic(ulb::synthetic_spec_from_config(cfg), cfg.get_u64("data.seed", 7));
    const std::string out = !args.output.empty() ? args.output : cfg.get_or("data.out", "data.csv");
    ulb::save_csv(ds, out);
    std::cout << "wrote " << ds.size() << " examples (" << ds.num_classes << " classes, "
              << ds.feature_dim() << " features) to " << out << "\n";
    return 0;
}

int cmd_train_pool(const CommonArgs& args) {
    ulb::Workbench wb = ulb::workbench_from_config(load_config(args));
    ulb::PoolStore store(wb.store_dir);
    const int originals = wb.cfg.setup == ulb::SetupKind::full        ? wb.cfg.n * wb.cfg.e
                          : wb.cfg.setup == ulb::SetupKind::reuse_n_n ? wb.cfg.n
                          : wb.cfg.setup == ulb::SetupKind::reuse_n_1 ? 1
                                                                      : wb.cfg.bootstrap_pool();
    const int retrained = wb.cfg.setup == ulb::SetupKind::full        ? wb.cfg.n * wb.cfg.e
                          : wb.cfg.setup == ulb::SetupKind::bootstrap ? wb.cfg.bootstrap_pool()
                                                                      : wb.cfg.n;
    const int new_orig = ulb::build_pool("original", originals, wb.cfg, wb.ds, wb.splits, store);
    const int new_retr = ulb::build_pool("retrained", retrained, wb.cfg, wb.ds, wb.splits, store);
    std::cout << "pools ready in " << store.dir().string() << ": " << originals << " original ("
              << new_orig << " new), " << retrained << " retrained (" << new_retr << " new)\n";
    return 0;
}

int cmd_unlearn(const CommonArgs& args) {
    const ulb::ConfigMap cfg = load_config(args);
    ulb::Workbench wb = ulb::workbench_from_config(cfg);
    ulb::PoolStore store(wb.store_dir);

    ulb::ParamsF theta_o;
    if (cfg.has("unlearn.checkpoint")) {
        theta_o = ulb::load_checkpoint(cfg.get("unlearn.checkpoint"));
    } else {
        ulb::build_pool("original", 1, wb.cfg, wb.ds, wb.splits, store);
        theta_o = store.load("original", ulb::pool_config_hash(wb.cfg, wb.ds, wb.splits, "original"), 0);
    }
    ulb::PipelineRunOptions opts;
    opts.batch_size = wb.cfg.unlearn_batch_size;
    const ulb::PipelineResult res = ulb::run_pipeline(
        wb.cfg.pipeline, theta_o, wb.splits, wb.ds,
        ulb::derive_seed(wb.cfg.base_seed, "unlearn", 0, 0), wb.cfg.budget, opts);
    const std::string out = !args.output.empty() ? args.output : cfg.get_or("unlearn.out", "unlearned.bin");
    ulb::save_checkpoint(res.params, out);
    std::cout << "pipeline '" << wb.cfg.pipeline.name << "' finished in " << res.elapsed_seconds << " s";
    if (wb.cfg.budget.enabled())
        std::cout << (res.over_budget ? " [OVER BUDGET]" : " [within budget]");
    std::cout << "; wrote " << out << "\n";
    return 0;
}

int run_evaluation(const CommonArgs& args, bool force_bootstrap) {
    ulb::ConfigMap cfg = load_config(args);
    if (force_bootstrap) cfg.set("eval.setup", "bootstrap");
    ulb::Workbench wb = ulb::workbench_from_config(cfg);
    if (!args.output.empty()) wb.report_path = args.output;
    ulb::PoolStore store(wb.store_dir);
    const ulb::EvalReport report = ulb::run_and_report(wb, store);
    ulb::emit_report(report, wb.report_path);
    std::cout << ulb::report_summary(report);
    std::cout << "report: " << wb.report_path.string() << "\n";
    return 0;
}

int cmd_stitch(const CommonArgs& args) {
    const ulb::ConfigMap cfg = load_config(args);
    const ulb::PipelineSpec erase_from = ulb::resolve_pipeline(cfg.get("stitch.erase"));
    const ulb::PipelineSpec repair_from = ulb::resolve_pipeline(cfg.get("stitch.repair"));
    const ulb::PipelineSpec stitched = ulb::stitch(erase_from, repair_from);
    const std::string out = !args.output.empty() ? args.output : cfg.get_or("stitch.out", "stitched.cfg");
    ulb::pipeline_to_config(stitched).save(out);
    std::cout << "stitched pipeline '" << stitched.name << "' (" << stitched.phases.size()
              << " phases) -> " << out << "\n";
    return 0;
}

// Statistics-only scoring when stats.* files are given; otherwise summarizes
// an existing report.
int cmd_report(const CommonArgs& args) {
    const ulb::ConfigMap cfg = load_config(args);
    if (cfg.has("stats.unlearned") || cfg.has("stats.retrained")) {
        const ulb::StatMatrix u = ulb::load_stat_csv(cfg.get("stats.unlearned"), ulb::World::unlearned);
        const ulb::StatMatrix r = ulb::load_stat_csv(cfg.get("stats.retrained"), ulb::World::retrained);
        ulb::EpsilonConfig eps_cfg;
        eps_cfg.delta = cfg.get_double("epsilon.delta", 0.0);
        eps_cfg.quantile_grid = cfg.get_int("epsilon.quantile_grid", 64);
        eps_cfg.disentangled = cfg.get_bool("epsilon.disentangled", false);
        ulb::BinningConfig bin_cfg;
        bin_cfg.bin_width = cfg.get_double("binning.width", 0.5);
        bin_cfg.bins = cfg.get_int("binning.bins", 13);
        bin_cfg.index_offset = cfg.get_int("binning.offset", 1);

        ulb::Scorecard card;
        const auto eps = ulb::per_example_epsilons(u, r, eps_cfg, cfg.get_int("eval.workers", 4));
        std::vector<double> values;
        for (const auto& e : eps) {
            card.eps.push_back(e.eps);
            values.push_back(e.eps);
            card.all_discard_rows += e.all_discarded ? 1 : 0;
        }
        card.forgetting = ulb::forgetting_quality(values, bin_cfg);
        card.retain_acc_unlearned = cfg.get_double("acc.retain_unlearned", 1.0);
        card.retain_acc_retrained = cfg.get_double("acc.retain_retrained", 1.0);
        card.test_acc_unlearned = cfg.get_double("acc.test_unlearned", 1.0);
        card.test_acc_retrained = cfg.get_double("acc.test_retrained", 1.0);
        card.final = ulb::final_score(card.forgetting, card.retain_acc_unlearned, card.retain_acc_retrained,
                                      card.test_acc_unlearned, card.test_acc_retrained);

        ulb::EvalReport report;
        report.config = cfg.entries();
        report.setup = "statistics-only";
        report.delta = eps_cfg.delta;
        report.binning = bin_cfg;
        report.experiments = {card};
        const std::string out = !args.output.empty() ? args.output : cfg.get_or("report.path", "report.json");
        ulb::emit_report(report, out);
        std::cout << ulb::report_summary(report);
        std::cout << "report: " << out << "\n";
        return 0;
    }
    const ulb::EvalReport report = ulb::load_report(cfg.get("report.path"));
    std::cout << ulb::report_summary(report);
    return 0;
}

int cmd_presets(const std::string& export_name, const std::string& output) {
    if (!export_name.empty()) {
        const ulb::PipelineSpec spec = ulb::make_preset(export_name);
        const std::string out = output.empty() ? export_name + ".pipeline.cfg" : output;
        ulb::pipeline_to_config(spec).save(out);
        std::cout << "wrote " << out << "\n";
        return 0;
    }
    std::cout << "algorithm presets (defaults v" << ulb::preset_defaults_version() << "):\n";
    for (const auto& name : ulb::preset_names()) std::cout << "  " << name << "\n";
    std::cout << "evaluation pipelines:\n";
    for (const auto& name : ulb::evaluation_pipeline_names()) std::cout << "  " << name << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale machine-unlearning evaluation workbench"};
    app.require_subcommand(1);

    CommonArgs gen_args, pool_args, unlearn_args, eval_args, boot_args, stitch_args, report_args;
    std::string preset_export, preset_output;

    add_common(app.add_subcommand("gen-data", "generate a synthetic dataset CSV"), gen_args);
    add_common(app.add_subcommand("train-pool", "build original/retrained model pools"), pool_args);
    add_common(app.add_subcommand("unlearn", "run one unlearning pipeline, write a checkpoint"), unlearn_args);
    add_common(app.add_subcommand("evaluate", "run the configured evaluation, write a report"), eval_args);
    add_common(app.add_subcommand("bootstrap", "evaluate with the bootstrap setup"), boot_args);
    add_common(app.add_subcommand("stitch", "combine erase and repair phases of two pipelines"), stitch_args);
    add_common(app.add_subcommand("report", "score injected statistics or summarize a report"), report_args);
    auto* presets = app.add_subcommand("presets", "list built-in pipelines");
    presets->add_option("--export", preset_export, "write one preset as a pipeline config");
    presets->add_option("--output", preset_output, "output path for --export");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_args);
        if (app.got_subcommand("train-pool")) return cmd_train_pool(pool_args);
        if (app.got_subcommand("unlearn")) return cmd_unlearn(unlearn_args);
        if (app.got_subcommand("evaluate")) return run_evaluation(eval_args, false);
        if (app.got_subcommand("bootstrap")) return run_evaluation(boot_args, true);
        if (app.got_subcommand("stitch")) return cmd_stitch(stitch_args);
        if (app.got_subcommand("report")) return cmd_report(report_args);
        if (app.got_subcommand("presets")) return cmd_presets(preset_export, preset_output);
    } catch (const ulb::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
