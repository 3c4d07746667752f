#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ulb/config.hpp"
#include "ulb/data.hpp"
#include "ulb/loss.hpp"
#include "ulb/nn.hpp"
#include "ulb/train.hpp"

namespace ulb {

enum class PhaseKind { reinit, noise, descent, ascent_descent };
enum class PhaseRole { erase, repair };

enum class SelectorKind {
    weight_l1_bottom,  // bottom `fraction` of all weight entries by |w|
    grad_l1_bottom,    // bottom `fraction` of hidden-layer weight entries by probe |grad|
    random_layers,     // `layer_count` whole layers, seeded (clamped to the layer count)
    named_layers,      // explicit layer ids; negative ids index from the output end
};

enum class DataSource { retain, forget, forget_random_label, val, noisy_retain };

enum class LayerPolicy { hidden, output, all, random_subset };

enum class LrPolicy {
    uniform,
    reinit_gated,  // multiplier `lr_selected` on the last REINIT's entries, `lr_other` on other hidden weights
    salun_mask,    // binary gate from the gradient-saliency mask at `salun_threshold`
};

// One erase/repair step. Which fields matter depends on `kind`; validate()
// checks the active subset.
struct Phase {
    PhaseKind kind = PhaseKind::descent;
    PhaseRole role = PhaseRole::repair;

    // reinit
    SelectorKind selector = SelectorKind::weight_l1_bottom;
    double fraction = 0.0;
    double probe_alpha = 0.5;  // balance of the grad_l1_bottom probe loss
    int layer_count = 1;
    std::vector<int> layer_ids;

    // noise
    double sigma = 0.0;
    LayerPolicy layer_policy = LayerPolicy::hidden;
    double layer_prob = 0.5;  // random_subset selection probability

    // descent / ascent_descent
    LossKind loss = LossKind::ce;
    double alpha = 1.0;
    double l1_weight = 0.0;
    double temperature = 1.0;
    DataSource source = DataSource::retain;
    int epochs = 1;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
    LrPolicy lr_policy = LrPolicy::uniform;
    double lr_selected = 1.0;
    double lr_other = 0.1;
    double salun_threshold = 0.5;
    bool majority_reweight = false;
    double feature_noise = 0.1;  // additive feature sigma for noisy_retain

    void validate() const;
};

// An unlearning algorithm: ordered phases plus a name.
struct PipelineSpec {
    std::string name;
    std::vector<Phase> phases;

    void validate() const;
};

// Wall-time cut-off relative to a measured retrain-from-scratch time. A zero
// reference disables the check (and keeps reports free of timing state).
struct RuntimeBudget {
    double fraction = 0.20;
    double reference_seconds = 0.0;

    bool enabled() const { return reference_seconds > 0.0; }
    void validate() const;
};

// 1.0 marks selected parameter entries.
struct ParamMask {
    std::vector<MatrixX<float>> weights;
    std::vector<VectorX<float>> biases;

    static ParamMask zero(const ParamsF& shape);
    std::size_t selected_count() const;
};

// One ascent-gradient probe on the forget set; selects the top `threshold`
// fraction of parameter entries by gradient magnitude.
ParamMask salun_mask(const ParamsF& theta_o, const Splits& splits, const Dataset& ds, double threshold);

struct PipelineRunOptions {
    int batch_size = 32;
};

struct PipelineResult {
    ParamsF params;
    double elapsed_seconds = 0.0;
    bool over_budget = false;
};

// Applies one phase in isolation (no mask carry-over between calls; use
// run_pipeline for that). Untouched parameters come back bit-identical.
ParamsF apply_phase(const Phase& phase, const ParamsF& params, const ParamsF& theta_o, const Splits& splits,
                    const Dataset& ds, std::uint64_t seed, const PipelineRunOptions& opts = {});

// Applies the phases in order, each on a derived substream; never mutates
// theta_o. Exceeding the budget flags the result but keeps it.
PipelineResult run_pipeline(const PipelineSpec& spec, const ParamsF& theta_o, const Splits& splits,
                            const Dataset& ds, std::uint64_t seed, const RuntimeBudget& budget,
                            const PipelineRunOptions& opts = {});

// The thirteen documented algorithms.
const std::vector<std::string>& preset_names();
// Evaluation-only pipelines: identity, retrain_oracle.
const std::vector<std::string>& evaluation_pipeline_names();
int preset_defaults_version();

PipelineSpec make_preset(const std::string& name);

// Concatenates the erase-annotated phases of the first spec with the
// repair-annotated phases of the second; the name records provenance.
PipelineSpec stitch(const PipelineSpec& erase_from, const PipelineSpec& repair_from);

// Declarative plain-text form (key/value with a nested phase list).
ConfigMap pipeline_to_config(const PipelineSpec& spec);
PipelineSpec pipeline_from_config(const ConfigMap& cfg);

}  // namespace ulb
