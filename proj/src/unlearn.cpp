#include "ulb/unlearn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "ulb/rng.hpp"

namespace ulb {

namespace {

template <class Enum>
struct NameTable {
    std::vector<std::pair<Enum, const char*>> rows;
    const char* name(Enum e) const {
        for (const auto& [k, n] : rows)
            if (k == e) return n;
        throw std::logic_error("unknown enum value");
    }
    Enum value(const std::string& n, const char* what) const {
        for (const auto& [k, nm] : rows)
            if (n == nm) return k;
        throw std::invalid_argument(std::string("unknown ") + what + " '" + n + "'");
    }
};

const NameTable<PhaseKind> kPhaseKinds{{{PhaseKind::reinit, "reinit"},
                                        {PhaseKind::noise, "noise"},
                                        {PhaseKind::descent, "descent"},
                                        {PhaseKind::ascent_descent, "ascent_descent"}}};
const NameTable<PhaseRole> kPhaseRoles{{{PhaseRole::erase, "erase"}, {PhaseRole::repair, "repair"}}};
const NameTable<SelectorKind> kSelectors{{{SelectorKind::weight_l1_bottom, "weight_l1_bottom"},
                                          {SelectorKind::grad_l1_bottom, "grad_l1_bottom"},
                                          {SelectorKind::random_layers, "random_layers"},
                                          {SelectorKind::named_layers, "named_layers"}}};
const NameTable<DataSource> kSources{{{DataSource::retain, "retain"},
                                      {DataSource::forget, "forget"},
                                      {DataSource::forget_random_label, "forget_random_label"},
                                      {DataSource::val, "val"},
                                      {DataSource::noisy_retain, "noisy_retain"}}};
const NameTable<LayerPolicy> kLayerPolicies{{{LayerPolicy::hidden, "hidden"},
                                             {LayerPolicy::output, "output"},
                                             {LayerPolicy::all, "all"},
                                             {LayerPolicy::random_subset, "random_subset"}}};
const NameTable<LrPolicy> kLrPolicies{{{LrPolicy::uniform, "uniform"},
                                       {LrPolicy::reinit_gated, "reinit_gated"},
                                       {LrPolicy::salun_mask, "salun_mask"}}};

}  // namespace

void Phase::validate() const {
    switch (kind) {
        case PhaseKind::reinit:
            switch (selector) {
                case SelectorKind::weight_l1_bottom:
                case SelectorKind::grad_l1_bottom:
                    if (fraction < 0.0 || fraction > 1.0)
                        throw std::invalid_argument("reinit: fraction must be in [0,1]");
                    break;
                case SelectorKind::random_layers:
                    if (layer_count < 1) throw std::invalid_argument("reinit: layer_count must be >= 1");
                    break;
                case SelectorKind::named_layers:
                    if (layer_ids.empty()) throw std::invalid_argument("reinit: named_layers needs layer ids");
                    break;
            }
            break;
        case PhaseKind::noise:
            if (sigma < 0.0) throw std::invalid_argument("noise: sigma must be non-negative");
            if (layer_prob < 0.0 || layer_prob > 1.0)
                throw std::invalid_argument("noise: layer probability must be in [0,1]");
            break;
        case PhaseKind::descent:
        case PhaseKind::ascent_descent:
            if (epochs < 0) throw std::invalid_argument("phase: epochs must be non-negative");
            if (epochs > 0 && !(lr > 0)) throw std::invalid_argument("phase: lr must be positive");
            if (momentum < 0 || momentum >= 1) throw std::invalid_argument("phase: momentum must be in [0,1)");
            if (weight_decay < 0) throw std::invalid_argument("phase: weight_decay must be non-negative");
            if (kind == PhaseKind::ascent_descent &&
                !(loss == LossKind::neggrad_plus || loss == LossKind::kl_distill))
                throw std::invalid_argument("ascent_descent: loss must pair retain and forget groups");
            if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("phase: alpha must be in [0,1]");
            if (lr_policy == LrPolicy::salun_mask && !(salun_threshold > 0.0 && salun_threshold < 1.0))
                throw std::invalid_argument("phase: salun threshold must be in (0,1)");
            break;
    }
}

void PipelineSpec::validate() const {
    if (phases.empty()) throw std::invalid_argument("pipeline '" + name + "' has no phases");
    for (const auto& p : phases) p.validate();
}

void RuntimeBudget::validate() const {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("budget: fraction must be in (0,1]");
    if (reference_seconds < 0.0) throw std::invalid_argument("budget: negative reference time");
}

ParamMask ParamMask::zero(const ParamsF& shape) {
    ParamMask m;
    for (const auto& w : shape.weights) m.weights.push_back(MatrixX<float>::Zero(w.rows(), w.cols()));
    for (const auto& b : shape.biases) m.biases.push_back(VectorX<float>::Zero(b.size()));
    return m;
}

std::size_t ParamMask::selected_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>((w.array() != 0.0f).count());
    for (const auto& b : biases) n += static_cast<std::size_t>((b.array() != 0.0f).count());
    return n;
}

namespace {

struct PhaseContext {
    const Dataset& ds;
    const Splits& splits;
    const ParamsF& original;
    int batch_size;
    ClassWeights train_weights;
    int majority_class;
    std::optional<ParamMask> reinit_mask;
    std::optional<ParamMask> salun;
    double salun_threshold = -1.0;
};

PhaseContext make_context(const Dataset& ds, const Splits& splits, const ParamsF& original,
                          const PipelineRunOptions& opts) {
    if (opts.batch_size < 1) throw std::invalid_argument("pipeline: batch size must be >= 1");
    PhaseContext ctx{ds, splits, original, opts.batch_size, class_weights(ds, splits.train), 0, {}, {}};
    std::vector<int> counts(static_cast<std::size_t>(ds.num_classes), 0);
    for (int i : splits.train) counts[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])]++;
    ctx.majority_class =
        static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    return ctx;
}

// --- reinit -----------------------------------------------------------------

struct EntryRef {
    float magnitude;
    int layer;
    Eigen::Index row, col;
};

// Bottom `fraction` of the candidate entries by magnitude; ties and order
// resolved by (magnitude, layer, row, col) so relabeling cannot change the
// selected magnitude multiset.
std::vector<EntryRef> bottom_fraction(std::vector<EntryRef> entries, double fraction) {
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(entries.size())));
    if (fraction > 0.0 && k == 0)
        throw std::invalid_argument("reinit: selector selects zero parameters at fraction " +
                                    std::to_string(fraction));
    auto less = [](const EntryRef& a, const EntryRef& b) {
        if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
        if (a.layer != b.layer) return a.layer < b.layer;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    };
    std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k), entries.end(), less);
    entries.resize(k);
    std::sort(entries.begin(), entries.end(), less);
    return entries;
}

void redraw_entries(ParamsF& params, const std::vector<EntryRef>& selected, Rng& rng, ParamMask& mask) {
    // Fixed draw order: selected entries sorted by (layer, row, col).
    std::vector<EntryRef> ordered = selected;
    std::sort(ordered.begin(), ordered.end(), [](const EntryRef& a, const EntryRef& b) {
        if (a.layer != b.layer) return a.layer < b.layer;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });
    for (const auto& e : ordered) {
        const double bound = init_bound(static_cast<int>(params.weights[static_cast<std::size_t>(e.layer)].cols()));
        params.weights[static_cast<std::size_t>(e.layer)](e.row, e.col) =
            static_cast<float>(rng.uniform(-bound, bound));
        mask.weights[static_cast<std::size_t>(e.layer)](e.row, e.col) = 1.0f;
    }
}

void reinit_whole_layer(ParamsF& params, int layer, Rng& rng, ParamMask& mask) {
    auto li = static_cast<std::size_t>(layer);
    const double bound = init_bound(static_cast<int>(params.weights[li].cols()));
    auto& w = params.weights[li];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<float>(rng.uniform(-bound, bound));
    params.biases[li].setZero();
    mask.weights[li].setOnes();
    mask.biases[li].setOnes();
}

LossBatch<float> whole_set_batch(const Dataset& ds, const std::vector<int>& idx) {
    return gather_batch(ds, idx, 0, idx.size());
}

void apply_reinit(const Phase& phase, ParamsF& params, PhaseContext& ctx, Rng& rng) {
    ParamMask mask = ParamMask::zero(params);
    const int layers = params.num_layers();
    switch (phase.selector) {
        case SelectorKind::weight_l1_bottom: {
            std::vector<EntryRef> entries;
            for (int l = 0; l < layers; ++l) {
                const auto& w = params.weights[static_cast<std::size_t>(l)];
                for (Eigen::Index r = 0; r < w.rows(); ++r)
                    for (Eigen::Index c = 0; c < w.cols(); ++c)
                        entries.push_back({std::abs(w(r, c)), l, r, c});
            }
            redraw_entries(params, bottom_fraction(std::move(entries), phase.fraction), rng, mask);
            break;
        }
        case SelectorKind::grad_l1_bottom: {
            LossBatch<float> batch = whole_set_batch(ctx.ds, ctx.splits.retain);
            const LossBatch<float> forget = whole_set_batch(ctx.ds, ctx.splits.forget);
            batch.aux_x = forget.main_x;
            batch.aux_y = forget.main_y;
            LossSpec<float> probe;
            probe.kind = LossKind::neggrad_plus;
            probe.alpha = phase.probe_alpha;
            const ParamsF grads = loss_and_grad(params, batch, probe, ctx.train_weights).grads;
            std::vector<EntryRef> entries;
            for (int l = 0; l + 1 < layers; ++l) {  // hidden-layer weights only
                const auto& g = grads.weights[static_cast<std::size_t>(l)];
                for (Eigen::Index r = 0; r < g.rows(); ++r)
                    for (Eigen::Index c = 0; c < g.cols(); ++c)
                        entries.push_back({std::abs(g(r, c)), l, r, c});
            }
            redraw_entries(params, bottom_fraction(std::move(entries), phase.fraction), rng, mask);
            break;
        }
        case SelectorKind::random_layers: {
            std::vector<int> ids(static_cast<std::size_t>(layers));
            std::iota(ids.begin(), ids.end(), 0);
            rng.shuffle(ids);
            const int take = std::min(phase.layer_count, layers);
            ids.resize(static_cast<std::size_t>(take));
            std::sort(ids.begin(), ids.end());
            for (int l : ids) reinit_whole_layer(params, l, rng, mask);
            break;
        }
        case SelectorKind::named_layers: {
            std::vector<int> resolved;
            for (int id : phase.layer_ids) {
                const int l = id >= 0 ? id : layers + id;
                if (l < 0 || l >= layers)
                    throw std::invalid_argument("reinit: layer id " + std::to_string(id) + " out of range");
                resolved.push_back(l);
            }
            std::sort(resolved.begin(), resolved.end());
            resolved.erase(std::unique(resolved.begin(), resolved.end()), resolved.end());
            for (int l : resolved) reinit_whole_layer(params, l, rng, mask);
            break;
        }
    }
    ctx.reinit_mask = std::move(mask);
}

// --- noise ------------------------------------------------------------------

void apply_noise(const Phase& phase, ParamsF& params, PhaseContext& ctx, Rng& rng) {
    (void)ctx;
    if (phase.sigma == 0.0) return;
    const int layers = params.num_layers();
    std::vector<int> selected;
    switch (phase.layer_policy) {
        case LayerPolicy::hidden:
            for (int l = 0; l + 1 < layers; ++l) selected.push_back(l);
            break;
        case LayerPolicy::output:
            selected.push_back(layers - 1);
            break;
        case LayerPolicy::all:
            for (int l = 0; l < layers; ++l) selected.push_back(l);
            break;
        case LayerPolicy::random_subset:
            for (int l = 0; l < layers; ++l)
                if (rng.uniform() < phase.layer_prob) selected.push_back(l);
            break;
    }
    for (int l : selected) {
        auto& w = params.weights[static_cast<std::size_t>(l)];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                w(r, c) += static_cast<float>(phase.sigma * rng.normal());
    }
}

// --- gradient gating ----------------------------------------------------------

ParamMask build_salun_mask(const ParamsF& theta_o, const Splits& splits, const Dataset& ds,
                           double threshold, const ClassWeights& weights) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("salun_mask: threshold must be in (0,1)");
    const LossBatch<float> batch = gather_batch(ds, splits.forget, 0, splits.forget.size());
    LossSpec<float> spec;
    spec.kind = LossKind::ce;
    const ParamsF grads = loss_and_grad(theta_o, batch, spec, weights).grads;

    struct Ref {
        float magnitude;
        int layer;
        bool bias;
        Eigen::Index row, col;
    };
    std::vector<Ref> entries;
    for (int l = 0; l < grads.num_layers(); ++l) {
        const auto li = static_cast<std::size_t>(l);
        for (Eigen::Index r = 0; r < grads.weights[li].rows(); ++r)
            for (Eigen::Index c = 0; c < grads.weights[li].cols(); ++c)
                entries.push_back({std::abs(grads.weights[li](r, c)), l, false, r, c});
        for (Eigen::Index r = 0; r < grads.biases[li].size(); ++r)
            entries.push_back({std::abs(grads.biases[li][r]), l, true, r, 0});
    }
    const auto k = static_cast<std::size_t>(std::llround(threshold * static_cast<double>(entries.size())));
    auto greater = [](const Ref& a, const Ref& b) {
        if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
        if (a.layer != b.layer) return a.layer < b.layer;
        if (a.bias != b.bias) return !a.bias;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    };
    std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k), entries.end(), greater);
    entries.resize(k);

    ParamMask mask = ParamMask::zero(theta_o);
    for (const auto& e : entries) {
        const auto li = static_cast<std::size_t>(e.layer);
        if (e.bias)
            mask.biases[li][e.row] = 1.0f;
        else
            mask.weights[li](e.row, e.col) = 1.0f;
    }
    return mask;
}

// Entry-wise gradient multipliers realizing the phase's lr policy, or nullopt
// for uniform.
std::optional<ParamMask> gating_multipliers(const Phase& phase, PhaseContext& ctx, const ParamsF& shape) {
    if (phase.lr_policy == LrPolicy::uniform) return std::nullopt;
    if (phase.lr_policy == LrPolicy::reinit_gated) {
        if (!ctx.reinit_mask)
            throw std::invalid_argument("descent: reinit_gated lr policy needs an earlier reinit phase");
        ParamMask mult = ParamMask::zero(shape);
        const int layers = shape.num_layers();
        const auto selected = static_cast<float>(phase.lr_selected);
        for (int l = 0; l < layers; ++l) {
            const auto li = static_cast<std::size_t>(l);
            const bool hidden = l + 1 < layers;
            const float other_w = hidden ? static_cast<float>(phase.lr_other) : 1.0f;
            const auto& mw = ctx.reinit_mask->weights[li];
            auto& ow = mult.weights[li];
            for (Eigen::Index r = 0; r < mw.rows(); ++r)
                for (Eigen::Index c = 0; c < mw.cols(); ++c) ow(r, c) = mw(r, c) != 0.0f ? selected : other_w;
            const auto& mb = ctx.reinit_mask->biases[li];
            auto& ob = mult.biases[li];
            for (Eigen::Index r = 0; r < mb.size(); ++r) ob[r] = mb[r] != 0.0f ? selected : 1.0f;
        }
        return mult;
    }
    // salun_mask: binary gate, cached per threshold
    if (!ctx.salun || ctx.salun_threshold != phase.salun_threshold) {
        ctx.salun = build_salun_mask(ctx.original, ctx.splits, ctx.ds, phase.salun_threshold, ctx.train_weights);
        ctx.salun_threshold = phase.salun_threshold;
    }
    return *ctx.salun;
}

void gate_gradients(ParamsF& grads, const ParamMask& mult) {
    for (int l = 0; l < grads.num_layers(); ++l) {
        const auto li = static_cast<std::size_t>(l);
        grads.weights[li] = grads.weights[li].cwiseProduct(mult.weights[li]);
        grads.biases[li] = grads.biases[li].cwiseProduct(mult.biases[li]);
    }
}

// --- descent ------------------------------------------------------------------

const std::vector<int>& source_indices(DataSource source, const Splits& splits) {
    switch (source) {
        case DataSource::retain:
        case DataSource::noisy_retain:
            return splits.retain;
        case DataSource::forget:
        case DataSource::forget_random_label:
            return splits.forget;
        case DataSource::val:
            return splits.val;
    }
    throw std::logic_error("unreachable");
}

void run_descent(const Phase& phase, ParamsF& params, PhaseContext& ctx, Rng& rng) {
    const std::vector<int>& idx = source_indices(phase.source, ctx.splits);
    if (idx.empty()) throw std::invalid_argument("descent: data source is empty");

    // random labels are drawn once per phase
    std::vector<int> label_override;
    if (phase.source == DataSource::forget_random_label) {
        label_override.resize(idx.size());
        for (auto& y : label_override) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(ctx.ds.num_classes)));
    }

    LossSpec<float> spec;
    spec.kind = phase.loss;
    spec.alpha = phase.alpha;
    spec.l1_weight = phase.l1_weight;
    spec.temperature = phase.temperature;
    if (loss_needs_reference(phase.loss)) spec.reference = &ctx.original;

    const ClassWeights uniform = ClassWeights::uniform(ctx.ds.num_classes);
    const ClassWeights& weights = phase.majority_reweight ? uniform : ctx.train_weights;
    const std::optional<ParamMask> gate = gating_multipliers(phase, ctx, params);

    OptimizerState<float> opt = OptimizerState<float>::zero(params);
    std::vector<std::size_t> positions(idx.size());

    for (int epoch = 0; epoch < phase.epochs; ++epoch) {
        // shuffle positions so label overrides follow their examples
        std::iota(positions.begin(), positions.end(), std::size_t{0});
        rng.shuffle(positions);
        for (std::size_t at = 0; at < positions.size(); at += static_cast<std::size_t>(ctx.batch_size)) {
            const std::size_t stop = std::min(positions.size(), at + static_cast<std::size_t>(ctx.batch_size));
            const auto count = static_cast<Eigen::Index>(stop - at);
            LossBatch<float> batch;
            batch.main_x.resize(ctx.ds.feature_dim(), count);
            batch.main_y.resize(count);
            for (std::size_t i = at; i < stop; ++i) {
                const std::size_t pos = positions[i];
                const int src = idx[pos];
                const auto dst = static_cast<Eigen::Index>(i - at);
                batch.main_x.col(dst) = ctx.ds.features.col(src);
                batch.main_y[dst] = label_override.empty() ? ctx.ds.labels[static_cast<std::size_t>(src)]
                                                           : label_override[pos];
            }
            if (phase.source == DataSource::noisy_retain)
                for (Eigen::Index c = 0; c < batch.main_x.cols(); ++c)
                    for (Eigen::Index r = 0; r < batch.main_x.rows(); ++r)
                        batch.main_x(r, c) += static_cast<float>(phase.feature_noise * rng.normal());
            if (phase.majority_reweight) {
                batch.multipliers.resize(count);
                for (Eigen::Index i = 0; i < count; ++i)
                    batch.multipliers[i] = batch.main_y[i] == ctx.majority_class ? 1.0 : 0.05;
            }
            if (phase.loss == LossKind::contrastive) {
                const std::vector<int>& pool = ctx.splits.retain;
                const auto m = static_cast<Eigen::Index>(std::min<std::size_t>(
                    pool.size(), static_cast<std::size_t>(ctx.batch_size)));
                batch.aux_x.resize(ctx.ds.feature_dim(), m);
                batch.aux_y.resize(m);
                for (Eigen::Index j = 0; j < m; ++j) {
                    const int src = pool[rng.below(pool.size())];
                    batch.aux_x.col(j) = ctx.ds.features.col(src);
                    batch.aux_y[j] = ctx.ds.labels[static_cast<std::size_t>(src)];
                }
            }
            LossResult<float> res = loss_and_grad(params, batch, spec, weights);
            if (gate) gate_gradients(res.grads, *gate);
            sgd_momentum_step(params, res.grads, opt, phase.lr, phase.momentum, phase.weight_decay);
        }
    }
}

void run_ascent_descent(const Phase& phase, ParamsF& params, PhaseContext& ctx, Rng& rng) {
    const std::vector<int>& retain = ctx.splits.retain;
    const std::vector<int>& forget = ctx.splits.forget;
    if (retain.empty() || forget.empty())
        throw std::invalid_argument("ascent_descent: needs non-empty retain and forget sets");

    LossSpec<float> spec;
    spec.kind = phase.loss;
    spec.alpha = phase.alpha;
    spec.temperature = phase.temperature;
    if (loss_needs_reference(phase.loss)) spec.reference = &ctx.original;

    OptimizerState<float> opt = OptimizerState<float>::zero(params);
    std::vector<int> order = retain;
    for (int epoch = 0; epoch < phase.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(ctx.batch_size)) {
            const std::size_t stop = std::min(order.size(), at + static_cast<std::size_t>(ctx.batch_size));
            LossBatch<float> batch = gather_batch(ctx.ds, order, at, stop);
            const auto m = static_cast<Eigen::Index>(std::min<std::size_t>(
                forget.size(), static_cast<std::size_t>(ctx.batch_size)));
            batch.aux_x.resize(ctx.ds.feature_dim(), m);
            batch.aux_y.resize(m);
            for (Eigen::Index j = 0; j < m; ++j) {
                const int src = forget[rng.below(forget.size())];
                batch.aux_x.col(j) = ctx.ds.features.col(src);
                batch.aux_y[j] = ctx.ds.labels[static_cast<std::size_t>(src)];
            }
            LossResult<float> res = loss_and_grad(params, batch, spec, ctx.train_weights);
            sgd_momentum_step(params, res.grads, opt, phase.lr, phase.momentum, phase.weight_decay);
        }
    }
}

void apply_phase_impl(const Phase& phase, ParamsF& params, PhaseContext& ctx, std::uint64_t seed) {
    phase.validate();
    Rng rng(derive_seed(seed, "phase-apply"));
    switch (phase.kind) {
        case PhaseKind::reinit:
            apply_reinit(phase, params, ctx, rng);
            break;
        case PhaseKind::noise:
            apply_noise(phase, params, ctx, rng);
            break;
        case PhaseKind::descent:
            run_descent(phase, params, ctx, rng);
            break;
        case PhaseKind::ascent_descent:
            run_ascent_descent(phase, params, ctx, rng);
            break;
    }
}

}  // namespace

ParamMask salun_mask(const ParamsF& theta_o, const Splits& splits, const Dataset& ds, double threshold) {
    return build_salun_mask(theta_o, splits, ds, threshold, class_weights(ds, splits.train));
}

ParamsF apply_phase(const Phase& phase, const ParamsF& params, const ParamsF& theta_o, const Splits& splits,
                    const Dataset& ds, std::uint64_t seed, const PipelineRunOptions& opts) {
    PhaseContext ctx = make_context(ds, splits, theta_o, opts);
    ParamsF out = params;
    apply_phase_impl(phase, out, ctx, seed);
    return out;
}

PipelineResult run_pipeline(const PipelineSpec& spec, const ParamsF& theta_o, const Splits& splits,
                            const Dataset& ds, std::uint64_t seed, const RuntimeBudget& budget,
                            const PipelineRunOptions& opts) {
    spec.validate();
    budget.validate();
    PhaseContext ctx = make_context(ds, splits, theta_o, opts);
    PipelineResult result;
    result.params = theta_o;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < spec.phases.size(); ++i)
        apply_phase_impl(spec.phases[i], result.params, ctx, derive_seed(seed, "pipeline-phase", i));
    result.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.over_budget = budget.enabled() && result.elapsed_seconds > budget.fraction * budget.reference_seconds;
    return result;
}

// --- presets --------------------------------------------------------------

// Desk-scale defaults, v1. Reinit fractions, noise sigmas, alpha balances and
// the saliency threshold follow the published recipes; epoch counts and
// learning rates were tuned once on the bundled toy problem and frozen.
namespace defaults {

constexpr int kVersion = 1;

constexpr double kRepairLr = 0.02;
constexpr double kEraseLr = 0.01;
constexpr double kMomentum = 0.9;

constexpr double kFinetuneLr = 0.05;
constexpr double kFinetuneWeightDecay = 5e-4;
constexpr double kNeggradAlpha = 0.99999;
constexpr double kScrubAlpha = 0.99;
constexpr double kL1Weight = 1e-4;
constexpr double kSebastianFraction = 0.99;
constexpr double kKookminFraction = 0.30;
constexpr double kKookminOtherLrMult = 0.1;
constexpr double kSeifSigmaErase = 0.6;
constexpr double kSeifSigmaLate = 0.005;
constexpr double kSalunThreshold = 0.5;
constexpr double kSunSigma = 0.1;
constexpr double kContrastiveLr = 0.002;
constexpr double kContrastiveTemperature = 8.0;
constexpr double kDistillRepairLr = 0.05;
constexpr double kFeatureNoise = 0.1;

// the toy training recipe mirrored by retrain_oracle
constexpr int kOracleEpochs = 30;
constexpr double kOracleLr = 0.05;

}  // namespace defaults

int preset_defaults_version() { return defaults::kVersion; }

namespace {

Phase descent(LossKind loss, DataSource source, int epochs, double lr, PhaseRole role) {
    Phase p;
    p.kind = PhaseKind::descent;
    p.role = role;
    p.loss = loss;
    p.source = source;
    p.epochs = epochs;
    p.lr = lr;
    p.momentum = defaults::kMomentum;
    return p;
}

Phase reinit_phase(SelectorKind selector) {
    Phase p;
    p.kind = PhaseKind::reinit;
    p.role = PhaseRole::erase;
    p.selector = selector;
    return p;
}

Phase noise_phase(double sigma, LayerPolicy policy) {
    Phase p;
    p.kind = PhaseKind::noise;
    p.role = PhaseRole::erase;
    p.sigma = sigma;
    p.layer_policy = policy;
    return p;
}

}  // namespace

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{
        "finetune", "neggrad_plus", "scrub",     "random_label", "salun", "l1_sparse", "fanchuan",
        "kookmin",  "seif",         "sebastian", "amnesiacs",    "sun",   "forget",
    };
    return names;
}

const std::vector<std::string>& evaluation_pipeline_names() {
    static const std::vector<std::string> names{"identity", "retrain_oracle"};
    return names;
}

PipelineSpec make_preset(const std::string& name) {
    PipelineSpec spec;
    spec.name = name;
    using DS = DataSource;
    using LK = LossKind;

    if (name == "finetune") {
        Phase p = descent(LK::ce, DS::retain, 1, defaults::kFinetuneLr, PhaseRole::repair);
        p.weight_decay = defaults::kFinetuneWeightDecay;
        spec.phases = {p};
    } else if (name == "neggrad_plus") {
        Phase p = descent(LK::neggrad_plus, DS::retain, 1, defaults::kRepairLr, PhaseRole::erase);
        p.kind = PhaseKind::ascent_descent;
        p.alpha = defaults::kNeggradAlpha;
        spec.phases = {p};
    } else if (name == "scrub") {
        Phase p = descent(LK::kl_distill, DS::retain, 1, defaults::kRepairLr, PhaseRole::erase);
        p.kind = PhaseKind::ascent_descent;
        p.alpha = defaults::kScrubAlpha;
        spec.phases = {p};
    } else if (name == "random_label") {
        spec.phases = {descent(LK::ce, DS::forget_random_label, 2, defaults::kEraseLr, PhaseRole::erase),
                       descent(LK::ce, DS::retain, 1, defaults::kRepairLr, PhaseRole::repair)};
    } else if (name == "salun") {
        Phase erase = descent(LK::ce, DS::forget_random_label, 2, defaults::kEraseLr, PhaseRole::erase);
        erase.lr_policy = LrPolicy::salun_mask;
        erase.salun_threshold = defaults::kSalunThreshold;
        spec.phases = {erase, descent(LK::ce, DS::retain, 1, defaults::kRepairLr, PhaseRole::repair)};
    } else if (name == "l1_sparse") {
        Phase p = descent(LK::l1_ce, DS::retain, 2, defaults::kRepairLr, PhaseRole::repair);
        p.l1_weight = defaults::kL1Weight;
        spec.phases = {p};
    } else if (name == "fanchuan") {
        spec.phases = {descent(LK::uniform_kl, DS::forget, 1, defaults::kEraseLr, PhaseRole::erase)};
        for (int cycle = 0; cycle < 2; ++cycle) {
            Phase contrast = descent(LK::contrastive, DS::forget, 1, defaults::kContrastiveLr, PhaseRole::erase);
            contrast.temperature = defaults::kContrastiveTemperature;
            spec.phases.push_back(contrast);
            spec.phases.push_back(descent(LK::ce, DS::retain, 1, defaults::kRepairLr, PhaseRole::repair));
        }
    } else if (name == "kookmin") {
        Phase erase = reinit_phase(SelectorKind::grad_l1_bottom);
        erase.fraction = defaults::kKookminFraction;
        Phase repair = descent(LK::ce, DS::retain, 2, defaults::kRepairLr, PhaseRole::repair);
        repair.lr_policy = LrPolicy::reinit_gated;
        repair.lr_selected = 1.0;
        repair.lr_other = defaults::kKookminOtherLrMult;
        spec.phases = {erase, repair};
    } else if (name == "seif") {
        Phase early = descent(LK::ce, DS::retain, 2, defaults::kRepairLr, PhaseRole::repair);
        early.majority_reweight = true;
        Phase late = descent(LK::ce, DS::retain, 1, defaults::kRepairLr, PhaseRole::repair);
        late.majority_reweight = true;
        spec.phases = {noise_phase(defaults::kSeifSigmaErase, LayerPolicy::hidden), early,
                       noise_phase(defaults::kSeifSigmaLate, LayerPolicy::hidden), late};
    } else if (name == "sebastian") {
        Phase erase = reinit_phase(SelectorKind::weight_l1_bottom);
        erase.fraction = defaults::kSebastianFraction;
        spec.phases = {erase, descent(LK::ce_entropy_mse, DS::retain, 2, defaults::kRepairLr, PhaseRole::repair)};
    } else if (name == "amnesiacs") {
        Phase erase = reinit_phase(SelectorKind::named_layers);
        erase.layer_ids = {0, -1};  // first hidden and output layers
        spec.phases = {erase,
                       descent(LK::kl_distill, DS::val, 3, defaults::kRepairLr, PhaseRole::repair),
                       descent(LK::ce_sym_kl, DS::retain, 2, defaults::kRepairLr, PhaseRole::repair)};
    } else if (name == "sun") {
        Phase erase = reinit_phase(SelectorKind::named_layers);
        erase.layer_ids = {-1};
        spec.phases = {erase};
        for (int cycle = 0; cycle < 2; ++cycle) {
            Phase n = noise_phase(defaults::kSunSigma, LayerPolicy::random_subset);
            spec.phases.push_back(n);
            spec.phases.push_back(descent(LK::ce, DS::retain, 1, defaults::kRepairLr, PhaseRole::repair));
        }
        spec.phases.push_back(descent(LK::ce, DS::retain, 1, defaults::kRepairLr, PhaseRole::repair));
    } else if (name == "forget") {
        for (int cycle = 0; cycle < 2; ++cycle) {
            Phase erase = reinit_phase(SelectorKind::random_layers);
            erase.layer_count = 1;
            spec.phases.push_back(erase);
            Phase repair =
                descent(LK::mse_distill, DS::noisy_retain, 1, defaults::kDistillRepairLr, PhaseRole::repair);
            repair.feature_noise = defaults::kFeatureNoise;
            spec.phases.push_back(repair);
        }
    } else if (name == "identity") {
        spec.phases = {descent(LK::ce, DS::retain, 0, defaults::kRepairLr, PhaseRole::repair)};
    } else if (name == "retrain_oracle") {
        Phase erase = reinit_phase(SelectorKind::random_layers);
        erase.layer_count = 1 << 20;  // clamped to every layer
        Phase repair =
            descent(LK::ce, DS::retain, defaults::kOracleEpochs, defaults::kOracleLr, PhaseRole::repair);
        spec.phases = {erase, repair};
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }
    spec.validate();
    return spec;
}

PipelineSpec stitch(const PipelineSpec& erase_from, const PipelineSpec& repair_from) {
    erase_from.validate();
    repair_from.validate();
    PipelineSpec out;
    out.name = erase_from.name + ".erase+" + repair_from.name + ".repair";
    for (const auto& p : erase_from.phases)
        if (p.role == PhaseRole::erase) out.phases.push_back(p);
    if (out.phases.empty())
        throw std::invalid_argument("stitch: '" + erase_from.name + "' contributes no erase phases");
    const std::size_t erase_count = out.phases.size();
    for (const auto& p : repair_from.phases)
        if (p.role == PhaseRole::repair) out.phases.push_back(p);
    if (out.phases.size() == erase_count)
        throw std::invalid_argument("stitch: '" + repair_from.name + "' contributes no repair phases");
    return out;
}

// --- serialization ----------------------------------------------------------

ConfigMap pipeline_to_config(const PipelineSpec& spec) {
    spec.validate();
    ConfigMap cfg;
    cfg.set("pipeline.format", "1");
    cfg.set("pipeline.name", spec.name);
    cfg.set("pipeline.phases", std::to_string(spec.phases.size()));
    for (std::size_t i = 0; i < spec.phases.size(); ++i) {
        const Phase& p = spec.phases[i];
        const std::string k = "pipeline.phase" + std::to_string(i) + ".";
        auto num = [](double v) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return std::string(buf);
        };
        cfg.set(k + "kind", kPhaseKinds.name(p.kind));
        cfg.set(k + "role", kPhaseRoles.name(p.role));
        switch (p.kind) {
            case PhaseKind::reinit:
                cfg.set(k + "selector", kSelectors.name(p.selector));
                if (p.selector == SelectorKind::weight_l1_bottom || p.selector == SelectorKind::grad_l1_bottom)
                    cfg.set(k + "fraction", num(p.fraction));
                if (p.selector == SelectorKind::grad_l1_bottom) cfg.set(k + "probe_alpha", num(p.probe_alpha));
                if (p.selector == SelectorKind::random_layers)
                    cfg.set(k + "layer_count", std::to_string(p.layer_count));
                if (p.selector == SelectorKind::named_layers) {
                    std::string ids;
                    for (int id : p.layer_ids) ids += (ids.empty() ? "" : ",") + std::to_string(id);
                    cfg.set(k + "layer_ids", ids);
                }
                break;
            case PhaseKind::noise:
                cfg.set(k + "sigma", num(p.sigma));
                cfg.set(k + "layer_policy", kLayerPolicies.name(p.layer_policy));
                if (p.layer_policy == LayerPolicy::random_subset) cfg.set(k + "layer_prob", num(p.layer_prob));
                break;
            case PhaseKind::descent:
            case PhaseKind::ascent_descent:
                cfg.set(k + "loss", loss_kind_name(p.loss));
                cfg.set(k + "source", kSources.name(p.source));
                cfg.set(k + "epochs", std::to_string(p.epochs));
                cfg.set(k + "lr", num(p.lr));
                cfg.set(k + "momentum", num(p.momentum));
                if (p.weight_decay != 0.0) cfg.set(k + "weight_decay", num(p.weight_decay));
                if (p.loss == LossKind::neggrad_plus || p.kind == PhaseKind::ascent_descent)
                    cfg.set(k + "alpha", num(p.alpha));
                if (p.loss == LossKind::l1_ce) cfg.set(k + "l1_weight", num(p.l1_weight));
                if (p.loss == LossKind::contrastive || p.loss == LossKind::kl_distill)
                    cfg.set(k + "temperature", num(p.temperature));
                if (p.lr_policy != LrPolicy::uniform) cfg.set(k + "lr_policy", kLrPolicies.name(p.lr_policy));
                if (p.lr_policy == LrPolicy::reinit_gated) {
                    cfg.set(k + "lr_selected", num(p.lr_selected));
                    cfg.set(k + "lr_other", num(p.lr_other));
                }
                if (p.lr_policy == LrPolicy::salun_mask) cfg.set(k + "salun_threshold", num(p.salun_threshold));
                if (p.majority_reweight) cfg.set(k + "majority_reweight", "true");
                if (p.source == DataSource::noisy_retain) cfg.set(k + "feature_noise", num(p.feature_noise));
                break;
        }
    }
    return cfg;
}

PipelineSpec pipeline_from_config(const ConfigMap& cfg) {
    if (cfg.get_int("pipeline.format", 1) != 1)
        throw std::invalid_argument("unsupported pipeline format version");
    PipelineSpec spec;
    spec.name = cfg.get_or("pipeline.name", "unnamed");
    const int count = cfg.get_int("pipeline.phases", 0);
    if (count < 1) throw std::invalid_argument("pipeline config: needs at least one phase");
    for (int i = 0; i < count; ++i) {
        const std::string k = "pipeline.phase" + std::to_string(i) + ".";
        Phase p;
        p.kind = kPhaseKinds.value(cfg.get(k + "kind"), "phase kind");
        p.role = kPhaseRoles.value(cfg.get_or(k + "role", "repair"), "phase role");
        switch (p.kind) {
            case PhaseKind::reinit: {
                p.selector = kSelectors.value(cfg.get(k + "selector"), "reinit selector");
                p.fraction = cfg.get_double(k + "fraction", 0.0);
                p.probe_alpha = cfg.get_double(k + "probe_alpha", 0.5);
                p.layer_count = cfg.get_int(k + "layer_count", 1);
                if (cfg.has(k + "layer_ids")) {
                    std::string ids = cfg.get(k + "layer_ids");
                    std::size_t pos = 0;
                    while (pos < ids.size()) {
                        const std::size_t comma = ids.find(',', pos);
                        const std::string tok = ids.substr(pos, comma == std::string::npos ? std::string::npos
                                                                                           : comma - pos);
                        p.layer_ids.push_back(std::stoi(tok));
                        if (comma == std::string::npos) break;
                        pos = comma + 1;
                    }
                }
                break;
            }
            case PhaseKind::noise:
                p.sigma = cfg.get_double(k + "sigma", 0.0);
                p.layer_policy = kLayerPolicies.value(cfg.get_or(k + "layer_policy", "hidden"), "layer policy");
                p.layer_prob = cfg.get_double(k + "layer_prob", 0.5);
                break;
            case PhaseKind::descent:
            case PhaseKind::ascent_descent:
                p.loss = loss_kind_from_name(cfg.get(k + "loss"));
                p.source = kSources.value(cfg.get_or(k + "source", "retain"), "data source");
                p.epochs = cfg.get_int(k + "epochs", 1);
                p.lr = cfg.get_double(k + "lr", 0.01);
                p.momentum = cfg.get_double(k + "momentum", 0.9);
                p.weight_decay = cfg.get_double(k + "weight_decay", 0.0);
                p.alpha = cfg.get_double(k + "alpha", 1.0);
                p.l1_weight = cfg.get_double(k + "l1_weight", 0.0);
                p.temperature = cfg.get_double(k + "temperature", 1.0);
                p.lr_policy = kLrPolicies.value(cfg.get_or(k + "lr_policy", "uniform"), "lr policy");
                p.lr_selected = cfg.get_double(k + "lr_selected", 1.0);
                p.lr_other = cfg.get_double(k + "lr_other", 0.1);
                p.salun_threshold = cfg.get_double(k + "salun_threshold", 0.5);
                p.majority_reweight = cfg.get_bool(k + "majority_reweight", false);
                p.feature_noise = cfg.get_double(k + "feature_noise", 0.1);
                break;
        }
        spec.phases.push_back(std::move(p));
    }
    spec.validate();
    return spec;
}

}  // namespace ulb
