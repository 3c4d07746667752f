#include "ulb/train.hpp"

#include <stdexcept>
#include <string>

#include "ulb/loss.hpp"
#include "ulb/rng.hpp"

namespace ulb {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("train: lr must be positive");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("train: momentum must be in [0,1)");
    if (weight_decay < 0) throw std::invalid_argument("train: weight_decay must be non-negative");
}

LossBatch<float> gather_batch(const Dataset& ds, const std::vector<int>& idx, std::size_t begin,
                              std::size_t end) {
    LossBatch<float> batch;
    const auto count = static_cast<Eigen::Index>(end - begin);
    batch.main_x.resize(ds.feature_dim(), count);
    batch.main_y.resize(count);
    for (std::size_t i = begin; i < end; ++i) {
        const int src = idx[i];
        const auto dst = static_cast<Eigen::Index>(i - begin);
        batch.main_x.col(dst) = ds.features.col(src);
        batch.main_y[dst] = ds.labels[static_cast<std::size_t>(src)];
    }
    return batch;
}

ParamsF train(const Dataset& ds, const std::vector<int>& idx, const Architecture& arch,
              const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    arch.validate();
    if (idx.empty()) throw std::invalid_argument("train: empty index set");
    if (arch.input_dim() != ds.feature_dim() || arch.num_classes() != ds.num_classes)
        throw std::invalid_argument("train: architecture does not match dataset");

    const ClassWeights weights = class_weights(ds, idx);
    ParamsF params = init_params<float>(arch, derive_seed(seed, "init"));
    OptimizerState<float> state = OptimizerState<float>::zero(params);
    Rng shuffle_rng(derive_seed(seed, "shuffle"));
    LossSpec<float> spec;
    spec.kind = LossKind::ce;

    std::vector<int> order = idx;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
            LossBatch<float> batch = gather_batch(ds, order, at, stop);
            LossResult<float> res;
            try {
                res = loss_and_grad(params, batch, spec, weights);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch) + ", batch offset " +
                                         std::to_string(at) + ": " + e.what());
            }
            sgd_momentum_step(params, res.grads, state, cfg.lr, cfg.momentum, cfg.weight_decay);
        }
    }
    return params;
}

double accuracy(const ParamsF& params, const Dataset& ds, const std::vector<int>& idx) {
    if (idx.empty()) throw std::invalid_argument("accuracy: empty index set");
    LossBatch<float> batch = gather_batch(ds, idx, 0, idx.size());
    const MatrixX<float> logits = forward_batch(params, batch.main_x);
    int correct = 0;
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
        int best = 0;
        for (Eigen::Index r = 1; r < logits.rows(); ++r)
            if (logits(r, i) > logits(best, i)) best = static_cast<int>(r);
        if (best == batch.main_y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

double dataset_loss(const ParamsF& params, const Dataset& ds, const std::vector<int>& idx,
                    const ClassWeights& weights) {
    if (idx.empty()) throw std::invalid_argument("dataset_loss: empty index set");
    LossBatch<float> batch = gather_batch(ds, idx, 0, idx.size());
    LossSpec<float> spec;
    spec.kind = LossKind::ce;
    return loss_and_grad(params, batch, spec, weights).loss;
}

}  // namespace ulb
