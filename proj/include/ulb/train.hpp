#pragma once

#include <cstdint>
#include <vector>

#include "ulb/data.hpp"
#include "ulb/nn.hpp"

namespace ulb {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// The learning algorithm: class-weighted cross-entropy over the index set,
// mini-batch SGD with momentum, batch order reshuffled each epoch. One RNG
// stream derived from `seed` is split into "init" and "shuffle" substreams.
// Deterministic per (inputs, seed). Training on the retain indices realizes
// the retrained-from-scratch model.
ParamsF train(const Dataset& ds, const std::vector<int>& idx, const Architecture& arch,
              const TrainConfig& cfg, std::uint64_t seed);

// Exact-match accuracy; argmax ties break toward the lowest class id.
double accuracy(const ParamsF& params, const Dataset& ds, const std::vector<int>& idx);

// Mean weighted cross-entropy over an index set (monitoring/testing helper).
double dataset_loss(const ParamsF& params, const Dataset& ds, const std::vector<int>& idx,
                    const ClassWeights& weights);

// Feature/label batch gathered from dataset indices.
LossBatch<float> gather_batch(const Dataset& ds, const std::vector<int>& idx, std::size_t begin,
                              std::size_t end);

}  // namespace ulb
