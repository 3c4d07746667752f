#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ulb/loss.hpp"

namespace ulb {

// Subject-tagged labelled examples. Features are stored one column per
// example; immutable after construction.
struct Dataset {
    Eigen::MatrixXf features;  // feature_dim x size
    std::vector<int> labels;
    std::vector<int> subjects;
    int num_classes = 0;

    int size() const { return static_cast<int>(labels.size()); }
    int feature_dim() const { return static_cast<int>(features.rows()); }

    void validate() const;
};

struct SyntheticSpec {
    int n_subjects = 400;
    int min_examples_per_subject = 4;
    int max_examples_per_subject = 6;
    int num_classes = 10;
    int feature_dim = 16;
    double imbalance_exponent = 1.0;  // class k weight ~ (k+1)^-exponent, class 0 dominates
    double class_separation = 3.0;    // scale of the class cluster centers
    double subject_sigma = 1.0;       // per-subject offset spread
    double noise_sigma = 0.7;         // within-subject feature noise
};

// Class-conditional Gaussian clusters with a per-subject offset; all of one
// subject's examples share that subject's class. Subject counts per class
// follow a power law allocated by largest remainder, so the empirical class
// frequencies are monotone non-increasing in class id.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// train/val/test are disjoint and exhaustive; retain + forget partition
// train with no subject on both sides. Index vectors are sorted.
struct Splits {
    std::vector<int> train, val, test, retain, forget;
};

Splits split_train_val_test(const Dataset& ds, double train_fraction, double val_fraction,
                            double test_fraction, std::uint64_t seed);

// Greedily assigns whole subjects (in seeded order) to the forget set until
// its size first reaches forget_fraction * |train|.
Splits split_retain_forget(const Dataset& ds, const Splits& partial, double forget_fraction,
                           std::uint64_t seed);

// weight_k = 1 / count_k over the index set; errors if a class is absent.
ClassWeights class_weights(const Dataset& ds, const std::vector<int>& idx);

// CSV schema: header then rows "subject_id,label,f_1,...,f_d". UTF-8, comma
// separated, no quoting.
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

}  // namespace ulb
