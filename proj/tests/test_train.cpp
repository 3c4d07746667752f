#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "ulb/data.hpp"
#include "ulb/rng.hpp"
#include "ulb/train.hpp"

using namespace ulb;

namespace {

// Two well-separated Gaussian blobs; a closed-form hyperplane through the
// midpoint of the centers separates them, which the test verifies before
// asking training to do as well.
Dataset two_blob_dataset(int per_class, std::uint64_t seed) {
    Dataset ds;
    ds.num_classes = 2;
    const int dim = 4;
    ds.features.resize(dim, 2 * per_class);
    Rng rng(seed);
    for (int i = 0; i < 2 * per_class; ++i) {
        const int label = i < per_class ? 0 : 1;
        const double center = label == 0 ? -2.0 : 2.0;
        for (int d = 0; d < dim; ++d)
            ds.features(d, i) = static_cast<float>(center + 0.4 * rng.normal());
        ds.labels.push_back(label);
        ds.subjects.push_back(i);
    }
    return ds;
}

}  // namespace

TEST_CASE("training is deterministic per seed") {
    const Dataset ds = two_blob_dataset(40, 7);
    std::vector<int> idx(static_cast<std::size_t>(ds.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const Architecture arch{{4, 6, 2}};
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 0.05;
    const ParamsF a = train(ds, idx, arch, cfg, 42);
    const ParamsF b = train(ds, idx, arch, cfg, 42);
    CHECK(a == b);
    const ParamsF c = train(ds, idx, arch, cfg, 43);
    CHECK_FALSE(a == c);
}

TEST_CASE("training fits a linearly separable problem") {
    const Dataset ds = two_blob_dataset(60, 3);
    std::vector<int> idx(static_cast<std::size_t>(ds.size()));
    std::iota(idx.begin(), idx.end(), 0);

    // closed-form separator: sign of the mean feature
    int separable = 0;
    for (int i = 0; i < ds.size(); ++i) {
        const float mean = ds.features.col(i).mean();
        const int predicted = mean > 0.0f ? 1 : 0;
        separable += predicted == ds.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    REQUIRE(separable == ds.size());

    const Architecture arch{{4, 6, 2}};
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.lr = 0.05;
    const ParamsF model = train(ds, idx, arch, cfg, 1);
    CHECK(accuracy(model, ds, idx) >= 0.95);
}

TEST_CASE("training rejects zero epochs and empty index sets") {
    const Dataset ds = two_blob_dataset(10, 5);
    std::vector<int> idx(static_cast<std::size_t>(ds.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const Architecture arch{{4, 6, 2}};
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(ds, idx, arch, cfg, 1), std::invalid_argument);
    cfg.epochs = 1;
    CHECK_THROWS_AS(train(ds, {}, arch, cfg, 1), std::invalid_argument);
}

TEST_CASE("a diverging run aborts with a diagnostic") {
    SyntheticSpec spec;
    spec.n_subjects = 40;
    spec.min_examples_per_subject = 2;
    spec.max_examples_per_subject = 3;
    spec.num_classes = 3;
    spec.feature_dim = 5;
    const Dataset ds = generate_synthetic(spec, 7);
    std::vector<int> idx(static_cast<std::size_t>(ds.size()));
    std::iota(idx.begin(), idx.end(), 0);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.lr = 1e9;
    try {
        train(ds, idx, Architecture{{5, 6, 3}}, cfg, 1);
        FAIL("expected the run to abort");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("accuracy semantics") {
    Dataset ds;
    ds.num_classes = 2;
    ds.features = Eigen::MatrixXf::Zero(2, 4);
    ds.features << 1, 1, -1, -1, 0, 0, 0, 0;
    ds.labels = {1, 1, 0, 1};
    ds.subjects = {0, 1, 2, 3};

    SUBCASE("counting") {
        // w maps feature 0 onto the class-1 logit: +1 -> class 1, -1 -> class 0
        ParamsF p;
        MatrixX<float> w(2, 2);
        w << 0, 0, 1, 0;
        p.weights = {w};
        p.biases = {VectorX<float>::Zero(2)};
        // predictions: 1, 1, 0, 0 -> 3 of 4 correct
        CHECK(accuracy(p, ds, {0, 1, 2, 3}) == doctest::Approx(0.75));
        // all-correct subset
        CHECK(accuracy(p, ds, {0, 1, 2}) == doctest::Approx(1.0));
    }
    SUBCASE("ties break toward the lowest class id") {
        ParamsF p;
        p.weights = {MatrixX<float>::Zero(2, 2)};
        p.biases = {VectorX<float>::Zero(2)};
        CHECK(accuracy(p, ds, {2}) == doctest::Approx(1.0));  // true label 0 wins the tie
        CHECK(accuracy(p, ds, {0}) == doctest::Approx(0.0));
    }
    SUBCASE("order invariance") {
        ParamsF p = init_params<float>(Architecture{{2, 3, 2}}, 9);
        std::vector<int> fwd{0, 1, 2, 3};
        std::vector<int> rev{3, 1, 2, 0};
        CHECK(accuracy(p, ds, fwd) == accuracy(p, ds, rev));
    }
    SUBCASE("empty index set throws") {
        ParamsF p = init_params<float>(Architecture{{2, 3, 2}}, 9);
        CHECK_THROWS_AS(accuracy(p, ds, {}), std::invalid_argument);
    }
}

TEST_CASE("weighted loss falls from the first to the last epoch on most seeds") {
    const Dataset ds = two_blob_dataset(50, 11);
    std::vector<int> idx(static_cast<std::size_t>(ds.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const Architecture arch{{4, 6, 2}};
    const ClassWeights w = class_weights(ds, idx);

    int violations = 0;
    const int seeds = 20;
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        TrainConfig one;
        one.epochs = 1;
        one.lr = 0.05;
        TrainConfig many = one;
        many.epochs = 10;
        const double after_first = dataset_loss(train(ds, idx, arch, one, seed), ds, idx, w);
        const double after_last = dataset_loss(train(ds, idx, arch, many, seed), ds, idx, w);
        if (after_last > after_first) ++violations;
    }
    CHECK(violations <= seeds / 20);  // allow 5% of seeds to violate
}
