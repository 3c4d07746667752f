#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <limits>
#include <vector>

#include "ulb/rng.hpp"
#include "ulb/scoring.hpp"

using namespace ulb;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("h_points binning") {
    BinningConfig cfg;
    SUBCASE("first bin scores full points") { CHECK(h_points(0.0, cfg) == doctest::Approx(1.0)); }
    SUBCASE("second bin halves") { CHECK(h_points(0.7, cfg) == doctest::Approx(0.5)); }
    SUBCASE("infinity scores zero") { CHECK(h_points(kInf, cfg) == 0.0); }
    SUBCASE("beyond the last bin scores zero") {
        CHECK(h_points(6.5, cfg) == 0.0);
        CHECK(h_points(6.49, cfg) == doctest::Approx(std::ldexp(2.0, -13)));
    }
    SUBCASE("non-increasing in eps") {
        double prev = 2.0;
        for (double eps = 0.0; eps < 8.0; eps += 0.05) {
            const double pts = h_points(eps, cfg);
            CHECK(pts <= prev);
            prev = pts;
        }
    }
    SUBCASE("literal floor indexing stays within [0,1]") {
        BinningConfig literal;
        literal.index_offset = 0;
        CHECK(h_points(0.0, literal) == doctest::Approx(1.0));  // floor 0 lower-clamps to bin 1
        CHECK(h_points(0.8, literal) == doctest::Approx(1.0));  // bin 1
        CHECK(h_points(1.2, literal) == doctest::Approx(0.5));  // bin 2
    }
    SUBCASE("negative eps is rejected") { CHECK_THROWS_AS(h_points(-0.1, cfg), std::invalid_argument); }
}

TEST_CASE("forgetting quality") {
    BinningConfig cfg;
    SUBCASE("all zero eps is perfect") {
        const std::vector<double> eps(5, 0.0);
        CHECK(forgetting_quality(eps, cfg) == doctest::Approx(1.0));
    }
    SUBCASE("mean of points") {
        const std::vector<double> eps{0.0, 0.7};
        CHECK(forgetting_quality(eps, cfg) == doctest::Approx(0.75));
    }
    SUBCASE("all infinite is zero") {
        const std::vector<double> eps{kInf, kInf, kInf};
        CHECK(forgetting_quality(eps, cfg) == doctest::Approx(0.0));
    }
    SUBCASE("empty vector throws") {
        CHECK_THROWS_AS(forgetting_quality(std::vector<double>{}, cfg), std::invalid_argument);
    }
    SUBCASE("monotone: pointwise smaller eps never scores lower") {
        Rng rng(4);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> a(8), b(8);
            for (int i = 0; i < 8; ++i) {
                a[i] = rng.uniform(0.0, 8.0);
                b[i] = a[i] + rng.uniform(0.0, 2.0);
            }
            CHECK(forgetting_quality(a, cfg) >= forgetting_quality(b, cfg));
        }
    }
}

TEST_CASE("final score") {
    SUBCASE("unit ratios return F") { CHECK(final_score(0.37, 0.9, 0.9, 0.8, 0.8) == doctest::Approx(0.37)); }
    SUBCASE("hand arithmetic") {
        CHECK(final_score(0.4, 0.95, 1.0, 0.90, 1.0) == doctest::Approx(0.342).epsilon(1e-12));
    }
    SUBCASE("ratios are not capped above one") {
        CHECK(final_score(0.5, 1.0, 0.5, 1.0, 1.0) == doctest::Approx(1.0));
    }
    SUBCASE("zero retrained accuracy errors") {
        CHECK_THROWS_AS(final_score(0.4, 0.9, 0.0, 0.9, 0.9), std::invalid_argument);
    }
    SUBCASE("linear in F at fixed accuracies") {
        const double a = final_score(0.2, 0.9, 0.95, 0.85, 0.9);
        const double b = final_score(0.4, 0.9, 0.95, 0.85, 0.9);
        CHECK(b == doctest::Approx(2.0 * a).epsilon(1e-12));
    }
}

TEST_CASE("accuracy gap") {
    CHECK(accuracy_gap(0.936, 0.856) == doctest::Approx(0.080).epsilon(1e-12));
    CHECK(accuracy_gap(0.7, 0.7) == 0.0);
    CHECK(accuracy_gap(1.0, 0.0) == 1.0);
}

TEST_CASE("mia gap") {
    Rng rng(31);
    auto gaussian = [&](int n, double shift) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = shift + rng.normal();
        return v;
    };
    SUBCASE("identical inputs for both worlds give exactly zero") {
        const std::vector<double> f = gaussian(100, 0.0);
        const std::vector<double> t = gaussian(100, 0.0);
        CHECK(mia_gap(f, t, f, t, 10, 5) == doctest::Approx(0.0));
    }
    SUBCASE("null distribution keeps the gap small") {
        const std::vector<double> uf = gaussian(1000, 0.0);
        const std::vector<double> ut = gaussian(1000, 0.0);
        const std::vector<double> rf = gaussian(1000, 0.0);
        const std::vector<double> rt = gaussian(1000, 0.0);
        CHECK(mia_gap(uf, ut, rf, rt, 10, 5) <= 0.05);
    }
    SUBCASE("separable unlearned world opens the gap") {
        const std::vector<double> uf = gaussian(400, -8.0);
        const std::vector<double> ut = gaussian(400, 8.0);
        const std::vector<double> rf = gaussian(400, 0.0);
        const std::vector<double> rt = gaussian(400, 0.0);
        const double gap = mia_gap(uf, ut, rf, rt, 10, 5);
        CHECK(gap > 0.4);
    }
    SUBCASE("symmetric in the two worlds") {
        const std::vector<double> uf = gaussian(120, -1.0);
        const std::vector<double> ut = gaussian(120, 1.0);
        const std::vector<double> rf = gaussian(120, 0.0);
        const std::vector<double> rt = gaussian(120, 0.0);
        CHECK(mia_gap(uf, ut, rf, rt, 10, 7) == doctest::Approx(mia_gap(rf, rt, uf, ut, 10, 7)));
    }
    SUBCASE("invariant to positive-scale affine transforms") {
        const std::vector<double> uf = gaussian(120, -0.5);
        const std::vector<double> ut = gaussian(120, 0.5);
        const std::vector<double> rf = gaussian(120, 0.1);
        const std::vector<double> rt = gaussian(120, -0.1);
        auto affine = [](std::vector<double> v) {
            for (auto& x : v) x = 3.7 * x + 11.0;
            return v;
        };
        const double base = mia_gap(uf, ut, rf, rt, 10, 7);
        const double mapped = mia_gap(affine(uf), affine(ut), affine(rf), affine(rt), 10, 7);
        CHECK(base == doctest::Approx(mapped).epsilon(1e-9));
    }
    SUBCASE("fewer examples than folds errors") {
        const std::vector<double> tiny{1.0, 2.0};
        CHECK_THROWS_AS(mia_gap(tiny, tiny, tiny, tiny, 10, 1), std::invalid_argument);
    }
}
