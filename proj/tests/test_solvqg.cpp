#include <gtest/gtest.h>

#include <random>

#include "ctlab/solvqg.hpp"

using namespace ctlab;

namespace {

struct World {
    CanonicalModel m = build_canonical_surface();
    FuchsianGroup G = octagon_group();
};

const World& world() {
    static const World w;
    return w;
}

}  // namespace

TEST(QgFit, RecoversLinearModel) {
    std::vector<QgSample> s;
    for (int i = 1; i <= 40; ++i) {
        double d = i;
        s.push_back({d, 1.5 * d + 2.0, false});
    }
    s.push_back({20.0, 500.0, true});  // touched samples are ignored
    auto f = fit_quasigeodesic(s, 5, 30);
    EXPECT_EQ(f.n, 26u);
    EXPECT_GE(f.Q, 1.5);
    for (const auto& x : s)
        if (!x.touched && x.distance >= 5 && x.distance <= 30) EXPECT_LE(x.arclength, f.Q * x.distance + f.c + 1e-9);
    EXPECT_LT(f.slope, 0.0);  // additive constant makes the ratio decay
    auto few = fit_quasigeodesic(std::span<const QgSample>(s.data(), 2), 0, 100);
    EXPECT_EQ(few.n, 2u);
    EXPECT_EQ(few.Q, 0.0);
}

TEST(Axis, HorizontalCoreIsNearlyGeodesic) {
    const auto& w = world();
    auto ax = axis_samples(w.m, w.G, {2, 0.3, 0.5}, {1, 0}, 5, OracleBox{});
    EXPECT_EQ(ax.element.str(), "D");
    EXPECT_NEAR(ax.period, 1.0, 1e-12);
    ASSERT_EQ(ax.samples.size(), 5u);
    for (const auto& s : ax.samples) {
        EXPECT_FALSE(s.touched);
        // oracle is an upper bound on distance, and a z = 0 path is not shorter than the geodesic
        EXPECT_GT(s.arclength / s.distance, 0.8);
        EXPECT_LT(s.arclength / s.distance, 1.2);
    }
}

TEST(Axis, RejectsIdentityAndOpenCurves) {
    const auto& w = world();
    EXPECT_THROW(axis_samples(w.m, w.G, {2, 0.3, 0.5}, {0, 0}, 3, OracleBox{}), std::invalid_argument);
    EXPECT_THROW(axis_samples(w.m, w.G, {2, 0.3, 0.5}, {0.5, 0}, 3, OracleBox{}), FlatModelError);
}

TEST(Bottleneck, OracleRespectsBound) {
    const auto& w = world();
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> side(0.3, 1.2);
    int done = 0;
    for (int i = 0; i < 6; ++i) {
        double a = side(rng), b = side(rng);
        auto rc = bottleneck_check(w.m, w.G, a, b, rng, OracleBox{});
        EXPECT_FALSE(rc.touched);
        EXPECT_GE(rc.oracle, rc.bound);
        EXPECT_GE(rc.diagonal, rc.bound);
        ++done;
    }
    EXPECT_EQ(done, 6);
}

// For thin rectangles the stated bound exceeds the straight diagonal at the
// optimal height, so it cannot hold there; dividing by sqrt 2 repairs it.
TEST(Bottleneck, BoundFailsForSmallRectangles) {
    const double k = world().m.pa.k;
    for (double ab : {0.01, 0.04, 0.07}) {
        Rectangle R{std::sqrt(ab), std::sqrt(ab), {0, 0}};
        double z = optimal_height(R, k);
        double diag = ct_segment_length({0, 0, z}, {R.a, R.b, z}, k);
        EXPECT_LT(diag, bottleneck_bound(R, k)) << ab;
        EXPECT_GE(diag, bottleneck_bound(R, k) / std::sqrt(2.0)) << ab;
    }
    Rectangle big{0.5, 0.5, {0, 0}};
    double z = optimal_height(big, k);
    EXPECT_GT(ct_segment_length({0, 0, z}, {0.5, 0.5, z}, k), bottleneck_bound(big, k));
}
