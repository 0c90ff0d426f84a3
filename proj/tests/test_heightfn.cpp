#include <gtest/gtest.h>

#include <sstream>

#include "ctlab/heightfn.hpp"

using namespace ctlab;

namespace {

struct World {
    CanonicalModel m = build_canonical_surface();
    FuchsianGroup G = octagon_group();
    LaminationPair lam = approximate_laminations(m, G);
    RadiusField plus{G, lam.plus}, minus{G, lam.minus};
};

const World& world() {
    static const World w;
    return w;
}

LaminationApprox single_leaf(const Geodesic& g, LamSide side = LamSide::plus) {
    LaminationApprox L;
    L.side = side;
    L.leaves = {g};
    return L;
}

HeightConfig wide_theta() {
    HeightConfig c;
    c.theta = 0.15;
    return c;
}

}  // namespace

// ---- laminations

TEST(Lamination, LeafCountsAtDefaultDepth) {
    const auto& w = world();
    EXPECT_EQ(w.lam.plus.leaves.size(), 407u);
    EXPECT_EQ(w.lam.minus.leaves.size(), 388u);
    EXPECT_EQ(w.lam.plus.diagonals.size(), 240u);
    EXPECT_EQ(w.lam.minus.diagonals.size(), 252u);
}

TEST(Lamination, NoCrossingsWithinOneSide) {
    const auto& w = world();
    EXPECT_EQ(crossing_count(w.lam.plus.leaves), 0u);
    EXPECT_EQ(crossing_count(w.lam.minus.leaves), 0u);
    EXPECT_GT(crossing_count(extended_leaves(w.lam.plus)), 0u);  // diagonals of one polygon cross each other
}

TEST(Lamination, PolygonSidesAreLeaves) {
    const auto& w = world();
    for (auto side : {LamSide::plus, LamSide::minus}) {
        const auto& L = side == LamSide::plus ? w.lam.plus : w.lam.minus;
        auto P = polygon_leaves(w.m, w.G, side, 3.0, 40);
        ASSERT_FALSE(P.sides.empty());
        for (const auto& s : P.sides) {
            double best = pi;
            for (const auto& l : L.leaves) best = std::min(best, leaf_gap(s, l));
            EXPECT_LT(best, 1e-8);
        }
    }
}

TEST(Lamination, ClosedUnderDeckTranslates) {
    const auto& w = world();
    for (const auto* L : {&w.lam.plus, &w.lam.minus})
        for (const auto& l : L->leaves) {
            if (distance_to_geodesic(l, origin()) > 0.5) continue;
            for (int g = 0; g < 8; ++g) {
                Geodesic t = act(w.G.generator(g), l);
                if (distance_to_geodesic(t, origin()) > L->ball_radius - 1e-6) continue;
                double best = pi;
                for (const auto& x : L->leaves) best = std::min(best, leaf_gap(t, x));
                EXPECT_LT(best, 1e-8);
            }
        }
}

TEST(Lamination, PlusLeavesRunAlongStableDirection) {
    const auto& w = world();
    FlatCover C(w.m.surface, w.G.presentation);
    Marking M(w.G, w.m.surface);
    for (const auto* L : {&w.lam.plus, &w.lam.minus}) {
        double du = 0, ds = 0;
        for (int i = 0; i < 10; ++i) {
            auto flow = flow_on_surface(centered_lift(L->leaves[i * 7], -10), 20, 0.01, w.G);
            GroupWord W;
            Vec2 prev{};
            bool first = true;
            for (const auto& fs : flow) {
                if (!fs.word.empty()) {
                    W = W * fs.word;
                    W.free_reduce();
                }
                Vec2 e = w.m.pa.eigen(M.image_reduced(base_point(fs.frame), W, C).dev);
                if (!first) {
                    du += std::abs(e.x - prev.x);
                    ds += std::abs(e.y - prev.y);
                }
                prev = e;
                first = false;
            }
        }
        if (L == &w.lam.plus) EXPECT_GT(ds, 2 * du);
        else EXPECT_GT(du, 2 * ds);
    }
}

TEST(Lamination, HausdorffConvergesInDepth) {
    const auto& w = world();
    std::vector<LaminationPair> L;
    for (int n : {2, 4, 6, 8}) {
        LaminationOptions o;
        o.depth = n;
        o.extended = false;
        L.push_back(approximate_laminations(w.m, w.G, o));
    }
    std::vector<double> hp, hm;
    for (std::size_t i = 0; i + 1 < L.size(); ++i) {
        hp.push_back(hausdorff_leaves(L[i].plus.leaves, L[i + 1].plus.leaves, 3.0));
        hm.push_back(hausdorff_leaves(L[i].minus.leaves, L[i + 1].minus.leaves, 3.0));
    }
    // the leaf sets settle at depth 4; after that only the dedup tolerance is left
    EXPECT_GT(hp[0], 1e-3);
    EXPECT_GT(hm[0], 1e-3);
    for (std::size_t i = 1; i < hp.size(); ++i) {
        EXPECT_LT(hp[i], 1e-9);
        EXPECT_LT(hm[i], 1e-9);
    }
}

TEST(Lamination, SeparationFloorStableInDepth) {
    const auto& w = world();
    std::vector<double> sep;
    for (int n : {4, 6, 8}) {
        LaminationOptions o;
        o.depth = n;
        auto L = approximate_laminations(w.m, w.G, o);
        auto s = cross_side_separation(extended_leaves(L.plus), extended_leaves(L.minus));
        EXPECT_EQ(s.shared_endpoints, 0u);
        sep.push_back(s.value());
    }
    for (double s : sep) {
        EXPECT_GT(s, 0.25);
        EXPECT_NEAR(s, sep.back(), 1e-6);
    }
}

TEST(Lamination, DepthOutOfRangeRejected) {
    const auto& w = world();
    LaminationOptions o;
    o.depth = 13;
    EXPECT_THROW(approximate_lamination(w.m, w.G, LamSide::plus, o), std::invalid_argument);
}

TEST(Lamination, LiftsOfRepeatedWordAgree) {
    // w and w^2 trace the same closed geodesic; w^2 spans several checkpoint blocks
    const auto& w = world();
    SurfacePoint p = core_curve_point();
    for (int i = 0; i < 6; ++i) p = w.m.pa.apply(p);
    auto word = closed_geodesic_letters(w.m.surface, p, iterate_holonomy(w.m.pa, 6));
    ASSERT_GT(word.size(), 2500u);
    auto twice = word;
    twice.insert(twice.end(), word.begin(), word.end());
    auto a = lifts_near_basepoint(w.G, word, 3.0, 1e-10);
    auto b = lifts_near_basepoint(w.G, twice, 3.0, 1e-10);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_LT(hausdorff_leaves(a, b, 3.0), 1e-9);
}

TEST(GeodesicSet, IdentifiesReversedAndWrappedPairs) {
    GeodesicSet S(1e-6);
    EXPECT_TRUE(S.insert(Geodesic::from_angles(0.5, 2.0)));
    EXPECT_FALSE(S.insert(Geodesic::from_angles(2.0, 0.5)));
    EXPECT_FALSE(S.insert(Geodesic::from_angles(0.5 + 5e-7, 2.0)));
    EXPECT_TRUE(S.insert(Geodesic::from_angles(0.5 + 5e-6, 2.0)));
    EXPECT_TRUE(S.insert(Geodesic::from_angles(2 * pi - 1e-8, 3.0)));
    EXPECT_FALSE(S.insert(Geodesic::from_angles(1e-8, 3.0)));
    EXPECT_EQ(S.items().size(), 3u);
}

// ---- radius and height

TEST(Height, FormulaExamples) {
    HeightConfig cfg;
    const double lt = std::log(1 / cfg.theta);
    // d >= theta on both sides
    EXPECT_EQ(height_from_radii(RadiusField::radius_from_distance(cfg.theta), RadiusField::radius_from_distance(0.5), cfg), 0.0);
    for (double R : {0.0, 0.5, 1.0, 2.0}) {
        // d_plus = theta e^{-k^R} gives rho_plus = log(1/theta) + k^R
        double rho = lt + std::pow(cfg.k, R);
        EXPECT_NEAR(height_from_radii(rho, 1.0, cfg), R, 1e-12);
        EXPECT_NEAR(height_from_radii(1.0, rho, cfg), -R, 1e-12);
    }
}

TEST(Height, AntisymmetricInTheLaminations) {
    const auto& w = world();
    auto cfg = wide_theta();
    auto rng = task_rng(11, 0);
    int nonzero = 0;
    for (int i = 0; i < 400; ++i) {
        Geodesic g = sample_lebesgue_geodesic(rng);
        std::uniform_real_distribution<double> U(-2, 2);
        Frame v = centered_lift(g, U(rng));
        double a = height(v, w.plus, w.minus, cfg), b = height(v, w.minus, w.plus, cfg);
        EXPECT_EQ(a, -b);
        nonzero += a != 0;
    }
    EXPECT_GT(nonzero, 0);
}

TEST(Height, ExceptionalFrameRejected) {
    const auto& w = world();
    Frame v = w.lam.plus.leaves.front().lift(0.0);
    EXPECT_THROW(height(v, w.plus, w.minus, HeightConfig{}), HeightError);
}

TEST(Height, ConfigValidation) {
    HeightConfig c;
    EXPECT_NO_THROW(c.validate());
    c.theta = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.theta = 0.01;
    LaminationConstants k;
    k.alpha = 0.3;
    k.rho = 0.2;
    k.separation = 0.3;
    c.constants = k;
    EXPECT_NO_THROW(c.validate());
    c.theta = 0.15;  // above half the separation
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_LT(k.theta_lambda(), std::pow(k.theta_min(), 6));
}

TEST(Radius, FarFromLeavesIsOne) {
    RadiusField F(octagon_group(), single_leaf(Geodesic::vertical()), false);
    Frame v = Geodesic::vertical().lift(0.0) * a_t(0) * rotation(pi / 4);  // perpendicular
    EXPECT_EQ(RadiusField::radius_from_distance(F.distance_reduced(v)), 1.0);
}

TEST(Radius, CrossingAngleGivesLogInverse) {
    RadiusField F(octagon_group(), single_leaf(Geodesic::vertical()), false);
    for (double th : {1e-2, 1e-3, 1e-4}) {
        Frame v = Geodesic::vertical().lift(0.0) * rotation(th / 2);
        double rho = RadiusField::radius_from_distance(F.distance_reduced(v));
        EXPECT_GE(rho, std::log(1 / th) - 1e-9);
        EXPECT_LE(rho, std::log(1 / th) + 1.0);
        // tent: rho decays at unit rate away from the crossing
        for (double t = -std::log(1 / th) + 1; t <= std::log(1 / th) - 1; t += 0.25) {
            double r = RadiusField::radius_from_distance(F.distance_reduced(geodesic_flow(v, t)));
            EXPECT_NEAR(r, rho - std::abs(t), 1.0) << th << ' ' << t;
        }
    }
}

// ---- test paths

TEST(TestPath, LipschitzAndFormulaIdentity) {
    const auto& w = world();
    auto cfg = wide_theta();
    auto rng = task_rng(5, 0);
    for (int i = 0; i < 3; ++i) {
        auto tp = test_path(w.m, w.G, sample_lebesgue_geodesic(rng), w.plus, w.minus, cfg, 30);
        auto L = lipschitz_slopes(tp.profile);
        EXPECT_LE(L.radius, 1 + 1e-6);
        EXPECT_LE(L.height, 1 / std::log(cfg.k) + 1e-4);
        for (std::size_t j = 0; j < tp.profile.samples.size(); ++j) {
            const auto& s = tp.profile.samples[j];
            EXPECT_EQ(s.h, height_from_radii(s.rho_plus, s.rho_minus, cfg));
            EXPECT_EQ(tp.path.vertices[j].z, s.h);
        }
        EXPECT_GT(tp.profile.samples.back().arclen, 0.0);
    }
}

TEST(TestPath, ZeroHeightAwayFromLeaves) {
    // theta = 0.01 needs d < 0.0037 for a nonzero height; short paths rarely get that close
    const auto& w = world();
    auto rng = task_rng(6, 0);
    auto tp = test_path(w.m, w.G, sample_lebesgue_geodesic(rng), w.plus, w.minus, HeightConfig{}, 5);
    for (const auto& v : tp.path.vertices) EXPECT_EQ(v.z, 0.0);
}

TEST(TestPath, StableUnderEndpointPerturbation) {
    const auto& w = world();
    auto cfg = wide_theta();
    auto rng = task_rng(8, 0);
    const double lt = std::log(1 / cfg.theta);
    auto off_clamp = [&](const HeightSample& s) {
        return std::abs(s.rho_plus - lt - 1) > 0.05 && std::abs(s.rho_minus - lt - 1) > 0.05;
    };
    for (int i = 0; i < 4; ++i) {
        Geodesic g = sample_lebesgue_geodesic(rng);
        Geodesic p = Geodesic::from_angles(g.from.angle() + 1e-4, g.to.angle() - 1e-4);
        auto a = test_path(w.m, w.G, g, w.plus, w.minus, cfg, 5);
        auto b = test_path(w.m, w.G, p, w.plus, w.minus, cfg, 5);
        std::size_t n = std::min(a.profile.samples.size(), b.profile.samples.size());
        for (std::size_t j = 0; j < n; ++j)
            if (off_clamp(a.profile.samples[j]) && off_clamp(b.profile.samples[j]))
                EXPECT_LE(std::abs(a.profile.samples[j].h - b.profile.samples[j].h), 0.1);
    }
}

TEST(TestPath, ExceptionalGeodesicRejected) {
    const auto& w = world();
    const auto& leaf = w.lam.minus.leaves[3];
    Geodesic g{leaf.from, BoundaryPoint::from_angle(leaf.to.angle() + 0.7)};
    EXPECT_THROW(test_path(w.m, w.G, g, w.plus, w.minus, HeightConfig{}, 1), HeightError);
}

TEST(TestPath, CsvHeader) {
    HeightProfile p;
    p.samples.push_back({0.5, 2, 1, 0.25, 0.1, 0.2, 0.3});
    std::ostringstream os;
    write_profile_csv(os, p);
    std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "t,rho_plus,rho_minus,h,dx_cum,dy_cum,arclen");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 2);
}

// ---- segments

TEST(Segments, ClassifiesHandMadeCrossings) {
    std::vector<Crossing> c{{0.5, LamSide::plus, 0.3}, {1.0, LamSide::minus, 0.3}, {1.5, LamSide::minus, 0.3},
                            {2.0, LamSide::plus, 0.3}, {3.0, LamSide::minus, 0.3}};
    auto s = classify_segments(c, 4.0);
    ASSERT_EQ(s.corners.size(), 3u);
    EXPECT_EQ(s.corners[0].lo, 0.5);
    EXPECT_EQ(s.corners[0].hi, 1.0);
    EXPECT_EQ(s.corners[1].lo, 1.5);
    EXPECT_EQ(s.corners[1].lo_side, LamSide::minus);
    EXPECT_EQ(s.corners[1].hi_side, LamSide::plus);
    ASSERT_EQ(s.straights.size(), 2u);
    EXPECT_EQ(s.straights[0].lo, 0.5);
    EXPECT_EQ(s.straights[0].hi, 2.0);
    EXPECT_DOUBLE_EQ(s.straight_coverage, 2.5 / 4.0);
    EXPECT_EQ(s.others.size(), 2u);
}

TEST(Segments, SingleCornerWhenCrossingOneRectangleCorner) {
    std::vector<Crossing> c{{1.0, LamSide::plus, 0.5}, {1.2, LamSide::minus, 0.5}};
    auto s = classify_segments(c, 3.0);
    EXPECT_EQ(s.corners.size(), 1u);
    EXPECT_TRUE(s.straights.empty());
    EXPECT_EQ(s.straight_coverage, 0.0);
}

TEST(Segments, RealPathAlternates) {
    const auto& w = world();
    auto rng = task_rng(9, 0);
    auto cr = leaf_crossings(w.G, sample_lebesgue_geodesic(rng), w.lam, 30);
    ASSERT_GT(cr.size(), 50u);
    for (std::size_t i = 1; i < cr.size(); ++i) EXPECT_GE(cr[i].t, cr[i - 1].t);
    auto s = classify_segments(cr, 30);
    for (const auto& c : s.corners) EXPECT_NE(c.lo_side, c.hi_side);
    EXPECT_GT(s.straight_coverage, 0.8);
}

// ---- fiber statistics

TEST(Fiber, FlatPathIsAllNearFiber) {
    SolvPath p;
    for (int i = 0; i <= 400; ++i) p.vertices.push_back({0.5 * i, 0.0, 0.0});
    std::vector<double> R{0.0, 0.5, 3.0};
    auto fs = fiber_stats(p, R, 3 + 2 * std::sqrt(2.0));
    for (double x : fs.proportion) EXPECT_EQ(x, 1.0);
}

TEST(Fiber, VerticalPathIsLinearInR) {
    const double k = 3 + 2 * std::sqrt(2.0);
    SolvPath p;
    for (int i = 0; i <= 120; ++i) p.vertices.push_back({0.0, 0.0, -60.0 + i});
    std::vector<double> R{0.0, 1.0, 10.5, 60.0, 80.0};
    auto fs = fiber_stats(p, R, k);
    for (std::size_t i = 0; i < R.size(); ++i) EXPECT_NEAR(fs.proportion[i], std::min(1.0, 2 * R[i] / 120.0), 1e-12);
    SolvPath shortp;
    for (int i = 0; i <= 10; ++i) shortp.vertices.push_back({0.0, 0.0, double(i)});
    EXPECT_THROW(fiber_stats(shortp, R, k), std::invalid_argument);
}

TEST(Fiber, DeficitFitRecoversDoubleExponential) {
    const double k = 3 + 2 * std::sqrt(2.0);
    std::vector<double> R, prop;
    for (double r = 0; r <= 2.0; r += 0.1) {
        R.push_back(r);
        prop.push_back(1 - std::exp(-0.2 * std::pow(k, r)));
    }
    auto d = deficit_fit(R, prop);
    EXPECT_TRUE(d.strictly_decreasing);
    // log log(1/deficit) = R log k + log 0.2 exactly
    EXPECT_NEAR(d.fit.slope, std::log(k), 1e-9);
    EXPECT_NEAR(d.fit.intercept, std::log(0.2), 1e-9);
    EXPECT_GE(d.fit.n, 3u);
    for (double x : d.R) EXPECT_LE(x, 2.0);
}

// ---- neighbourhood measures

TEST(BirmanSeries, MonotoneAndSaturates) {
    const auto& w = world();
    std::vector<double> r{1e-3, 1e-2, 1e-1, 10.0};
    auto t = birman_series_area(w.G, w.lam.plus.leaves, r, 4000, 1);
    for (std::size_t i = 1; i < t.rows.size(); ++i) EXPECT_GE(t.rows[i].area, t.rows[i - 1].area);
    EXPECT_NEAR(t.rows.back().area, 4 * pi, 1e-12);
    EXPECT_GT(t.rows[0].area, 0.0);
}

TEST(EndpointMeasure, MonotoneWithFullMassAtLargeRadius) {
    const auto& w = world();
    auto rng = task_rng(12, 0);
    std::vector<Geodesic> pairs;
    for (int i = 0; i < 1000; ++i) pairs.push_back(sample_lebesgue_geodesic(rng));
    std::vector<double> r{1e-3, 1e-2, 1e-1, 1.0, 2 * pi};
    auto t = endpoint_neighborhood_measure(pairs, w.lam.plus.leaves, r);
    for (std::size_t i = 1; i < t.rows.size(); ++i) EXPECT_GE(t.rows[i].freq.p, t.rows[i - 1].freq.p);
    EXPECT_EQ(t.rows.back().freq.p, 1.0);
    EXPECT_GT(t.alpha(), 0.0);
    EXPECT_THROW(endpoint_neighborhood_measure(std::span(pairs).first(999), w.lam.plus.leaves, r), std::invalid_argument);
}
