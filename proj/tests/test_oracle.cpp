#include <gtest/gtest.h>

#include <map>
#include <random>

#include "ctlab/cover.hpp"
#include "ctlab/oracle.hpp"

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

/// H^2 lower bounds: projecting to (u, z) or (s, z) is 1-Lipschitz onto a
/// hyperbolic plane (u, k^-z) resp. (s, k^z).
double projection_lower_bound(Vec2 a, double za, Vec2 b, double zb, double k) {
    double d1 = dist_h2({a.x, std::pow(k, -za)}, {b.x, std::pow(k, -zb)});
    double d2 = dist_h2({a.y, std::pow(k, za)}, {b.y, std::pow(k, zb)});
    return std::max(d1, d2);
}

}  // namespace

TEST(Cover, CornerCycleClosesAfterTwelveSectors) {
    const auto& w = world();
    FlatCover C(w.m.surface, w.G.presentation);
    int root = C.find_or_add(0, {});
    for (int c = 0; c < 4; ++c) {
        auto cyc = C.corner_cycle(root, c);
        EXPECT_EQ(cyc.size(), 12u);
    }
    // three sheets over each square around the cone point
    auto cyc = C.corner_cycle(root, BL);
    std::map<int, int> per_sq;
    for (auto [id, c] : cyc) per_sq[C[id].sq]++;
    for (auto [sq, n] : per_sq) EXPECT_EQ(n, 4);
    // going around a square returns to it
    int a = C.neighbor(root, Right), b = C.neighbor(a, Up), c2 = C.neighbor(b, Left), d = C.neighbor(c2, Down);
    EXPECT_NE(a, root);
    (void)d;
    EXPECT_EQ(C.neighbor(C.neighbor(root, Right), Left), root);
}

TEST(Marking, ContinuousAcrossTileSides) {
    const auto& w = world();
    FlatCover C(w.m.surface, w.G.presentation);
    Marking M(w.G, w.m.surface);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int side = 0; side < 8; ++side)
        for (int trial = 0; trial < 20; ++trial) {
            // a point on side `side`, nudged either way along the perpendicular
            HPoint v0 = w.G.octagon.vertex_point(side), v1 = w.G.octagon.vertex_point((side + 1) % 8);
            Geodesic g = geodesic_through(v0, v1);
            double t0 = projection_parameter(g, v0), t1 = projection_parameter(g, v1);
            Frame at = g.lift(t0 + u(rng) * (t1 - t0));
            Frame perp = at * rotation(pi / 4);  // quarter turn of the tangent vector
            HPoint in = base_point(geodesic_flow(perp, 1e-7)), out = base_point(geodesic_flow(perp, -1e-7));
            auto a = M.image(in, C), b = M.image(out, C);
            EXPECT_LT((a.dev - b.dev).norm(), 1e-5) << "side " << side;
        }
}

TEST(Marking, Equivariant) {
    const auto& w = world();
    FlatCover C(w.m.surface, w.G.presentation);
    Marking M(w.G, w.m.surface);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> r(0, 0.8), a(0, 2 * pi);
    for (int trial = 0; trial < 100; ++trial) {
        HPoint p = from_disk(std::polar(r(rng), a(rng)));
        GroupWord g;
        for (int i = 0; i < 6; ++i) g.push(int(rng() % 8));
        auto ip = M.image(p, C), igp = M.image(act(w.G.evaluate(g), p), C);
        Vec2 expect = ip.dev + C.developed(g);
        EXPECT_LT((igp.dev - expect).norm(), 1e-6);
        EXPECT_TRUE(w.G.presentation.is_trivial(igp.word.inverse() * g * ip.word));
    }
}

TEST(Oracle, ZeroAndVertical) {
    const auto& w = world();
    FlatCover C(w.m.surface, w.G.presentation);
    int root = C.find_or_add(0, {});
    auto region = grow_region(C, {root}, 1);
    SolvOracle O(C, w.m.pa, region, {0.1, -2, 2, 1});
    auto p = SolvOracle::point(root, {0.4, 0.6}, 0.0);
    auto q = SolvOracle::point(root, {0.4, 0.6}, 1.0);
    auto r = O.distances(p, {p, q});
    EXPECT_EQ(r.distance[0], 0.0);
    const double lk = w.m.pa.log_k();
    EXPECT_NEAR(r.distance[1], lk, 2 * 0.1 * lk);
    // the same pair placed in different lifted squares goes through the grid
    int nb = C.neighbor(root, Right);
    auto q2 = SolvOracle::point(nb, {0.02, 0.6}, 1.0);
    auto p2 = SolvOracle::point(root, {0.98, 0.6}, 0.0);
    auto r2 = O.distances(p2, {q2});
    EXPECT_GT(r2.distance[0], lk);
    EXPECT_LT(r2.distance[0], lk + 4 * 0.1 * lk);
}

TEST(Oracle, AboveAnalyticLowerBounds) {
    const auto& w = world();
    const double k = w.m.pa.k;
    FlatCover C(w.m.surface, w.G.presentation);
    int root = C.find_or_add(0, {});
    auto region = grow_region(C, {root}, 2);
    SolvOracle O(C, w.m.pa, region, {0.1, -2.5, 2.5, 1});
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.05, 0.95), z(-1, 1);
    auto inner = grow_region(C, {root}, 0);
    int checked = 0;
    for (int s = 0; s < 10; ++s) {
        int ia = inner[rng() % inner.size()];
        Vec2 la{u(rng), u(rng)};
        double za = z(rng);
        std::vector<QueryPoint> targets;
        std::vector<Vec2> eb;
        std::vector<double> zb;
        for (int t = 0; t < 10; ++t) {
            int ib = inner[rng() % inner.size()];
            Vec2 lb{u(rng), u(rng)};
            zb.push_back(z(rng));
            targets.push_back(SolvOracle::point(ib, lb, zb.back()));
            eb.push_back(w.m.pa.eigen(Vec2{C[ib].X + lb.x, C[ib].Y + lb.y}));
        }
        auto res = O.distances(SolvOracle::point(ia, la, za), targets);
        Vec2 ea = w.m.pa.eigen(Vec2{C[ia].X + la.x, C[ia].Y + la.y});
        for (int t = 0; t < 10; ++t) {
            EXPECT_GE(res.distance[t], projection_lower_bound(ea, za, eb[t], zb[t], k) - 1e-12);
            ++checked;
        }
    }
    EXPECT_EQ(checked, 100);
}

TEST(Oracle, RefinementDecreases) {
    const auto& w = world();
    FlatCover C(w.m.surface, w.G.presentation);
    int root = C.find_or_add(0, {});
    auto region = grow_region(C, {root}, 1);
    SolvOracle coarse(C, w.m.pa, region, {0.1, -1, 1, 1});
    SolvOracle fine(C, w.m.pa, region, {0.05, -1, 1, 1});
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.05, 0.95), z(-0.5, 0.5);
    auto src = SolvOracle::cone(C, root, BL, 0.13);
    std::vector<QueryPoint> targets;
    for (int i = 0; i < 10; ++i) targets.push_back(SolvOracle::point(region[rng() % 12], {u(rng), u(rng)}, z(rng)));
    auto a = coarse.distances(src, targets), b = fine.distances(src, targets);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        EXPECT_LE(b.distance[i], a.distance[i] + 1e-9);
        EXPECT_GT(b.distance[i], 0.0);
    }
}

TEST(Oracle, RejectsBadInput) {
    const auto& w = world();
    FlatCover C(w.m.surface, w.G.presentation);
    int root = C.find_or_add(0, {});
    auto region = grow_region(C, {root}, 0);
    EXPECT_THROW(SolvOracle(C, w.m.pa, region, {0.2, -1, 1, 1}), std::invalid_argument);
    SolvOracle O(C, w.m.pa, region, {0.1, -1, 1, 1});
    EXPECT_THROW((void)O.distances(SolvOracle::point(root, {0.5, 0.5}, 3.0), {}), std::invalid_argument);
    int far = C.neighbor(C.neighbor(C.neighbor(root, Right), Right), Right);
    far = C.neighbor(C.neighbor(far, Right), Right);
    EXPECT_THROW((void)O.distances(SolvOracle::point(far, {0.5, 0.5}, 0.0), {}), std::invalid_argument);
}
