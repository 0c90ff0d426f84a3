#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ctlab/cover.hpp"
#include "ctlab/flatmodel.hpp"
#include "ctlab/hyp2.hpp"
#include "ctlab/oracle.hpp"
#include "ctlab/randwalk.hpp"
#include "ctlab/solvqg.hpp"
#include "ctlab/stats.hpp"
#include "ctlab/surface.hpp"

namespace ctlab {

class HeightError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- closed flat geodesics

/// Octagon letters crossed by the closed flat geodesic through `start` with
/// integer holonomy v, over one period. Side choices are decided exactly on
/// the integer lattice, so a period of 10^6 squares does not drift.
inline std::vector<std::uint8_t> closed_geodesic_letters(const TranslationSurface& S, SurfacePoint start,
                                                        std::array<long, 2> v) {
    if (v[0] == 0 && v[1] == 0) throw FlatModelError("closed geodesic needs nonzero holonomy");
    using i128 = __int128;
    // developed line P(t) = start + t v; c = s_x v_y - s_y v_x is its lattice offset
    const double c = start.x * double(v[1]) - start.y * double(v[0]);
    std::vector<std::uint8_t> out;
    int sq = start.sq;
    long cx = 0, cy = 0;  // developed lower-left corner of the current square
    const long sx = v[0] > 0 ? 1 : (v[0] < 0 ? -1 : 0), sy = v[1] > 0 ? 1 : (v[1] < 0 ? -1 : 0);
    const long steps = std::abs(v[0]) + std::abs(v[1]);
    for (long n = 0; n < steps; ++n) {
        int side;
        if (sx == 0) side = sy > 0 ? Up : Down;
        else if (sy == 0) side = sx > 0 ? Right : Left;
        else {
            // the corner the line heads towards; which side of it the line passes decides the exit
            long X = cx + (sx > 0 ? 1 : 0), Y = cy + (sy > 0 ? 1 : 0);
            double off = double(i128(X) * v[1] - i128(Y) * v[0]) - c;  // > 0: corner right of the line
            if (std::abs(off) < 1e-7) throw FlatModelError("closed geodesic passes through a cone point");
            bool corner_left = off < 0;
            // heading up-right, a corner on the left is passed on its right, through the right side
            bool vertical_exit = (sx * sy > 0) ? corner_left : !corner_left;
            side = vertical_exit ? (sx > 0 ? Right : Left) : (sy > 0 ? Up : Down);
        }
        int l = S.edge_letter[sq][side];
        if (l >= 0) out.push_back(static_cast<std::uint8_t>(l));
        sq = S.neighbor(sq, side);
        if (side == Right) ++cx;
        else if (side == Left) --cx;
        else if (side == Up) ++cy;
        else --cy;
    }
    if (sq != start.sq || cx != v[0] || cy != v[1]) throw FlatModelError("closed geodesic does not close up");
    return out;
}

/// Geodesics up to a tolerance: an unordered endpoint pair within tol (in
/// disk angle) of one already kept is dropped.
class GeodesicSet {
public:
    explicit GeodesicSet(double tol) : tol_(tol) {
        if (!(tol > 0)) throw std::invalid_argument("dedup tolerance must be positive");
        cells_ = static_cast<long>(std::ceil(2 * pi / tol));
    }

    bool insert(const Geodesic& g) {
        auto [a, b] = angles(g);
        long ca = cell(a), cb = cell(b);
        for (long di = -1; di <= 1; ++di)
            for (long dj = -1; dj <= 1; ++dj) {
                auto it = grid_.find(key(ca + di, cb + dj));
                if (it == grid_.end()) continue;
                for (std::size_t k : it->second) {
                    auto [x, y] = angles(items_[k]);
                    double e1 = std::max(angle_gap(a, x), angle_gap(b, y)), e2 = std::max(angle_gap(a, y), angle_gap(b, x));
                    if (std::min(e1, e2) <= tol_) return false;
                }
            }
        grid_[key(ca, cb)].push_back(items_.size());
        items_.push_back(g);
        return true;
    }

    [[nodiscard]] const std::vector<Geodesic>& items() const { return items_; }
    std::vector<Geodesic> take() { return std::move(items_); }

private:
    static std::pair<double, double> angles(const Geodesic& g) { return {g.from.angle(), g.to.angle()}; }
    [[nodiscard]] long cell(double a) const { return static_cast<long>(std::floor(a / tol_)); }
    [[nodiscard]] std::uint64_t key(long i, long j) const {
        i = (i % cells_ + cells_) % cells_;
        j = (j % cells_ + cells_) % cells_;
        if (i > j) std::swap(i, j);
        return splitmix64(std::uint64_t(i) * 0x9e3779b97f4a7c15ULL ^ std::uint64_t(j));
    }
    double tol_;
    long cells_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> grid_;
    std::vector<Geodesic> items_;
};

inline std::vector<Geodesic> dedup_geodesics(const std::vector<Geodesic>& in, double tol) {
    GeodesicSet S(tol);
    for (const auto& g : in) S.insert(g);
    return S.take();
}

/// Lifts of the geodesic representative of a closed curve, given by its
/// cyclic deck word, that pass within `radius` of the basepoint i, up to
/// `tol`. The lift through the j-th tile is w_j^-1 axis(g) with w_j the j-th
/// prefix; the forward endpoints are propagated backwards and the backward
/// endpoints forwards, the directions in which the boundary maps contract.
/// The backward pass is checkpointed so long words need little memory.
inline std::vector<Geodesic> lifts_near_basepoint(const FuchsianGroup& G, std::span<const std::uint8_t> word, double radius,
                                                  double tol) {
    if (word.empty()) throw HeightError("empty curve word");
    ScaledFrame g;
    for (auto l : word) g.mul(G.generator(l));
    const Frame& m = g.m;
    // fixed points of g: roots of c x^2 + (d - a) x - b = 0, as projective vectors
    double tr = m.a + m.d, det = m.a * m.d - m.b * m.c;
    double disc = tr * tr - 4 * det;
    if (!(disc > 0)) throw HeightError("curve word is not hyperbolic");
    double sq = std::sqrt(disc);
    // attracting eigenvalue (tr + sq)/2 has eigenvector (lambda - d, c) or (b, lambda - a)
    auto eigvec = [&](double lam) {
        double u1 = lam - m.d, v1 = m.c, u2 = m.b, v2 = lam - m.a;
        double n1 = std::hypot(u1, v1), n2 = std::hypot(u2, v2);
        return n1 >= n2 ? BoundaryPoint{u1 / n1, v1 / n1} : BoundaryPoint{u2 / n2, v2 / n2};
    };
    double lp = tr > 0 ? (tr + sq) / 2 : (tr - sq) / 2;
    double lm = det / lp;
    const std::size_t M = word.size();
    std::array<Frame, 8> gen, inv;
    for (int i = 0; i < 8; ++i) {
        gen[i] = G.generator(i);
        inv[i] = gen[i].inverse();
    }
    auto renorm = [](BoundaryPoint p) {
        double n = std::hypot(p.u, p.v);
        return BoundaryPoint{p.u / n, p.v / n};
    };
    constexpr std::size_t B = 4096;
    const std::size_t blocks = (M + B - 1) / B;
    std::vector<BoundaryPoint> check(blocks + 1);  // fp at multiples of B, and at M
    BoundaryPoint cur = eigvec(lp);
    check[blocks] = cur;
    for (std::size_t j = M; j-- > 0;) {
        cur = renorm(act(gen[word[j]], cur));
        if (j % B == 0) check[j / B] = cur;
    }
    GeodesicSet out(tol);
    std::vector<BoundaryPoint> fp(B + 1);
    BoundaryPoint fm = eigvec(lm);
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::size_t lo = blk * B, hi = std::min(M, lo + B);
        fp[hi - lo] = blk + 1 == blocks ? check[blocks] : check[blk + 1];
        for (std::size_t j = hi; j-- > lo;) fp[j - lo] = renorm(act(gen[word[j]], fp[j - lo + 1]));
        for (std::size_t j = lo; j < hi; ++j) {
            if (j > 0) fm = renorm(act(inv[word[j - 1]], fm));
            Geodesic gj{fm, fp[j - lo]};
            if (boundary_gap(gj.from, gj.to) < 1e-14) continue;
            if (distance_to_geodesic(gj, origin()) <= radius) out.insert(gj);
        }
    }
    return out.take();
}

/// Deck elements whose tile centre lies within r of the basepoint.
inline std::vector<Frame> tiles_near_basepoint(const FuchsianGroup& G, double r) {
    std::vector<Frame> out{Frame::identity()};
    std::unordered_set<std::uint64_t> seen;
    auto key = [](HPoint p) {
        auto z = to_disk(p);
        return splitmix64(static_cast<std::uint64_t>(std::llround(z.real() * 1e7) + (1LL << 40))) ^
               static_cast<std::uint64_t>(std::llround(z.imag() * 1e7) + (1LL << 40));
    };
    seen.insert(key(origin()));
    for (std::size_t i = 0; i < out.size(); ++i)
        for (int l = 0; l < 8; ++l) {
            Frame g = out[i] * G.generator(l);
            HPoint c = act(g, origin());
            if (dist_h2(c, origin()) > r) continue;
            if (seen.insert(key(c)).second) out.push_back(g);
        }
    return out;
}

/// Endpoint angles normalized to [0, 2 pi).
inline std::pair<double, double> endpoint_angles(const Geodesic& g) {
    auto wrap = [](double a) { return a - 2 * pi * std::floor(a / (2 * pi)); };
    return {wrap(g.from.angle()), wrap(g.to.angle())};
}

/// Transversal crossing from endpoint angles; pairs sharing an endpoint (within tol) do not cross.
inline bool endpoints_cross(std::pair<double, double> a, std::pair<double, double> b, double tol = 1e-12) {
    for (double x : {b.first, b.second})
        for (double y : {a.first, a.second})
            if (angle_gap(x, y) < tol) return false;
    double lo = std::min(a.first, a.second), hi = std::max(a.first, a.second);
    bool in1 = lo < b.first && b.first < hi, in2 = lo < b.second && b.second < hi;
    return in1 != in2;
}

inline bool geodesics_cross(const Geodesic& a, const Geodesic& b) { return endpoints_cross(endpoint_angles(a), endpoint_angles(b)); }

inline std::size_t crossing_count(const std::vector<Geodesic>& leaves) {
    std::vector<std::pair<double, double>> e;
    for (const auto& g : leaves) e.push_back(endpoint_angles(g));
    std::size_t n = 0;
    for (std::size_t i = 0; i < e.size(); ++i)
        for (std::size_t j = i + 1; j < e.size(); ++j) n += endpoints_cross(e[i], e[j]);
    return n;
}

/// Distance between unoriented geodesics in the visual metric of their endpoint pairs.
inline double leaf_gap(const Geodesic& a, const Geodesic& b) {
    auto [a0, a1] = endpoint_angles(a);
    auto [b0, b1] = endpoint_angles(b);
    return std::min(std::max(angle_gap(a0, b0), angle_gap(a1, b1)), std::max(angle_gap(a0, b1), angle_gap(a1, b0)));
}

// ---------------------------------------------------------------- laminations

enum class LamSide { plus, minus };

struct LaminationApprox {
    LamSide side = LamSide::plus;
    int depth = 0;
    double ball_radius = 0.0;
    std::vector<Geodesic> leaves;     ///< lifts of f^{+-depth}(c) meeting the ball
    std::vector<Geodesic> diagonals;  ///< diagonals of the complementary polygons, for the extension
    std::size_t raw_lifts = 0;        ///< before de-duplication
    std::size_t word_length = 0;

    [[nodiscard]] std::size_t size() const { return leaves.size() + diagonals.size(); }
    template <class F>
    void for_each(bool extended, F&& f) const {
        for (const auto& g : leaves) f(g);
        if (extended)
            for (const auto& g : diagonals) f(g);
    }
};

struct LaminationPair {
    LaminationApprox plus, minus;
};

struct LaminationOptions {
    int depth = 8;
    double ball_radius = 3.5;       ///< covers the octagon (circumradius ~2.45) with a margin
    double dedup_tol = 1e-10;       ///< endpoint-angle tolerance for identifying lifts
    double separatrix_length = 40;  ///< flat length of the rays that locate polygon vertices
    bool extended = true;
};

/// The curve c: the closed horizontal core of the top cylinder of the canonical surface.
inline SurfacePoint core_curve_point() { return {2, 0.5, 0.5}; }

/// Holonomy D^n (1,0) for n >= 0, D^-n (1,0) for n < 0.
inline std::array<long, 2> iterate_holonomy(const PseudoAnosov& f, int n) {
    std::array<long, 2> v{1, 0};
    const auto& D = f.derivative;
    for (int i = 0; i < std::abs(n); ++i) {
        long x = v[0], y = v[1];
        if (n > 0) v = {D[0] * x + D[1] * y, D[2] * x + D[3] * y};
        else v = {D[3] * x - D[1] * y, -D[2] * x + D[0] * y};  // inverse of a det-1 matrix
    }
    return v;
}

/// Hyperbolic point of the octagon tiling that marks a flat point of the cover.
class FlatToHyperbolic {
public:
    FlatToHyperbolic(const FuchsianGroup& G, const TranslationSurface& S) : G_(&G), S_(&S) {
        double r = std::tanh(G.octagon.vertex / 2);
        double kr = 2 * r / (1 + r * r);
        for (int k = 0; k < 8; ++k) {
            double a = OctagonGeometry::vertex_angle(k);
            klein_[k] = {kr * std::cos(a), kr * std::sin(a)};
        }
        flat_ = {{{0, 0}, {1, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}, {0, 1}}};
    }

    /// Inverse of the fan map: L-polygon point to octagon point.
    [[nodiscard]] HPoint unfan(Vec2 q) const {
        Vec2 c = Marking::centre();
        Vec2 d = q - c;
        for (int k = 0; k < 8; ++k) {
            Vec2 A = flat_[k] - c, B = flat_[(k + 1) % 8] - c;
            double det = A.x * B.y - A.y * B.x;
            double la = (d.x * B.y - d.y * B.x) / det, lb = (A.x * d.y - A.y * d.x) / det;
            if (la >= -1e-12 && lb >= -1e-12 && la + lb <= 1 + 1e-12) {
                Vec2 kp = la * klein_[k] + lb * klein_[(k + 1) % 8];
                double n2 = kp.x * kp.x + kp.y * kp.y;
                double s = 1 / (1 + std::sqrt(std::max(0.0, 1 - n2)));  // Klein to Poincare disk
                return from_disk({s * kp.x, s * kp.y});
            }
        }
        throw HeightError("point outside the marking polygon");
    }

    /// Disk angle, seen from i, of the image of a point in a lifted square.
    [[nodiscard]] double angle(const GroupWord& w, int sq, Vec2 local) const {
        ScaledFrame g;
        for (auto l : w.letters) g.mul(G_->generator(l));
        HPoint p = unfan(S_->square_offset[sq] + local);
        // g p seen from i: conjugate p to i first
        Frame to_p{std::sqrt(p.y), p.x / std::sqrt(p.y), 0, 1 / std::sqrt(p.y)};
        g.mul(to_p);
        return g.angle();
    }

private:
    const FuchsianGroup* G_;
    const TranslationSurface* S_;
    std::array<Vec2, 8> klein_{};
    std::array<Vec2, 8> flat_{};
};

struct PolygonLeaves {
    std::vector<Geodesic> sides;      ///< consecutive prongs: leaves of the lamination itself
    std::vector<Geodesic> diagonals;  ///< the remaining pairs
};

/// Sides and diagonals of the complementary polygons around lifted cone points
/// near the basepoint. Each prong of the foliation at a lifted cone point is a
/// flat ray in direction +-e (e = e_s for plus, e_u for minus); its far end
/// locates an ideal vertex of the polygon.
inline PolygonLeaves polygon_leaves(const CanonicalModel& m, const FuchsianGroup& G, LamSide side, double ball_radius,
                                    double ray_length) {
    const auto& S = m.surface;
    FlatCover C(S, G.presentation);
    FlatToHyperbolic F(G, S);
    Vec2 e = side == LamSide::plus ? m.pa.e_s : m.pa.e_u;
    int root = C.find_or_add(0, {});
    auto region = grow_region(C, {root}, 2);
    PolygonLeaves out;
    std::unordered_set<std::uint64_t> seen_vertex;
    auto key_of = [](const std::pair<int, int>& s) { return std::uint64_t(s.first) * 4 + std::uint64_t(s.second); };
    for (int id : region)
        for (int c = 0; c < 4; ++c) {
            HPoint vp = F.unfan(S.square_offset[C[id].sq] + corner_offset(c));
            if (dist_h2(act(G.evaluate(C[id].word), vp), origin()) > ball_radius + 4.0) continue;
            auto cyc = C.corner_cycle(id, c);
            // the lifted vertex is identified by its smallest sector
            std::uint64_t key = ~std::uint64_t{0};
            for (const auto& sc : cyc) key = std::min(key, key_of(sc));
            if (!seen_vertex.insert(key).second) continue;
            // prong endpoints in counterclockwise order
            std::vector<double> ends;
            for (auto [sid, sc] : cyc) {
                double base = corner_base_angle(sc);
                for (double sgn : {1.0, -1.0}) {
                    Vec2 d = sgn * e;
                    double rel = std::remainder(std::atan2(d.y, d.x) - base - pi / 4, 2 * pi) + pi / 4;
                    if (rel < 0 || rel >= pi / 2) continue;
                    Vec2 start = corner_offset(sc);
                    Trace tr = trace_ray(S, nullptr, {C[sid].sq, start.x, start.y}, d, ray_length);
                    if (tr.cone) throw HeightError("separatrix ends in a cone point");
                    ends.push_back(F.angle(C[sid].word * tr.word, tr.end.sq, {tr.end.x, tr.end.y}));
                }
            }
            const std::size_t n = ends.size();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) {
                    Geodesic g = Geodesic::from_angles(ends[i], ends[j]);
                    if (distance_to_geodesic(g, origin()) > ball_radius) continue;
                    bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
                    (adjacent ? out.sides : out.diagonals).push_back(g);
                }
        }
    return out;
}

inline LaminationApprox approximate_lamination(const CanonicalModel& m, const FuchsianGroup& G, LamSide side,
                                               const LaminationOptions& opt = {}) {
    if (opt.depth < 0 || opt.depth > 12) throw std::invalid_argument("lamination depth must be in [0, 12]");
    // the plus lamination carries the measure weighted by k^z, so its leaves
    // run along e_s and it is the limit of backward iterates
    const int n = side == LamSide::plus ? -opt.depth : opt.depth;
    SurfacePoint p = core_curve_point();
    for (int i = 0; i < opt.depth; ++i) p = side == LamSide::plus ? m.pa.apply_inverse(p) : m.pa.apply(p);
    auto v = iterate_holonomy(m.pa, n);
    auto word = closed_geodesic_letters(m.surface, p, v);
    LaminationApprox L;
    L.side = side;
    L.depth = opt.depth;
    L.ball_radius = opt.ball_radius;
    L.word_length = word.size();
    // lifts along the cutting sequence all cross the base tile; translating
    // them by nearby tiles gives every lift meeting the ball
    auto base = lifts_near_basepoint(G, word, opt.ball_radius, opt.dedup_tol);
    std::vector<Geodesic> lifts;
    for (const Frame& g : tiles_near_basepoint(G, opt.ball_radius + G.octagon.vertex + 2.0))
        for (const auto& l : base) {
            Geodesic t = act(g, l);
            if (distance_to_geodesic(t, origin()) <= opt.ball_radius) lifts.push_back(t);
        }
    L.raw_lifts = lifts.size();
    L.leaves = dedup_geodesics(lifts, opt.dedup_tol);
    if (crossing_count(L.leaves) > 0) throw HeightError("leaves of one lamination cross");
    if (opt.extended) {
        auto P = polygon_leaves(m, G, side, opt.ball_radius, opt.separatrix_length);
        L.diagonals = dedup_geodesics(P.diagonals, 1e-9);
    }
    return L;
}

inline LaminationPair approximate_laminations(const CanonicalModel& m, const FuchsianGroup& G, const LaminationOptions& opt = {}) {
    return {approximate_lamination(m, G, LamSide::plus, opt), approximate_lamination(m, G, LamSide::minus, opt)};
}

// ---------------------------------------------------------------- lamination measurements

/// Hausdorff distance between two leaf sets in the endpoint-pair metric. Only
/// leaves within `inner` of the basepoint are matched, against the whole other
/// set, so leaves whose partners sit just outside the ball do not count.
inline double hausdorff_leaves(const std::vector<Geodesic>& a, const std::vector<Geodesic>& b, double inner) {
    auto one_way = [&](const std::vector<Geodesic>& x, const std::vector<Geodesic>& y) {
        double worst = 0.0;
        for (const auto& g : x) {
            if (distance_to_geodesic(g, origin()) > inner) continue;
            double best = pi;
            for (const auto& h : y) best = std::min(best, leaf_gap(g, h));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(one_way(a, b), one_way(b, a));
}

/// Closest approach of the two sides: crossing angles for crossing pairs,
/// hyperbolic distance for disjoint ones. Both are comparable to the
/// unit-tangent-bundle distance between the lifted leaves.
struct Separation {
    double min_angle = std::numeric_limits<double>::infinity();
    double min_distance = std::numeric_limits<double>::infinity();
    std::size_t shared_endpoints = 0;
    [[nodiscard]] double value() const { return shared_endpoints ? 0.0 : std::min(min_angle, min_distance); }
};

inline Separation cross_side_separation(const std::vector<Geodesic>& a, const std::vector<Geodesic>& b) {
    Separation s;
    for (const auto& g : a)
        for (const auto& h : b) {
            try {
                Configuration c = configuration(g, h);
                if (c.intersecting) s.min_angle = std::min(s.min_angle, c.theta);
                else s.min_distance = std::min(s.min_distance, c.theta);
            } catch (const GeometryError&) {
                ++s.shared_endpoints;
            }
        }
    return s;
}

inline std::vector<Geodesic> extended_leaves(const LaminationApprox& L) {
    std::vector<Geodesic> out;
    L.for_each(true, [&](const Geodesic& g) { out.push_back(g); });
    return out;
}

// ---------------------------------------------------------------- radius and height

/// Distance in the unit tangent bundle from a frame to the lifts of a lamination.
class RadiusField {
public:
    /// Distances at or above this are reported as the cap; they all give radius 1.
    static constexpr double cap = 0.36787944117144233;  // 1/e

    RadiusField(const FuchsianGroup& G, const LaminationApprox& L, bool extended = true) : G_(&G) {
        L.for_each(extended, [&](const Geodesic& g) {
            Leaf lf;
            lf.g = g;
            lf.inv = g.frame().inverse();
            lf.base = distance_to_geodesic(g, origin());
            leaves_.push_back(lf);
        });
        if (leaves_.empty()) throw HeightError("radius function needs a nonempty leaf set");
        std::sort(leaves_.begin(), leaves_.end(), [](const Leaf& x, const Leaf& y) { return x.base < y.base; });
    }

    [[nodiscard]] std::size_t size() const { return leaves_.size(); }
    [[nodiscard]] const Geodesic& leaf(std::size_t i) const { return leaves_[i].g; }

    /// min(d(v, leaves), cap); v is moved into the fundamental domain first.
    [[nodiscard]] double distance(const Frame& v) const {
        Reduction r = reduce_to_domain(base_point(v), *G_);
        Frame w = r.word.empty() ? v : (G_->evaluate(r.word).inverse() * v).renormalized();
        return distance_reduced(w);
    }

    /// Same for a frame whose base point is already in the domain.
    [[nodiscard]] double distance_reduced(const Frame& w) const {
        HPoint p = base_point(w);
        double dp = dist_h2(p, origin());
        double best = cap;
        for (const auto& lf : leaves_) {
            // the base-point distance bounds the tangent distance from below
            if (lf.base - dp >= best) break;
            HPoint z = act(lf.inv, p);
            if (std::asinh(std::abs(z.x) / z.y) >= best) continue;
            // only the orientation making an acute angle with w can be within the cap:
            // in leaf coordinates w points upward iff |d| > |c|
            Frame wl = lf.inv * w;
            best = std::min(best, tangent_to_geodesic_distance(w, std::abs(wl.d) > std::abs(wl.c) ? lf.g : lf.g.reversed()));
        }
        return best;
    }

    [[nodiscard]] double radius(const Frame& v) const { return radius_from_distance(distance(v)); }

    static double radius_from_distance(double d) { return std::max(1.0, std::log(1.0 / d)); }

private:
    struct Leaf {
        Geodesic g;
        Frame inv;
        double base = 0.0;
    };
    const FuchsianGroup* G_;
    std::vector<Leaf> leaves_;
};

/// Estimated lamination constants; every one is measured or fitted.
struct LaminationConstants {
    double alpha = 0.0;       ///< least crossing angle between the two sides
    double L = 0.0;           ///< length beyond which a geodesic meets both laminations
    double rho = 0.0;         ///< overlap radius
    double D = 0.0;           ///< innermost polygon diameter
    double Q = 1.0, c = 0.0;  ///< quasi-isometry constants between the hyperbolic and CT metrics
    double theta0 = 0.01, L0 = 1.0, T0 = ctlab::T0;
    double theta_P = 1.0;
    double separation = 0.0;  ///< distance between the two extended laminations in the tangent bundle

    [[nodiscard]] double theta_min() const {
        return std::min({alpha, rho, 0.5 * separation, theta0, 1.0 / L0, theta_P, 1.0});
    }
    /// The cutoff the quasigeodesic proof uses; astronomically small in practice.
    [[nodiscard]] double theta_lambda() const {
        double m = theta_min();
        return std::pow(m, 6) * std::exp(-6 * (T0 + L + 3 * rho + D + Q * c));
    }
};

struct HeightConfig {
    double theta = 0.01;
    double k = 3 + 2 * std::sqrt(2.0);
    std::optional<LaminationConstants> constants;

    void validate() const {
        if (!(theta > 0)) throw std::invalid_argument("theta must be positive");
        if (!(k > 1)) throw std::invalid_argument("stretch factor must exceed 1");
        if (constants && theta > constants->theta_min())
            throw std::invalid_argument("theta exceeds the minimum of the lamination constants");
    }
};

inline double clamp1(double x) { return std::max(x, 1.0); }

inline double height_from_radii(double rho_plus, double rho_minus, const HeightConfig& cfg) {
    const double lt = std::log(1.0 / cfg.theta), lk = std::log(cfg.k);
    return std::log(clamp1(rho_plus - lt)) / lk - std::log(clamp1(rho_minus - lt)) / lk;
}

inline constexpr double exceptional_distance = 1e-12;

inline double height(const Frame& v, const RadiusField& plus, const RadiusField& minus, const HeightConfig& cfg) {
    double dp = plus.distance(v), dm = minus.distance(v);
    if (dp < exceptional_distance || dm < exceptional_distance) throw HeightError("exceptional direction: frame lies on a leaf");
    return height_from_radii(RadiusField::radius_from_distance(dp), RadiusField::radius_from_distance(dm), cfg);
}

// ---------------------------------------------------------------- test paths

struct HeightSample {
    double t = 0.0;
    double rho_plus = 1.0, rho_minus = 1.0;
    double h = 0.0;
    double dx_cum = 0.0, dy_cum = 0.0;  ///< transverse measures travelled so far
    double arclen = 0.0;                ///< CT arclength of the test path so far
};

struct HeightProfile {
    std::vector<HeightSample> samples;
};

inline void write_profile_csv(std::ostream& os, const HeightProfile& p) {
    os << "t,rho_plus,rho_minus,h,dx_cum,dy_cum,arclen\n";
    os.precision(17);
    for (const auto& s : p.samples)
        os << s.t << ',' << s.rho_plus << ',' << s.rho_minus << ',' << s.h << ',' << s.dx_cum << ',' << s.dy_cum << ','
           << s.arclen << '\n';
}

struct TestPath {
    Geodesic gamma;
    HeightProfile profile;
    SolvPath path;                       ///< (u, s, z) of every sample
    std::vector<Marking::Image> images;  ///< flat position of every sample in the cover
};

/// Throws when an endpoint of gamma is within tol of an endpoint of an approximated leaf.
inline void check_non_exceptional(const Geodesic& gamma, const RadiusField& plus, const RadiusField& minus, double tol = 1e-6) {
    double a = gamma.from.angle(), b = gamma.to.angle();
    for (const RadiusField* F : {&plus, &minus})
        for (std::size_t i = 0; i < F->size(); ++i) {
            const auto& g = F->leaf(i);
            for (double e : {g.from.angle(), g.to.angle()})
                if (angle_gap(a, e) < tol || angle_gap(b, e) < tol) throw HeightError("exceptional geodesic: endpoint on a leaf");
        }
}

/// Test path over gamma for t in [0, T], t = 0 at the point nearest the octagon centre.
inline TestPath test_path(const CanonicalModel& m, const FuchsianGroup& G, const Geodesic& gamma, const RadiusField& plus,
                          const RadiusField& minus, const HeightConfig& cfg, double T, double step = 0.01) {
    cfg.validate();
    if (!(T > 0)) throw std::invalid_argument("test path length must be positive");
    check_non_exceptional(gamma, plus, minus);
    FlatCover C(m.surface, G.presentation);
    Marking M(G, m.surface);
    TestPath tp;
    tp.gamma = gamma;
    auto flow = flow_on_surface(centered_lift(gamma, 0.0), T, step, G);
    GroupWord W;
    HeightSample acc;
    for (const auto& fs : flow) {
        if (!fs.word.empty()) {
            W = W * fs.word;
            W.free_reduce();
        }
        double dp = plus.distance_reduced(fs.frame), dm = minus.distance_reduced(fs.frame);
        if (dp < exceptional_distance || dm < exceptional_distance) throw HeightError("exceptional direction: frame lies on a leaf");
        HeightSample s;
        s.t = fs.t;
        s.rho_plus = RadiusField::radius_from_distance(dp);
        s.rho_minus = RadiusField::radius_from_distance(dm);
        s.h = height_from_radii(s.rho_plus, s.rho_minus, cfg);
        auto im = M.image_reduced(base_point(fs.frame), W, C);
        Vec2 e = m.pa.eigen(im.dev);
        SolvVertex v{e.x, e.y, s.h};
        if (!tp.path.vertices.empty()) {
            const auto& prev = tp.path.vertices.back();
            acc.dx_cum += std::abs(v.u - prev.u);
            acc.dy_cum += std::abs(v.s - prev.s);
            acc.arclen += ct_segment_length(prev, v, cfg.k);
        }
        s.dx_cum = acc.dx_cum;
        s.dy_cum = acc.dy_cum;
        s.arclen = acc.arclen;
        tp.profile.samples.push_back(s);
        tp.path.vertices.push_back(v);
        tp.images.push_back(std::move(im));
    }
    return tp;
}

/// Largest finite-difference slopes of rho_plus, rho_minus and h.
struct LipschitzSlopes {
    double radius = 0.0;
    double height = 0.0;
};

inline LipschitzSlopes lipschitz_slopes(const HeightProfile& p) {
    LipschitzSlopes L;
    for (std::size_t i = 1; i < p.samples.size(); ++i) {
        const auto &a = p.samples[i - 1], &b = p.samples[i];
        double dt = b.t - a.t;
        L.radius = std::max({L.radius, std::abs(b.rho_plus - a.rho_plus) / dt, std::abs(b.rho_minus - a.rho_minus) / dt});
        L.height = std::max(L.height, std::abs(b.h - a.h) / dt);
    }
    return L;
}

/// Oracle distances between sampled test-path points, measured from the first
/// point and (with both_sources) from the middle one, together with the same
/// pairs on the z = 0 image of gamma.
struct TestPathSamples {
    std::vector<QgSample> tau;   ///< distance between test-path points, path arclength between them
    std::vector<QgSample> iota;  ///< the same pairs at z = 0, arclength of the flat image
};

inline TestPathSamples test_path_samples(const CanonicalModel& m, const FuchsianGroup& G, const TestPath& tp, std::size_t stride,
                                         const OracleBox& box, bool both_sources = true) {
    if (stride == 0) throw std::invalid_argument("stride must be positive");
    FlatCover C(m.surface, G.presentation);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < tp.images.size(); i += stride) idx.push_back(i);
    std::vector<int> ids, seeds;
    for (std::size_t i : idx) ids.push_back(C.find_or_add(tp.images[i].sq, tp.images[i].word));
    // every lifted square the path crosses, for the region
    for (std::size_t i = 0; i < tp.images.size(); i += std::max<std::size_t>(1, stride / 4))
        seeds.push_back(C.find_or_add(tp.images[i].sq, tp.images[i].word));
    auto region = grow_region(C, seeds, box.margin);
    double zlo = 0, zhi = 0;
    for (const auto& v : tp.path.vertices) {
        zlo = std::min(zlo, v.z);
        zhi = std::max(zhi, v.z);
    }
    SolvOracle O(C, m.pa, region, {box.resolution, zlo - box.z_pad, zhi + box.z_pad, box.stencil});
    // flat-image arclength, the z = 0 counterpart of the profile's arclen
    std::vector<double> flat{0.0};
    for (std::size_t i = 1; i < tp.path.vertices.size(); ++i) {
        SolvVertex a = tp.path.vertices[i - 1], b = tp.path.vertices[i];
        a.z = b.z = 0;
        flat.push_back(flat.back() + ct_segment_length(a, b, m.pa.k));
    }
    TestPathSamples out;
    const std::size_t J = idx.size();
    for (std::size_t src : {std::size_t{0}, J / 2}) {
        if (src > 0 && !both_sources) break;
        for (bool lifted : {true, false}) {
            auto q = [&](std::size_t j) {
                const auto& im = tp.images[idx[j]];
                return SolvOracle::point(ids[j], im.local, lifted ? tp.path.vertices[idx[j]].z : 0.0);
            };
            std::vector<QueryPoint> targets;
            for (std::size_t j = src + 1; j < J; ++j) targets.push_back(q(j));
            if (targets.empty()) continue;
            auto r = O.distances(q(src), targets);
            for (std::size_t t = 0; t < targets.size(); ++t) {
                std::size_t a = idx[src], b = idx[src + 1 + t];
                if (lifted)
                    out.tau.push_back({r.distance[t], tp.profile.samples[b].arclen - tp.profile.samples[a].arclen, r.touched_boundary[t]});
                else
                    out.iota.push_back({r.distance[t], flat[b] - flat[a], r.touched_boundary[t]});
            }
        }
    }
    return out;
}

/// Fit of d(tau(s), tau(t)) <= K d(iota(s), iota(t)) + c over paired samples.
struct ProjectionFit {
    double K = 0.0, c = 0.0;
    std::size_t n = 0;
};

inline ProjectionFit fit_projection(const TestPathSamples& s) {
    ProjectionFit f;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < s.tau.size() && i < s.iota.size(); ++i) {
        if (s.tau[i].touched || s.iota[i].touched) continue;
        x.push_back(s.iota[i].distance);
        y.push_back(s.tau[i].distance);
    }
    f.n = x.size();
    if (f.n == 0) return f;
    // K from the pairs beyond the median distance, c takes up the rest
    double med = quantile(x, 0.5);
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] >= med && x[i] > 0) f.K = std::max(f.K, y[i] / x[i]);
    for (std::size_t i = 0; i < x.size(); ++i) f.c = std::max(f.c, y[i] - f.K * x[i]);
    return f;
}

// ---------------------------------------------------------------- crossings and segments

struct Crossing {
    double t = 0.0;
    LamSide side = LamSide::plus;
    double angle = 0.0;
};

/// Crossings of gamma (t in [0, T], parametrized as in test_path) with the
/// leaves of both laminations, found tile by tile in reduced coordinates.
inline std::vector<Crossing> leaf_crossings(const FuchsianGroup& G, const Geodesic& gamma, const LaminationPair& lam, double T,
                                            double step = 0.01) {
    auto flow = flow_on_surface(centered_lift(gamma, 0.0), T, step, G);
    std::vector<Crossing> out;
    for (std::size_t i = 0; i < flow.size(); ++i) {
        if (i > 0 && flow[i].word.empty()) continue;  // same tile as the previous sample
        const Frame& F = flow[i].frame;
        Geodesic g{act(F, BoundaryPoint::real(0.0)), act(F, BoundaryPoint::infinity())};
        double offset = projection_parameter(g, base_point(F));
        for (const LaminationApprox* L : {&lam.plus, &lam.minus})
            for (const auto& leaf : L->leaves) {
                Configuration c;
                try {
                    c = configuration(g, leaf);
                } catch (const GeometryError&) {
                    continue;
                }
                if (!c.intersecting) continue;
                if (!in_domain(g.point(c.anchor), G, 1e-9)) continue;
                double t = flow[i].t + c.anchor - offset;
                if (t < 0 || t > T) continue;
                out.push_back({t, L->side, c.theta});
            }
    }
    std::sort(out.begin(), out.end(), [](const Crossing& a, const Crossing& b) { return a.t < b.t; });
    // a crossing on a tile side is seen from both tiles
    std::vector<Crossing> uniq;
    for (const auto& c : out)
        if (uniq.empty() || uniq.back().side != c.side || c.t - uniq.back().t > 1e-7 || std::abs(c.angle - uniq.back().angle) > 1e-6)
            uniq.push_back(c);
    return uniq;
}

enum class SegmentKind { corner, straight, other };

struct Segment {
    SegmentKind kind = SegmentKind::other;
    double lo = 0.0, hi = 0.0;
    LamSide lo_side = LamSide::plus, hi_side = LamSide::plus;  ///< laminations at the two ends (corners)
};

struct SegmentClassification {
    std::vector<Segment> corners, straights, others;
    double straight_coverage = 0.0;  ///< fraction of [0, T] inside the union of straight segments
};

/// Corner segments run between consecutive crossings of different
/// laminations; straight segments run from one corner segment to the next.
inline SegmentClassification classify_segments(const std::vector<Crossing>& crossings, double T) {
    SegmentClassification out;
    for (std::size_t i = 1; i < crossings.size(); ++i)
        if (crossings[i].side != crossings[i - 1].side)
            out.corners.push_back({SegmentKind::corner, crossings[i - 1].t, crossings[i].t, crossings[i - 1].side, crossings[i].side});
    for (std::size_t j = 1; j < out.corners.size(); ++j) {
        const auto &a = out.corners[j - 1], &b = out.corners[j];
        out.straights.push_back({SegmentKind::straight, a.lo, b.hi, a.lo_side, b.hi_side});
    }
    double lo = out.straights.empty() ? T : out.straights.front().lo;
    double hi = out.straights.empty() ? T : out.straights.back().hi;
    if (out.straights.empty()) out.others.push_back({SegmentKind::other, 0.0, T});
    else {
        if (lo > 0) out.others.push_back({SegmentKind::other, 0.0, lo});
        if (hi < T) out.others.push_back({SegmentKind::other, hi, T});
    }
    // straight segments overlap in their corners and tile [lo, hi]
    out.straight_coverage = out.straights.empty() ? 0.0 : (hi - lo) / T;
    return out;
}

/// Height at parameter t, linear between samples.
inline double height_at(const HeightProfile& p, double t) {
    const auto& s = p.samples;
    if (s.empty()) throw std::invalid_argument("empty profile");
    auto it = std::lower_bound(s.begin(), s.end(), t, [](const HeightSample& a, double x) { return a.t < x; });
    if (it == s.begin()) return s.front().h;
    if (it == s.end()) return s.back().h;
    const auto& b = *it;
    const auto& a = *(it - 1);
    double f = (t - a.t) / (b.t - a.t);
    return a.h + f * (b.h - a.h);
}

// ---------------------------------------------------------------- fiber statistics

struct FiberStats {
    std::vector<double> R;
    std::vector<double> proportion;  ///< fraction of CT arclength with |z| <= R
    double total = 0.0;              ///< CT arclength
};

/// Length of a piece with z linear in [a, b] that has |z| <= R, as a fraction.
inline double fraction_within(double a, double b, double R) {
    if (a == b) return std::abs(a) <= R ? 1.0 : 0.0;
    double lo = std::min(a, b), hi = std::max(a, b);
    double in = std::max(0.0, std::min(hi, R) - std::max(lo, -R));
    return in / (hi - lo);
}

inline FiberStats fiber_stats(const SolvPath& path, std::span<const double> R, double k) {
    FiberStats fs;
    std::vector<double> len;
    for (std::size_t i = 1; i < path.vertices.size(); ++i) len.push_back(ct_segment_length(path.vertices[i - 1], path.vertices[i], k));
    fs.total = std::accumulate(len.begin(), len.end(), 0.0);
    if (fs.total < 100 * std::log(k)) throw std::invalid_argument("fiber statistics need CT arclength of at least 100 log k");
    for (double r : R) {
        if (r < 0) throw std::invalid_argument("fiber radius must be nonnegative");
        double in = 0;
        for (std::size_t i = 1; i < path.vertices.size(); ++i)
            in += len[i - 1] * fraction_within(path.vertices[i - 1].z, path.vertices[i].z, r);
        fs.R.push_back(r);
        fs.proportion.push_back(std::min(1.0, in / fs.total));
    }
    return fs;
}

/// Fit of log log(1 / deficit) against R over the rows whose deficit lies in [lo, hi].
struct DeficitFit {
    std::vector<double> R, deficit;
    LinearFit fit;
    bool strictly_decreasing = true;
};

inline DeficitFit deficit_fit(std::span<const double> R, std::span<const double> proportion, double lo = 1e-3, double hi = 0.3) {
    DeficitFit d;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < R.size(); ++i) {
        double def = 1.0 - proportion[i];
        d.R.push_back(R[i]);
        d.deficit.push_back(def);
        if (def >= lo && def <= hi) {
            x.push_back(R[i]);
            y.push_back(std::log(std::log(1.0 / def)));
        }
    }
    for (std::size_t i = 1; i < d.deficit.size(); ++i)
        if (d.deficit[i - 1] >= lo && !(d.deficit[i] < d.deficit[i - 1])) d.strictly_decreasing = false;
    if (x.size() >= 2) d.fit = linear_fit(x, y);
    return d;
}

// ---------------------------------------------------------------- neighbourhood measures

/// Point of the octagon, uniform for hyperbolic area.
template <class Rng>
HPoint sample_octagon_point(const FuchsianGroup& G, Rng& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double cmax = std::cosh(G.octagon.vertex);
    for (;;) {
        double r = std::acosh(1 + U(rng) * (cmax - 1));
        double phi = 2 * pi * U(rng);
        HPoint p = from_disk(std::polar(std::tanh(r / 2), phi));
        if (in_domain(p, G, 0.0)) return p;
    }
}

struct AreaRow {
    double r = 0.0;
    Proportion freq;        ///< fraction of the octagon within r of a leaf
    double area = 0.0;      ///< freq times the octagon area
    double over_r = 0.0;    ///< area / r
    double over_log6 = 0.0; ///< area / (r (log 1/r)^6)
};

struct AreaTable {
    std::vector<AreaRow> rows;
    std::size_t samples = 0;
};

/// Monte Carlo area of the r-neighbourhood of the leaves inside the octagon.
inline AreaTable birman_series_area(const FuchsianGroup& G, const std::vector<Geodesic>& leaves, std::span<const double> r,
                                    std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw std::invalid_argument("need at least one sample");
    const double rmax = r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
    struct L {
        Frame inv;
        double base;
    };
    std::vector<L> ls;
    for (const auto& g : leaves) ls.push_back({g.frame().inverse(), distance_to_geodesic(g, origin())});
    std::sort(ls.begin(), ls.end(), [](const L& a, const L& b) { return a.base < b.base; });
    std::vector<double> dmin(samples);
    auto rng = task_rng(seed, 0);
    for (auto& d : dmin) {
        HPoint p = sample_octagon_point(G, rng);
        double dp = dist_h2(p, origin());
        d = std::numeric_limits<double>::infinity();
        for (const auto& l : ls) {
            if (l.base - dp > std::min(d, rmax)) break;
            HPoint z = act(l.inv, p);
            d = std::min(d, std::asinh(std::abs(z.x) / z.y));
        }
    }
    std::sort(dmin.begin(), dmin.end());
    const double area = G.area();
    AreaTable t;
    t.samples = samples;
    for (double x : r) {
        auto hits = static_cast<std::size_t>(std::upper_bound(dmin.begin(), dmin.end(), x) - dmin.begin());
        AreaRow row;
        row.r = x;
        row.freq = wilson(hits, samples);
        row.area = row.freq.p * area;
        row.over_r = row.area / x;
        row.over_log6 = x < 1 ? row.area / (x * std::pow(std::log(1 / x), 6)) : std::numeric_limits<double>::infinity();
        t.rows.push_back(row);
    }
    return t;
}

struct PowerLawTable {
    std::vector<DecayRow> rows;
    LinearFit fit;  ///< log frequency against log r over rows with 0 < frequency < 1
    std::size_t samples = 0;
    [[nodiscard]] double alpha() const { return fit.slope; }
};

/// Fraction of endpoint pairs (forward, backward limits) within r of the
/// endpoint pair of some leaf, in the max of the two visual angles.
inline PowerLawTable endpoint_neighborhood_measure(std::span<const Geodesic> pairs, const std::vector<Geodesic>& leaves,
                                                   std::span<const double> r) {
    if (pairs.size() < 1000) throw std::invalid_argument("endpoint measure needs at least 1000 boundary samples");
    std::vector<double> d;
    for (const auto& p : pairs) {
        double best = pi;
        for (const auto& l : leaves) best = std::min(best, leaf_gap(p, l));
        d.push_back(best);
    }
    std::sort(d.begin(), d.end());
    PowerLawTable t;
    t.samples = pairs.size();
    std::vector<double> x, y;
    for (double rr : r) {
        auto hits = static_cast<std::size_t>(std::upper_bound(d.begin(), d.end(), rr) - d.begin());
        DecayRow row{rr, wilson(hits, d.size())};
        t.rows.push_back(row);
        if (hits > 0 && hits < d.size()) {
            x.push_back(std::log(rr));
            y.push_back(std::log(row.freq.p));
        }
    }
    if (x.size() >= 2) t.fit = linear_fit(x, y);
    return t;
}


}  // namespace ctlab
