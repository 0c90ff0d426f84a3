#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ctlab/hyp2.hpp"
#include "ctlab/surface.hpp"

namespace ctlab {

class FlatModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Vec2 {
    double x = 0.0, y = 0.0;
    [[nodiscard]] double norm() const { return std::hypot(x, y); }
};
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

enum Side : int { Right = 0, Up = 1, Left = 2, Down = 3 };
enum Corner : int { BL = 0, BR = 1, TR = 2, TL = 3 };

inline Vec2 corner_offset(int c) {
    static constexpr std::array<Vec2, 4> o{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
    return o[c];
}
/// Direction angle at which the quarter-plane sector of corner c starts.
inline double corner_base_angle(int c) { return c * pi / 2; }

struct SurfacePoint {
    int sq = 0;
    double x = 0.0, y = 0.0;
};

/// Square-tiled translation surface. Permutations are 0-based internally.
struct TranslationSurface {
    struct Vertex {
        std::vector<std::pair<int, int>> cycle;  ///< (square, corner) counterclockwise
        [[nodiscard]] int sectors() const { return static_cast<int>(cycle.size()); }
        [[nodiscard]] double angle() const { return sectors() * pi / 2; }
        [[nodiscard]] bool is_cone() const { return sectors() > 4; }
    };

    int n = 0;
    std::vector<int> right, up, left, down;
    /// Letter crossed when leaving a square through a side; -1 for interior
    /// edges of the marking polygon. Empty when the surface is unmarked.
    std::vector<std::array<int, 4>> edge_letter;
    std::vector<Vec2> square_offset;  ///< lower-left corner inside the marking polygon
    std::array<std::array<int, 2>, 8> letter_holonomy{};

    std::vector<Vertex> vertices;
    std::vector<std::array<std::pair<int, int>, 4>> corner_vertex;  ///< (vertex id, position in cycle)

    [[nodiscard]] int neighbor(int sq, int side) const {
        switch (side) {
            case Right: return right[sq];
            case Up: return up[sq];
            case Left: return left[sq];
            default: return down[sq];
        }
    }
    [[nodiscard]] bool marked() const { return !edge_letter.empty(); }

    [[nodiscard]] int euler_characteristic() const {
        return static_cast<int>(vertices.size()) - n;
    }
    [[nodiscard]] int genus() const { return (2 - euler_characteristic()) / 2; }
    [[nodiscard]] std::vector<int> cone_points() const {
        std::vector<int> out;
        for (int v = 0; v < static_cast<int>(vertices.size()); ++v)
            if (vertices[v].is_cone()) out.push_back(v);
        return out;
    }

    /// Fills inverse permutations and corner cycles; throws on bad input.
    void finalize() {
        auto check_perm = [&](const std::vector<int>& p, const char* what) {
            if (static_cast<int>(p.size()) != n) throw FlatModelError(std::string(what) + " has the wrong length");
            std::vector<bool> seen(n, false);
            for (int v : p) {
                if (v < 0 || v >= n || seen[v]) throw FlatModelError(std::string(what) + " is not a permutation");
                seen[v] = true;
            }
        };
        if (n <= 0) throw FlatModelError("surface needs at least one square");
        check_perm(right, "right");
        check_perm(up, "up");
        left.assign(n, 0);
        down.assign(n, 0);
        for (int s = 0; s < n; ++s) {
            left[right[s]] = s;
            down[up[s]] = s;
        }
        // connectivity
        std::vector<bool> seen(n, false);
        std::vector<int> stack{0};
        seen[0] = true;
        int count = 1;
        while (!stack.empty()) {
            int s = stack.back();
            stack.pop_back();
            for (int side = 0; side < 4; ++side) {
                int t = neighbor(s, side);
                if (!seen[t]) { seen[t] = true; ++count; stack.push_back(t); }
            }
        }
        if (count != n) throw FlatModelError("square gluing is not connected");

        vertices.clear();
        corner_vertex.assign(n, {});
        std::vector<std::array<bool, 4>> done(n, {false, false, false, false});
        for (int s = 0; s < n; ++s)
            for (int c = 0; c < 4; ++c) {
                if (done[s][c]) continue;
                Vertex v;
                int cs = s, cc = c;
                while (!done[cs][cc]) {
                    done[cs][cc] = true;
                    corner_vertex[cs][cc] = {static_cast<int>(vertices.size()), v.sectors()};
                    v.cycle.emplace_back(cs, cc);
                    auto [ns, nc] = next_sector(cs, cc);
                    cs = ns;
                    cc = nc;
                }
                vertices.push_back(std::move(v));
            }
    }

    /// Counterclockwise neighbour sector around the vertex at corner c of square s.
    [[nodiscard]] std::pair<int, int> next_sector(int s, int c) const {
        switch (c) {
            case BL: return {left[s], BR};
            case BR: return {down[s], TR};
            case TR: return {right[s], TL};
            default: return {up[s], BL};
        }
    }
    /// Side crossed when rotating from sector (s, c) to the next one.
    [[nodiscard]] static int rotation_side(int c) {
        static constexpr std::array<int, 4> side{Left, Down, Right, Up};
        return side[c];
    }

    /// Cone-angle coordinate of a direction leaving corner c of square s.
    [[nodiscard]] double cone_angle(int s, int c, double direction) const {
        double d = std::fmod(direction - corner_base_angle(c) + 4 * pi, 2 * pi);
        if (d > 2 * pi - 1e-9) d = 0.0;
        if (d > pi / 2 + 1e-9) throw FlatModelError("direction does not leave the given corner");
        return corner_vertex[s][c].second * pi / 2 + d;
    }
};

inline TranslationSurface parse_surface(std::istream& in, std::array<int, 4>* pa = nullptr) {
    TranslationSurface S;
    bool have_n = false, have_r = false, have_u = false, have_pa = false;
    std::string line;
    auto ints = [](const std::string& s) {
        std::istringstream is(s);
        std::vector<long> v;
        long x;
        while (is >> x) v.push_back(x);
        if (!is.eof()) throw FlatModelError("non-integer token in surface file: " + s);
        return v;
    };
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto colon = line.find(':');
        if (colon == std::string::npos) throw FlatModelError("malformed surface line: " + line);
        std::string key = line.substr(0, colon);
        key.erase(0, key.find_first_not_of(" \t"));
        key.erase(key.find_last_not_of(" \t") + 1);
        auto vals = ints(line.substr(colon + 1));
        auto to_perm = [&](const char* what) {
            std::vector<int> p;
            for (long v : vals) {
                if (v < 1) throw FlatModelError(std::string(what) + " entries are 1-based");
                p.push_back(static_cast<int>(v - 1));
            }
            return p;
        };
        if (key == "squares") {
            if (have_n || vals.size() != 1) throw FlatModelError("bad squares line");
            S.n = static_cast<int>(vals[0]);
            have_n = true;
        } else if (key == "right") {
            if (have_r) throw FlatModelError("duplicate right line");
            S.right = to_perm("right");
            have_r = true;
        } else if (key == "up") {
            if (have_u) throw FlatModelError("duplicate up line");
            S.up = to_perm("up");
            have_u = true;
        } else if (key == "pa") {
            if (have_pa || vals.size() != 4) throw FlatModelError("pa needs four integers");
            if (pa) for (int i = 0; i < 4; ++i) (*pa)[i] = static_cast<int>(vals[i]);
            have_pa = true;
        } else {
            throw FlatModelError("unknown surface key: " + key);
        }
    }
    if (!have_n || !have_r || !have_u) throw FlatModelError("surface file needs squares, right and up");
    if (pa && !have_pa) throw FlatModelError("surface file has no pa line");
    S.finalize();
    return S;
}

inline std::string format_surface(const TranslationSurface& S, const std::array<int, 4>& pa) {
    std::ostringstream os;
    os << "squares: " << S.n << "\nright:";
    for (int v : S.right) os << ' ' << v + 1;
    os << "\nup:";
    for (int v : S.up) os << ' ' << v + 1;
    os << "\npa: " << pa[0] << ' ' << pa[1] << ' ' << pa[2] << ' ' << pa[3] << '\n';
    return os.str();
}

/// Affine pseudo-Anosov realized as a horizontal multitwist after a vertical one.
struct PseudoAnosov {
    std::array<int, 4> derivative{};  ///< row-major
    int h_shear = 0, v_shear = 0;
    double k = 1.0;
    Vec2 e_u, e_s;  ///< unit expanding / contracting eigenvectors

    // row and column cycles used by the twists
    std::vector<std::vector<int>> rows, cols;
    std::vector<std::pair<int, int>> row_of, col_of;

    [[nodiscard]] double log_k() const { return std::log(k); }

    /// Eigen-coordinates (u, s) of a holonomy vector.
    [[nodiscard]] Vec2 eigen(Vec2 v) const {
        double det = e_u.x * e_s.y - e_u.y * e_s.x;
        return {(v.x * e_s.y - v.y * e_s.x) / det, (e_u.x * v.y - e_u.y * v.x) / det};
    }
    [[nodiscard]] Vec2 from_eigen(Vec2 us) const { return us.x * e_u + us.y * e_s; }
    [[nodiscard]] Vec2 apply_derivative(Vec2 v) const {
        return {derivative[0] * v.x + derivative[1] * v.y, derivative[2] * v.x + derivative[3] * v.y};
    }

    [[nodiscard]] SurfacePoint twist_vertical(SurfacePoint p) const {
        auto [c, idx] = col_of[p.sq];
        const auto& col = cols[c];
        double L = static_cast<double>(col.size());
        double yc = std::fmod(idx + p.y + v_shear * p.x, L);
        if (yc < 0) yc += L;
        int j = std::min(static_cast<int>(std::floor(yc)), static_cast<int>(col.size()) - 1);
        return {col[j], p.x, yc - j};
    }
    [[nodiscard]] SurfacePoint twist_horizontal(SurfacePoint p) const {
        auto [r, idx] = row_of[p.sq];
        const auto& row = rows[r];
        double W = static_cast<double>(row.size());
        double xr = std::fmod(idx + p.x + h_shear * p.y, W);
        if (xr < 0) xr += W;
        int j = std::min(static_cast<int>(std::floor(xr)), static_cast<int>(row.size()) - 1);
        return {row[j], xr - j, p.y};
    }
    [[nodiscard]] SurfacePoint apply(SurfacePoint p) const { return twist_horizontal(twist_vertical(p)); }
    [[nodiscard]] SurfacePoint apply_inverse(SurfacePoint p) const {
        auto [r, ri] = row_of[p.sq];
        const auto& row = rows[r];
        double W = static_cast<double>(row.size());
        double xr = std::fmod(ri + p.x - h_shear * p.y, W);
        if (xr < 0) xr += W;
        int i = std::min(static_cast<int>(std::floor(xr)), static_cast<int>(row.size()) - 1);
        SurfacePoint q{row[i], xr - i, p.y};
        auto [c, ci] = col_of[q.sq];
        const auto& col = cols[c];
        double L = static_cast<double>(col.size());
        double yc = std::fmod(ci + q.y - v_shear * q.x, L);
        if (yc < 0) yc += L;
        int j = std::min(static_cast<int>(std::floor(yc)), static_cast<int>(col.size()) - 1);
        return {col[j], q.x, yc - j};
    }
};

inline PseudoAnosov make_pseudo_anosov(const TranslationSurface& S, const std::array<int, 4>& D) {
    PseudoAnosov f;
    f.derivative = D;
    long det = static_cast<long>(D[0]) * D[3] - static_cast<long>(D[1]) * D[2];
    int tr = D[0] + D[3];
    if (det != 1) throw FlatModelError("pseudo-Anosov derivative must have determinant 1");
    if (std::abs(tr) <= 2) throw FlatModelError("derivative is not hyperbolic (|trace| <= 2)");
    if (tr < 0) throw FlatModelError("negative-trace derivatives are not supported");
    // D = [[1,a],[0,1]] [[1,0],[b,1]] = [[1+ab, a], [b, 1]]
    f.h_shear = D[1];
    f.v_shear = D[2];
    if (D[3] != 1 || D[0] != 1 + D[1] * D[2])
        throw FlatModelError("derivative is not a product of a horizontal and a vertical shear");
    f.k = (tr + std::sqrt(double(tr) * tr - 4.0)) / 2.0;
    auto eig = [&](double lam) {
        Vec2 v = D[1] != 0 ? Vec2{double(D[1]), lam - D[0]} : Vec2{lam - D[3], double(D[2])};
        double n = v.norm();
        return Vec2{v.x / n, v.y / n};
    };
    f.e_u = eig(f.k);
    f.e_s = eig(1.0 / f.k);
    if (f.e_u.x < 0) f.e_u = -1.0 * f.e_u;
    if (f.e_s.y < 0) f.e_s = -1.0 * f.e_s;

    auto cycles = [&](const std::vector<int>& perm, std::vector<std::vector<int>>& out,
                      std::vector<std::pair<int, int>>& where) {
        where.assign(S.n, {-1, -1});
        for (int s = 0; s < S.n; ++s) {
            if (where[s].first >= 0) continue;
            std::vector<int> cyc;
            int t = s;
            do {
                where[t] = {static_cast<int>(out.size()), static_cast<int>(cyc.size())};
                cyc.push_back(t);
                t = perm[t];
            } while (t != s);
            out.push_back(std::move(cyc));
        }
    };
    cycles(S.right, f.rows, f.row_of);
    cycles(S.up, f.cols, f.col_of);
    for (const auto& r : f.rows)
        if (f.h_shear % static_cast<int>(r.size()) != 0)
            throw FlatModelError("horizontal shear is not a multitwist on every row");
    for (const auto& c : f.cols)
        if (f.v_shear % static_cast<int>(c.size()) != 0)
            throw FlatModelError("vertical shear is not a multitwist on every column");
    return f;
}

struct FlatSegment {
    int sq = 0;
    Vec2 start, end;   ///< local coordinates in the square
    Vec2 hol;          ///< end - start
    double du = 0.0, ds = 0.0;  ///< signed eigen-coordinate displacement
    double dx = 0.0, dy = 0.0;  ///< unsigned transverse measures |du|, |ds|
    int exit_side = -1;         ///< side crossed at the end, -1 if the trace stopped
    int letter = -1;            ///< marking letter crossed at the end, -1 if none
};

struct ConeHit {
    int sq = 0, corner = 0;  ///< corner of the last square where the trace stopped
    int vertex = 0;
};

struct Trace {
    std::vector<FlatSegment> segments;
    GroupWord word;
    SurfacePoint end;
    Vec2 holonomy;
    Vec2 cell;  ///< developed integer offset of the final square relative to the first
    std::optional<ConeHit> cone;
    double length = 0.0;
};

/// Straight-line flow from a point, tracked in developed coordinates so the
/// error does not accumulate across crossings. Stops at cone points.
inline Trace trace_ray(const TranslationSurface& S, const PseudoAnosov* f, SurfacePoint start, Vec2 dir,
                       double length) {
    double n = dir.norm();
    if (!(n > 0)) throw FlatModelError("direction must be nonzero");
    const double cx = dir.x / n, cy = dir.y / n;
    constexpr double eps = 1e-11;
    Trace tr;
    int sq = start.sq;
    long ix = 0, iy = 0;
    const double px = start.x, py = start.y;
    double t = 0.0;
    auto local = [&](double tt) { return Vec2{px + tt * cx - ix, py + tt * cy - iy}; };
    auto push_segment = [&](double t0, double t1, Vec2 a, Vec2 b, int side) {
        FlatSegment seg;
        seg.sq = sq;
        seg.start = a;
        seg.end = b;
        seg.hol = Vec2{(t1 - t0) * cx, (t1 - t0) * cy};
        if (f) {
            Vec2 e = f->eigen(seg.hol);
            seg.du = e.x;
            seg.ds = e.y;
            seg.dx = std::abs(e.x);
            seg.dy = std::abs(e.y);
        }
        seg.exit_side = side;
        if (side >= 0 && S.marked()) seg.letter = S.edge_letter[sq][side];
        tr.segments.push_back(seg);
    };
    const long guard = static_cast<long>(4 * length + 16) * 4;
    for (long step = 0;; ++step) {
        if (step > guard) throw FlatModelError("ray tracing did not terminate");
        Vec2 cur = local(t);
        double tx = cx > 0 ? (ix + 1 - px) / cx : cx < 0 ? (ix - px) / cx : INFINITY;
        double ty = cy > 0 ? (iy + 1 - py) / cy : cy < 0 ? (iy - py) / cy : INFINITY;
        double tn = std::min(tx, ty);
        if (tn >= length) {
            Vec2 e = local(length);
            e.x = std::clamp(e.x, 0.0, 1.0);
            e.y = std::clamp(e.y, 0.0, 1.0);
            push_segment(t, length, cur, e, -1);
            tr.end = {sq, e.x, e.y};
            break;
        }
        Vec2 hit = local(tn);
        bool xline = tx <= ty, yline = ty <= tx;
        // the other coordinate may sit on a grid line too: that is a corner
        if (xline && !yline && (std::abs(hit.y) < eps || std::abs(hit.y - 1) < eps)) yline = true;
        if (yline && !xline && (std::abs(hit.x) < eps || std::abs(hit.x - 1) < eps)) xline = true;
        if (xline && yline) {
            int corner = (hit.x > 0.5 ? 1 : 0) + (hit.y > 0.5 ? 2 : 0);
            static constexpr std::array<int, 4> to_corner{BL, BR, TL, TR};
            int c = to_corner[corner];
            Vec2 e{std::round(hit.x), std::round(hit.y)};
            int v = S.corner_vertex[sq][c].first;
            if (S.vertices[v].is_cone()) {
                push_segment(t, tn, cur, e, -1);
                tr.end = {sq, e.x, e.y};
                tr.cone = ConeHit{sq, c, v};
                t = tn;
                break;
            }
            // regular vertex: step diagonally (or along the edge)
            int hs = cx > 0 ? Right : Left, vs = cy > 0 ? Up : Down;
            bool moving_x = cx != 0 && (c == BR || c == TR ? cx > 0 : cx < 0);
            bool moving_y = cy != 0 && (c == TL || c == TR ? cy > 0 : cy < 0);
            push_segment(t, tn, cur, e, moving_x ? hs : vs);
            if (moving_x) {
                if (tr.segments.back().letter >= 0) tr.word.push(tr.segments.back().letter);
                sq = S.neighbor(sq, hs);
                ix += cx > 0 ? 1 : -1;
            }
            if (moving_y) {
                int l = S.marked() ? S.edge_letter[sq][vs] : -1;
                if (l >= 0) tr.word.push(l);
                sq = S.neighbor(sq, vs);
                iy += cy > 0 ? 1 : -1;
            }
            t = tn;
            continue;
        }
        int side = xline ? (cx > 0 ? Right : Left) : (cy > 0 ? Up : Down);
        push_segment(t, tn, cur, hit, side);
        if (tr.segments.back().letter >= 0) tr.word.push(tr.segments.back().letter);
        sq = S.neighbor(sq, side);
        if (xline) ix += cx > 0 ? 1 : -1;
        else iy += cy > 0 ? 1 : -1;
        t = tn;
    }
    tr.length = tr.cone ? t : length;
    tr.holonomy = Vec2{tr.length * cx, tr.length * cy};
    tr.cell = Vec2{double(ix), double(iy)};
    return tr;
}

/// Straight-line flow avoiding cone points by perturbing the direction.
/// `dir` is given in the frame of the invariant foliations: (1, 0) runs
/// along the expanding leaves, (0, 1) along the contracting ones.
inline Trace flat_geodesic(const TranslationSurface& S, const PseudoAnosov& f, SurfacePoint start, Vec2 dir,
                           double length) {
    Vec2 d = f.from_eigen(dir);
    double angle = std::atan2(d.y, d.x);
    for (int attempt = 0; attempt <= 3; ++attempt) {
        double a = angle + attempt * 1e-9;
        Trace tr = trace_ray(S, &f, start, {std::cos(a), std::sin(a)}, length);
        if (!tr.cone) return tr;
    }
    throw FlatModelError("flat geodesic keeps hitting a cone point");
}

/// The three-square L origami with its canonical marking by the octagon letters.
struct CanonicalModel {
    TranslationSurface surface;
    PseudoAnosov pa;
    std::array<int, 4> derivative{5, 2, 2, 1};
};

inline CanonicalModel build_canonical_surface() {
    CanonicalModel m;
    auto& S = m.surface;
    S.n = 3;
    S.right = {1, 0, 2};
    S.up = {2, 1, 0};
    S.finalize();
    // L polygon vertices V0..V7 = (0,0) (1,0) (2,0) (2,1) (1,1) (1,2) (0,2) (0,1);
    // edge k runs from V_k to V_{k+1} and carries octagon letter k.
    S.square_offset = {{0, 0}, {1, 0}, {0, 1}};
    S.edge_letter = {
        std::array<int, 4>{-1, -1, 7, 0},  // square 0: left edge e7, bottom edge e0
        std::array<int, 4>{2, 3, -1, 1},   // square 1: right e2, top e3, bottom e1
        std::array<int, 4>{4, 5, 6, -1},   // square 2: right e4, top e5, left e6
    };
    const std::array<Vec2, 8> V{{{0, 0}, {1, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}, {0, 1}}};
    for (int i = 0; i < 8; ++i) {
        int j = side_partner[i];
        Vec2 mi = 0.5 * (V[i] + V[(i + 1) % 8]), mj = 0.5 * (V[j] + V[(j + 1) % 8]);
        S.letter_holonomy[i] = {static_cast<int>(std::lround(mi.x - mj.x)), static_cast<int>(std::lround(mi.y - mj.y))};
    }
    m.pa = make_pseudo_anosov(S, m.derivative);
    if (S.genus() != 2 || S.cone_points().size() != 1) throw FlatModelError("canonical surface self-check failed");
    return m;
}

inline bool same_point(const TranslationSurface& S, SurfacePoint a, SurfacePoint b, double tol) {
    if (a.sq == b.sq && std::abs(a.x - b.x) < tol && std::abs(a.y - b.y) < tol) return true;
    // points on a glued edge have two descriptions
    auto moved = [&](SurfacePoint p) {
        std::vector<SurfacePoint> v{p};
        if (p.x > 1 - tol) v.push_back({S.right[p.sq], p.x - 1, p.y});
        if (p.x < tol) v.push_back({S.left[p.sq], p.x + 1, p.y});
        if (p.y > 1 - tol) v.push_back({S.up[p.sq], p.x, p.y - 1});
        if (p.y < tol) v.push_back({S.down[p.sq], p.x, p.y + 1});
        return v;
    };
    for (auto p : moved(a))
        for (auto q : moved(b))
            if (p.sq == q.sq && std::abs(p.x - q.x) < tol && std::abs(p.y - q.y) < tol) return true;
    return false;
}

/// Checks that f is affine with derivative D across every gluing: for points
/// on both sides of each glued edge, the images differ by D applied to the
/// small displacement between them.
inline double verify_affine(const TranslationSurface& S, const PseudoAnosov& f, int samples = 7) {
    double worst = 0.0;
    const double eps = 1e-4;
    for (int s = 0; s < S.n; ++s)
        for (int side = 0; side < 4; ++side)
            for (int i = 0; i < samples; ++i) {
                double r = (i + 0.37) / samples;
                SurfacePoint p;
                Vec2 d;
                switch (side) {
                    case Right: p = {s, 1 - eps, r}; d = {2 * eps, 0}; break;
                    case Left: p = {s, eps, r}; d = {-2 * eps, 0}; break;
                    case Up: p = {s, r, 1 - eps}; d = {0, 2 * eps}; break;
                    default: p = {s, r, eps}; d = {0, -2 * eps}; break;
                }
                Trace across = trace_ray(S, nullptr, p, d, d.norm());
                SurfacePoint q = across.end;
                Vec2 img = f.apply_derivative(d);
                Trace mapped = trace_ray(S, nullptr, f.apply(p), img, img.norm());
                SurfacePoint fq = f.apply(q);
                if (mapped.cone || !same_point(S, mapped.end, fq, 1e-9)) return INFINITY;
                worst = std::max({worst, std::abs(mapped.end.x - fq.x), std::abs(mapped.end.y - fq.y)});
            }
    return worst;
}

// ---------------------------------------------------------------------------
// Cannon-Thurston metric on (flat universal cover) x R

struct SolvVertex {
    double u = 0.0, s = 0.0, z = 0.0;  ///< developed eigen-coordinates and height
};

struct SolvPath {
    std::vector<SolvVertex> vertices;
};

/// Length of the straight piece between two vertices, z interpolated linearly.
inline double ct_segment_length(const SolvVertex& a, const SolvVertex& b, double k) {
    const double lk = std::log(k);
    const double du = b.u - a.u, ds = b.s - a.s, dz = b.z - a.z;
    if (du == 0 && ds == 0) return lk * std::abs(dz);
    if (std::abs(dz) < 1e-15) return std::hypot(std::pow(k, a.z) * du, std::pow(k, -a.z) * ds);
    auto integrand = [&](double tau) {
        double z = a.z + tau * dz;
        double e = std::exp(lk * z);
        return std::sqrt(e * e * du * du + ds * ds / (e * e) + lk * lk * dz * dz);
    };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, 1.0, 15, 1e-13);
}

inline double ct_length(const SolvPath& p, double k) {
    double L = 0.0;
    for (std::size_t i = 1; i < p.vertices.size(); ++i) L += ct_segment_length(p.vertices[i - 1], p.vertices[i], k);
    return L;
}

/// Vertical flow F_z.
inline SolvPath flow_conjugation(SolvPath p, double z) {
    for (auto& v : p.vertices) v.z += z;
    return p;
}

/// Measures of a flat displacement seen from height z: (k^z dx, k^-z dy).
inline Vec2 flow_measures(double dx, double dy, double z, double k) {
    return {std::pow(k, z) * dx, std::pow(k, -z) * dy};
}

/// Deck action of the monodromy combined with the unit vertical shift that
/// makes it an isometry of the metric: (u, s, z) -> (k u, s / k, z - 1).
inline SolvVertex f_action(SolvVertex v, double k) { return {k * v.u, v.s / k, v.z - 1.0}; }

inline SolvPath f_action(SolvPath p, double k) {
    for (auto& v : p.vertices) v = f_action(v, k);
    return p;
}

struct Rectangle {
    double a = 0.0;  ///< dx measure
    double b = 0.0;  ///< dy measure
    Vec2 corner;     ///< developed eigen-coordinates of the (min u, min s) corner
};

inline double optimal_height(double a, double b, double k) {
    if (!(a > 0) || !(b > 0)) throw FlatModelError("rectangle has a side of zero measure");
    return 0.5 * std::log(b / a) / std::log(k);
}
inline double optimal_height(const Rectangle& R, double k) { return optimal_height(R.a, R.b, k); }

/// min over z of k^z a + k^-z b.
inline double ladder_gap(double a, double b) {
    if (a < 0 || b < 0) throw std::invalid_argument("ladder_gap needs nonnegative measures");
    return 2.0 * std::sqrt(a * b);
}

inline double bottleneck_bound(double a, double b, double k) {
    if (!(a * b > 0)) throw std::invalid_argument("bottleneck_bound needs ab > 0");
    return std::pow(k, -std::sqrt(a * b / 2)) * 2 * std::sqrt(a * b);
}
inline double bottleneck_bound(const Rectangle& R, double k) { return bottleneck_bound(R.a, R.b, k); }

// ---------------------------------------------------------------------------
// Saddle connections

struct SaddleConnection {
    Vec2 hol;                 ///< (dx, dy) in square coordinates
    Vec2 eig;                 ///< (du, ds)
    int start_vertex = 0, start_sq = 0, start_corner = 0;
    int end_vertex = 0, end_sq = 0, end_corner = 0;
    double alpha_out = 0.0;   ///< cone angle of the outgoing direction at the start
    double alpha_in = 0.0;    ///< cone angle of the reversed direction at the end
    GroupWord word;           ///< letters crossed (marked surfaces only)
    [[nodiscard]] double length() const { return hol.norm(); }
};

inline std::vector<SaddleConnection> saddle_connections(const TranslationSurface& S, const PseudoAnosov& f,
                                                        double max_length) {
    if (!(max_length > 0) || max_length > 50) throw std::invalid_argument("saddle_connections: max_length must be in (0, 50]");
    std::vector<SaddleConnection> out;
    const int L = static_cast<int>(std::floor(max_length));
    for (int v : S.cone_points())
        for (auto [s, c] : S.vertices[v].cycle)
            for (int p = -L; p <= L; ++p)
                for (int q = -L; q <= L; ++q) {
                    if ((p == 0 && q == 0) || p * p + q * q > max_length * max_length + 1e-9) continue;
                    double ang = std::atan2(double(q), double(p));
                    if (ang < 0) ang += 2 * pi;
                    double rel = ang - corner_base_angle(c);
                    if (rel < -1e-12 || rel >= pi / 2 - 1e-12) continue;
                    double len = std::hypot(double(p), double(q));
                    Vec2 o = corner_offset(c);
                    Trace tr = trace_ray(S, nullptr, {s, o.x, o.y}, {double(p), double(q)}, len + 1e-7);
                    if (!tr.cone || std::abs(tr.length - len) > 1e-7) continue;
                    SaddleConnection sc;
                    sc.hol = {double(p), double(q)};
                    sc.eig = f.eigen(sc.hol);
                    sc.start_vertex = v;
                    sc.start_sq = s;
                    sc.start_corner = c;
                    sc.end_vertex = tr.cone->vertex;
                    sc.end_sq = tr.cone->sq;
                    sc.end_corner = tr.cone->corner;
                    sc.alpha_out = S.cone_angle(s, c, ang);
                    double back = ang + pi;
                    sc.alpha_in = S.cone_angle(sc.end_sq, sc.end_corner, back);
                    sc.word = tr.word;
                    out.push_back(std::move(sc));
                }
    return out;
}

/// Words crossed when rotating counterclockwise around a vertex from one
/// sector to another.
inline GroupWord rotation_word(const TranslationSurface& S, int vertex, int from_pos, int to_pos) {
    const auto& cyc = S.vertices[vertex].cycle;
    const int n = static_cast<int>(cyc.size());
    GroupWord w;
    for (int p = from_pos; p != to_pos; p = (p + 1) % n) {
        auto [s, c] = cyc[p];
        if (S.marked()) {
            int l = S.edge_letter[s][TranslationSurface::rotation_side(c)];
            if (l >= 0) w.push(l);
        }
    }
    return w;
}

/// Chain of saddle connections forming a geodesic in the flat universal cover.
struct SaddleChain {
    std::vector<const SaddleConnection*> links;
    std::vector<GroupWord> start_words;  ///< deck element of the lifted start square of each link
    std::vector<Vec2> start_dev;         ///< developed square coordinates of each link's start point
};

/// Both angles at each junction are at least pi (geodesic condition at cone points).
inline bool chain_turn_ok(const TranslationSurface& S, const SaddleConnection& in, const SaddleConnection& out) {
    if (in.end_vertex != out.start_vertex) return false;
    double total = S.vertices[in.end_vertex].angle();
    double d = std::fmod(out.alpha_out - in.alpha_in + 2 * total, total);
    return d >= pi - 1e-12 && total - d >= pi - 1e-12;
}

template <class Rng>
SaddleChain random_saddle_chain(const TranslationSurface& S, const std::vector<SaddleConnection>& pool,
                                int links, Rng& rng) {
    if (links < 1) throw std::invalid_argument("chain needs at least one link");
    if (pool.empty()) throw FlatModelError("empty saddle-connection pool");
    SaddleChain ch;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const SaddleConnection* cur = &pool[pick(rng)];
    GroupWord w;
    Vec2 dev = S.marked() ? S.square_offset[cur->start_sq] + corner_offset(cur->start_corner) : corner_offset(cur->start_corner);
    std::vector<const SaddleConnection*> options;
    for (int i = 0;; ++i) {
        ch.links.push_back(cur);
        ch.start_words.push_back(w);
        ch.start_dev.push_back(dev);
        if (i + 1 == links) break;
        // deck element of the square holding the end corner
        GroupWord end_w = w * cur->word;
        dev = dev + cur->hol;
        options.clear();
        for (const auto& sc : pool)
            if (chain_turn_ok(S, *cur, sc)) options.push_back(&sc);
        if (options.empty()) throw FlatModelError("no admissible continuation for a saddle chain");
        std::uniform_int_distribution<std::size_t> o(0, options.size() - 1);
        const SaddleConnection* next = options[o(rng)];
        int from = S.corner_vertex[cur->end_sq][cur->end_corner].second;
        int to = S.corner_vertex[next->start_sq][next->start_corner].second;
        w = end_w * rotation_word(S, cur->end_vertex, from, to);
        cur = next;
    }
    return ch;
}

inline constexpr double z_max_decades = 5.0;

struct McMullenPath {
    SolvPath path;
    std::vector<double> heights;
    std::vector<std::size_t> junction;  ///< vertex index of each link's start, plus the final end
    int clamped = 0;
};

/// Height at which a connection with eigen-displacement (du, ds) is shortest.
inline double connection_height(double du, double ds, double k, bool* clamped = nullptr) {
    const double zmax = z_max_decades * std::log(10.0) / std::log(k);
    if (du == 0 || ds == 0) {
        if (clamped) *clamped = true;
        return du == 0 ? zmax : -zmax;
    }
    return std::clamp(0.5 * std::log(std::abs(ds) / std::abs(du)) / std::log(k), -zmax, zmax);
}

/// Optimal-height path over a chain given by its eigen-coordinate displacements.
inline McMullenPath mcmullen_path(const std::vector<Vec2>& eig_displacements, Vec2 start, double k) {
    if (eig_displacements.empty()) throw std::invalid_argument("mcmullen_path needs at least one connection");
    McMullenPath m;
    Vec2 p = start;
    for (std::size_t i = 0; i < eig_displacements.size(); ++i) {
        Vec2 d = eig_displacements[i];
        if (d.x == 0 && d.y == 0) throw std::invalid_argument("zero-length saddle connection");
        bool cl = false;
        double z = connection_height(d.x, d.y, k, &cl);
        m.clamped += cl;
        m.heights.push_back(z);
        // for i > 0 this vertex closes the vertical joint from the previous height
        m.junction.push_back(m.path.vertices.size());
        m.path.vertices.push_back({p.x, p.y, z});
        p = p + d;
        m.path.vertices.push_back({p.x, p.y, z});
    }
    m.junction.push_back(m.path.vertices.size() - 1);
    return m;
}

inline McMullenPath mcmullen_path(const SaddleChain& ch, const PseudoAnosov& f) {
    std::vector<Vec2> d;
    for (const auto* sc : ch.links) d.push_back(sc->eig);
    return mcmullen_path(d, f.eigen(ch.start_dev.front()), f.k);
}

}  // namespace ctlab
