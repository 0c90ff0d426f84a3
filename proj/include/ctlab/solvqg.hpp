#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "ctlab/cover.hpp"
#include "ctlab/flatmodel.hpp"
#include "ctlab/oracle.hpp"
#include "ctlab/stats.hpp"

namespace ctlab {

/// One endpoint pair: oracle distance and path arclength between them.
struct QgSample {
    double distance = 0.0;
    double arclength = 0.0;
    bool touched = false;  ///< the oracle path reached the edge of its box
};

/// Empirical quasigeodesic constants. The fit is of the ratio
/// arclength / distance against distance; a flat ratio means the path is
/// quasigeodesic with multiplicative constant about `mean_ratio`.
struct QgFit {
    std::size_t n = 0;
    double mean_ratio = 0.0;
    double slope = 0.0;
    double r2 = 0.0;
    double Q = 0.0;  ///< arclength <= Q distance + c over the window
    double c = 0.0;
};

inline QgFit fit_quasigeodesic(std::span<const QgSample> samples, double dmin, double dmax) {
    std::vector<double> d, r;
    for (const auto& s : samples)
        if (s.distance >= dmin && s.distance <= dmax && !s.touched) {
            d.push_back(s.distance);
            r.push_back(s.arclength / s.distance);
        }
    QgFit f;
    f.n = d.size();
    if (f.n < 3) return f;
    LinearFit lf = linear_fit(d, r);
    f.slope = lf.slope;
    f.r2 = lf.r2;
    f.mean_ratio = mean(r);
    // Q from the upper half of the window, c absorbs the rest
    double mid = 0.5 * (dmin + dmax);
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i] >= mid) f.Q = std::max(f.Q, r[i]);
    if (f.Q == 0.0) f.Q = *std::max_element(r.begin(), r.end());
    for (std::size_t i = 0; i < d.size(); ++i) f.c = std::max(f.c, r[i] * d[i] - f.Q * d[i]);
    return f;
}

struct OracleBox {
    double resolution = 0.1;
    int margin = 1;         ///< breadth-first margin of lifted squares around the path
    double z_pad = 1.5;     ///< layers above and below the path's height range
    int stencil = 1;
};

/// Endpoint pairs along McMullen optimal-height paths over random saddle chains.
/// Distances are measured from the first junction and from the middle one.
template <class Rng>
std::vector<QgSample> mcmullen_samples(const CanonicalModel& m, const FuchsianGroup& G,
                                       const std::vector<SaddleConnection>& pool, int links, Rng& rng,
                                       const OracleBox& box) {
    const auto& S = m.surface;
    SaddleChain ch = random_saddle_chain(S, pool, links, rng);
    McMullenPath mp = mcmullen_path(ch, m.pa);
    FlatCover C(S, G.presentation);
    std::vector<int> seeds;
    std::vector<std::pair<int, int>> cones;  // lifted start square and corner of each junction
    for (std::size_t i = 0; i < ch.links.size(); ++i) {
        const auto* sc = ch.links[i];
        int id = C.find_or_add(sc->start_sq, ch.start_words[i]);
        cones.emplace_back(id, sc->start_corner);
        Vec2 o = corner_offset(sc->start_corner);
        Trace tr = trace_ray(S, nullptr, {sc->start_sq, o.x, o.y}, sc->hol, sc->length() + 1e-9);
        for (int sid : C.follow(id, tr)) seeds.push_back(sid);
        if (i + 1 == ch.links.size()) cones.emplace_back(C.follow(id, tr).back(), tr.cone->corner);
    }
    auto region = grow_region(C, seeds, box.margin);
    double zlo = *std::min_element(mp.heights.begin(), mp.heights.end()) - box.z_pad;
    double zhi = *std::max_element(mp.heights.begin(), mp.heights.end()) + box.z_pad;
    SolvOracle O(C, m.pa, region, {box.resolution, zlo, zhi, box.stencil});

    std::vector<QgSample> out;
    std::vector<double> prefix{0.0};
    for (std::size_t v = 1; v < mp.path.vertices.size(); ++v)
        prefix.push_back(prefix.back() + ct_segment_length(mp.path.vertices[v - 1], mp.path.vertices[v], m.pa.k));
    auto query = [&](std::size_t j) {
        const auto& v = mp.path.vertices[mp.junction[j]];
        return SolvOracle::cone(C, cones[j].first, cones[j].second, v.z);
    };
    const std::size_t J = mp.junction.size();
    for (std::size_t src : {std::size_t{0}, J / 2}) {
        std::vector<QueryPoint> targets;
        std::vector<std::size_t> which;
        for (std::size_t j = src + 1; j < J; ++j) {
            targets.push_back(query(j));
            which.push_back(j);
        }
        if (targets.empty()) continue;
        auto r = O.distances(query(src), targets);
        for (std::size_t t = 0; t < targets.size(); ++t)
            out.push_back({r.distance[t], prefix[mp.junction[which[t]]] - prefix[mp.junction[src]], r.touched_boundary[t]});
    }
    return out;
}

/// Orbit pairs along the axis of a deck element realized by a closed flat
/// geodesic, embedded at z = 0. The element is given by a start point and the
/// holonomy of one period.
struct AxisSamples {
    std::vector<QgSample> samples;
    GroupWord element;
    double period = 0.0;  ///< arclength of one period
};

inline AxisSamples axis_samples(const CanonicalModel& m, const FuchsianGroup& G, SurfacePoint start, Vec2 hol,
                                int periods, const OracleBox& box) {
    const auto& S = m.surface;
    if (hol.norm() == 0) throw std::invalid_argument("axis of the identity element is undefined");
    if (periods < 1) throw std::invalid_argument("axis needs at least one period");
    Trace one = trace_ray(S, &m.pa, start, hol, hol.norm());
    if (one.cone) throw FlatModelError("axis passes through a cone point");
    if (!same_point(S, one.end, start, 1e-9)) throw FlatModelError("holonomy does not close up at the start point");
    AxisSamples out;
    out.element = one.word;
    if (G.presentation.is_trivial(one.word)) throw std::invalid_argument("closed geodesic is null-homotopic");
    Vec2 e = m.pa.eigen(hol);
    out.period = std::hypot(e.x, e.y);
    FlatCover C(S, G.presentation);
    int id = C.find_or_add(start.sq, {});
    std::vector<int> seeds, ends{id};
    for (int n = 0; n < periods; ++n) {
        auto ids = C.follow(id, one);
        seeds.insert(seeds.end(), ids.begin(), ids.end());
        id = ids.back();
        ends.push_back(id);
    }
    auto region = grow_region(C, seeds, box.margin);
    SolvOracle O(C, m.pa, region, {box.resolution, -box.z_pad - 1.0, box.z_pad + 1.0, box.stencil});
    std::vector<QueryPoint> targets;
    for (int n = 1; n <= periods; ++n) targets.push_back(SolvOracle::point(ends[n], {start.x, start.y}, 0.0));
    auto r = O.distances(SolvOracle::point(ends[0], {start.x, start.y}, 0.0), targets);
    for (int n = 1; n <= periods; ++n)
        out.samples.push_back({r.distance[n - 1], n * out.period, r.touched_boundary[n - 1]});
    return out;
}

/// Rectangle of the flat cover with sides along the invariant foliations,
/// together with oracle distances between points just beyond two opposite corners.
struct RectangleCheck {
    Rectangle R;
    double bound = 0.0;
    double oracle = 0.0;
    double diagonal = 0.0;  ///< length of the corner-to-corner diagonal at the optimal height
    bool touched = false;
};

template <class Rng>
RectangleCheck bottleneck_check(const CanonicalModel& m, const FuchsianGroup& G, double a, double b, Rng& rng,
                                const OracleBox& box, double eps = 0.02) {
    const auto& S = m.surface;
    const auto& f = m.pa;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Vec2 centre{u01(rng), u01(rng)};  // developed square coordinates inside square 0
        Vec2 ce = f.eigen(centre);
        Vec2 lo{ce.x - a / 2 - eps, ce.y - b / 2 - eps}, hi{ce.x + a / 2 + eps, ce.y + b / 2 + eps};
        // no cone point (integer point) in the enlarged rectangle
        double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
        for (Vec2 c : {Vec2{lo.x, lo.y}, Vec2{hi.x, lo.y}, Vec2{hi.x, hi.y}, Vec2{lo.x, hi.y}}) {
            Vec2 p = f.from_eigen(c);
            xmin = std::min(xmin, p.x); xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y); ymax = std::max(ymax, p.y);
        }
        bool clear = true;
        for (long X = static_cast<long>(std::floor(xmin)); X <= static_cast<long>(std::ceil(xmax)) && clear; ++X)
            for (long Y = static_cast<long>(std::floor(ymin)); Y <= static_cast<long>(std::ceil(ymax)); ++Y) {
                Vec2 e = f.eigen({double(X), double(Y)});
                if (e.x >= lo.x - 1e-9 && e.x <= hi.x + 1e-9 && e.y >= lo.y - 1e-9 && e.y <= hi.y + 1e-9) {
                    clear = false;
                    break;
                }
            }
        if (!clear) continue;
        RectangleCheck rc;
        rc.R = {a, b, {ce.x - a / 2, ce.y - b / 2}};
        rc.bound = bottleneck_bound(rc.R, f.k);
        double z = optimal_height(rc.R, f.k);
        rc.diagonal = ct_segment_length({lo.x + eps, lo.y + eps, z}, {hi.x - eps, hi.y - eps, z}, f.k);
        FlatCover C(S, G.presentation);
        int root = C.find_or_add(0, {});
        SurfacePoint c0{0, centre.x, centre.y};
        std::vector<int> seeds{root};
        auto reach = [&](Vec2 target_eig) {
            Vec2 d = f.from_eigen(target_eig) - centre;
            if (d.norm() < 1e-12) return SolvOracle::point(root, centre, z);
            Trace tr = trace_ray(S, nullptr, c0, d, d.norm());
            if (tr.cone) throw FlatModelError("rectangle corner path hit a cone point");
            auto ids = C.follow(root, tr);
            seeds.insert(seeds.end(), ids.begin(), ids.end());
            return SolvOracle::point(ids.back(), {tr.end.x, tr.end.y}, z);
        };
        QueryPoint p = reach(lo), q = reach(hi);
        // sweep the rectangle so the region covers it
        for (int i = 0; i <= 4; ++i)
            for (int j = 0; j <= 4; ++j) reach({lo.x + (hi.x - lo.x) * i / 4, lo.y + (hi.y - lo.y) * j / 4});
        auto region = grow_region(C, seeds, box.margin);
        SolvOracle O(C, f, region, {box.resolution, z - box.z_pad - 1.0, z + box.z_pad + 1.0, box.stencil});
        auto r = O.distances(p, {q});
        rc.oracle = r.distance[0];
        rc.touched = r.touched_boundary[0];
        return rc;
    }
    throw FlatModelError("could not place an embedded rectangle of the requested size");
}

}  // namespace ctlab
