#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctlab/hyp2.hpp"
#include "ctlab/stats.hpp"
#include "ctlab/surface.hpp"

namespace ctlab {

class WalkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- Gromov products

/// <b,c>_a from the three pairwise distances.
inline double gromov_product(double d_ab, double d_ac, double d_bc) { return 0.5 * (d_ab + d_ac - d_bc); }

inline double gromov_product(HPoint a, HPoint b, HPoint c) {
    return gromov_product(dist_h2(a, b), dist_h2(a, c), dist_h2(b, c));
}

/// <b, xi>_a for an ideal point: the limit along the ray from a to xi, through the Busemann function.
inline double gromov_product(HPoint a, HPoint b, const BoundaryPoint& xi) {
    Frame m{xi.u, xi.v, -xi.v, xi.u};  // rotation taking xi to infinity
    HPoint a2 = act(m, a), b2 = act(m, b);
    return 0.5 * (dist_h2(a, b) - std::log(a2.y / b2.y));
}

/// <xi, eta>_o for two ideal points seen from o.
inline double gromov_product(HPoint o, const BoundaryPoint& xi, const BoundaryPoint& eta) {
    Frame m = Frame{1, -o.x, 0, 1};
    m = Frame{1 / std::sqrt(o.y), 0, 0, std::sqrt(o.y)} * m;  // o -> i
    double gap = angle_gap(act(m, xi).angle(), act(m, eta).angle());
    if (gap == 0) return INFINITY;
    return -std::log(std::sin(gap / 2));
}

/// Shadow of b seen from x0 at depth r: points c with <b,c>_{x0} >= r.
inline bool shadow_contains(HPoint x0, HPoint b, double r, HPoint c) {
    if (r < 0) throw std::invalid_argument("shadow depth must be nonnegative");
    return r == 0 || gromov_product(x0, b, c) >= r;
}

inline bool shadow_contains(HPoint x0, HPoint b, double r, const BoundaryPoint& c) {
    if (r < 0) throw std::invalid_argument("shadow depth must be nonnegative");
    return r == 0 || gromov_product(x0, b, c) >= r;
}

// ---------------------------------------------------------------- group elements far out

/// Unimodular matrix stored as exp(log_scale) * m with max|m| = 1, so that
/// products of thousands of hyperbolic steps do not overflow.
struct ScaledFrame {
    Frame m;
    double log_scale = 0.0;

    void mul(const Frame& g) {
        m = m * g;
        double s = m.max_abs();
        m = {m.a / s, m.b / s, m.c / s, m.d / s};
        log_scale += std::log(s);
    }
    void premul(const Frame& g) {
        m = g * m;
        double s = m.max_abs();
        m = {m.a / s, m.b / s, m.c / s, m.d / s};
        log_scale += std::log(s);
    }
    [[nodiscard]] ScaledFrame inverse() const { return {{m.d, -m.b, -m.c, m.a}, log_scale}; }

    /// d(i, g i).
    [[nodiscard]] double displacement() const {
        double s = m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d;
        double lc = 2 * log_scale + std::log(s / 2);  // log cosh d
        if (lc < 20) return std::acosh(std::max(1.0, std::exp(lc)));
        return lc + std::log(2.0);
    }
    /// Disk-model angle of g i seen from i.
    [[nodiscard]] double angle() const {
        std::complex<double> num(m.b + m.c, m.a - m.d), den(m.b - m.c, m.a + m.d);
        double a = std::arg(num) - std::arg(den);
        a = std::fmod(a, 2 * pi);
        return a < 0 ? a + 2 * pi : a;
    }
};

// ---------------------------------------------------------------- step distributions

struct StepDistribution {
    std::vector<GroupWord> support;
    std::vector<double> weights;

    /// Weights are a probability vector; with `require_generating`, the
    /// products of at most four support elements must meet every generator.
    void validate(const Presentation& P, bool require_generating = true) const {
        if (support.empty() || support.size() != weights.size())
            throw std::invalid_argument("step distribution needs one weight per support element");
        double s = 0;
        for (double w : weights) {
            if (!(w >= 0)) throw std::invalid_argument("step weights must be nonnegative");
            s += w;
        }
        if (std::abs(s - 1) > 1e-12) throw std::invalid_argument("step weights must sum to 1");
        if (!require_generating) return;
        std::vector<GroupWord> layer{GroupWord{}}, all;
        for (int len = 1; len <= 4; ++len) {
            std::vector<GroupWord> next;
            for (const auto& w : layer)
                for (std::size_t i = 0; i < support.size(); ++i)
                    if (weights[i] > 0) next.push_back(P.dehn_reduce(w * support[i]));
            all.insert(all.end(), next.begin(), next.end());
            layer = std::move(next);
        }
        for (int l = 0; l < 8; ++l) {
            GroupWord g;
            g.push(l);
            bool hit = std::any_of(all.begin(), all.end(), [&](const GroupWord& w) { return P.is_trivial(w * g.inverse()); });
            if (!hit) throw std::invalid_argument("support does not generate the group as a semigroup (missing " + g.str() + ")");
        }
    }

    static StepDistribution uniform_generators() {
        StepDistribution d;
        for (int l = 0; l < 8; ++l) {
            GroupWord g;
            g.push(l);
            d.support.push_back(g);
            d.weights.push_back(1.0 / 8);
        }
        return d;
    }
};

/// Bi-infinite sample path truncated to [-N, N]; w_n = w_{n-1} g_n for every n.
struct SamplePath {
    long N = 0;
    std::vector<int> step_index;  ///< g_n for n = -N+1..N, stored at n + N - 1
    std::vector<Frame> step;
    std::vector<ScaledFrame> location;  ///< w_n at n + N

    [[nodiscard]] const Frame& g(long n) const { return step[n + N - 1]; }
    [[nodiscard]] const ScaledFrame& w(long n) const { return location[n + N]; }
    /// Orbit point w_n x0; exact only while it stays within double range.
    [[nodiscard]] HPoint orbit_point(long n) const {
        const auto& s = w(n);
        double e = std::exp(s.log_scale);
        return act(Frame{s.m.a * e, s.m.b * e, s.m.c * e, s.m.d * e}, origin());
    }
    /// d(w_i x0, w_j x0) through the product of the steps between them.
    [[nodiscard]] double distance(long i, long j) const {
        if (i > j) std::swap(i, j);
        ScaledFrame p;
        for (long n = i + 1; n <= j; ++n) p.mul(g(n));
        return p.displacement();
    }
};

/// Forward steps come from stream 0 and backward steps from stream 1 of the task rng.
inline SamplePath sample_walk(const FuchsianGroup& G, const StepDistribution& mu, long N, std::uint64_t seed,
                              std::uint64_t index = 0) {
    if (N < 0) throw std::invalid_argument("walk length must be nonnegative");
    mu.validate(G.presentation, false);
    std::vector<Frame> frames;
    for (const auto& w : mu.support) frames.push_back(G.evaluate(w));
    std::discrete_distribution<int> pick(mu.weights.begin(), mu.weights.end());
    auto fwd = task_rng(seed, index, 0), bwd = task_rng(seed, index, 1);
    SamplePath p;
    p.N = N;
    p.step_index.assign(std::max<long>(2 * N, 0), 0);
    for (long n = 1; n <= N; ++n) p.step_index[n + N - 1] = pick(fwd);
    for (long n = 0; n > -N; --n) p.step_index[n + N - 1] = pick(bwd);
    for (int i : p.step_index) p.step.push_back(frames[i]);
    p.location.assign(2 * N + 1, ScaledFrame{});
    for (long n = 1; n <= N; ++n) {
        p.location[n + N] = p.location[n - 1 + N];
        p.location[n + N].mul(p.g(n));
    }
    for (long n = 0; n > -N; --n) {
        p.location[n - 1 + N] = p.location[n + N];
        p.location[n - 1 + N].mul(p.g(n).inverse());
    }
    return p;
}

// ---------------------------------------------------------------- tracked geodesic

struct TrackedGeodesic {
    Geodesic geodesic;               ///< in the frame of x0
    BoundaryPoint forward, backward; ///< empirical limits of w_{+N} x0 and w_{-N} x0
    std::vector<double> t;           ///< projection parameter of w_n x0, n = -N..N, t_0 relative to geodesic.frame()
    std::vector<double> deviation;   ///< d(w_n x0, geodesic)
    long N = 0;

    [[nodiscard]] double time(long n) const { return t[n + N]; }
    [[nodiscard]] double dev(long n) const { return deviation[n + N]; }
};

/// Everything is computed in the moving frame of w_n, where the orbit point
/// sits at x0 and the two limit points are recovered by boundary recurrences;
/// absolute coordinates of far orbit points never appear.
inline TrackedGeodesic track_geodesic(const SamplePath& p) {
    const long N = p.N;
    if (N < 1) throw WalkError("tracking needs a path with N >= 1");
    TrackedGeodesic tg;
    tg.N = N;
    double a_fwd = p.w(N).angle(), a_bwd = p.w(-N).angle();
    if (angle_gap(a_fwd, a_bwd) < 1e-3) throw WalkError("forward and backward limits are not separated; resample");
    tg.forward = BoundaryPoint::from_angle(a_fwd);
    tg.backward = BoundaryPoint::from_angle(a_bwd);
    // eta_plus[n] = w_n^-1 xi+, eta_minus[n] = w_n^-1 xi-
    std::vector<BoundaryPoint> ep(2 * N + 1), em(2 * N + 1);
    ep[2 * N] = BoundaryPoint::from_angle(p.w(N).inverse().angle() + pi);
    for (long n = N - 1; n >= -N; --n) ep[n + N] = act(p.g(n + 1), ep[n + 1 + N]);
    em[0] = BoundaryPoint::from_angle(p.w(-N).inverse().angle() + pi);
    for (long n = -N + 1; n <= N; ++n) em[n + N] = act(p.g(n).inverse(), em[n - 1 + N]);
    tg.geodesic = {em[N], ep[N]};
    tg.t.assign(2 * N + 1, 0.0);
    tg.deviation.assign(2 * N + 1, 0.0);
    const HPoint x0 = origin();
    tg.t[N] = projection_parameter(tg.geodesic, x0);
    for (long n = -N; n <= N; ++n) {
        Geodesic gn{em[n + N], ep[n + N]};
        tg.deviation[n + N] = distance_to_geodesic(gn, x0);
        if (n < N) {
            double dt = projection_parameter(gn, act(p.g(n + 1), x0)) - projection_parameter(gn, x0);
            if (n >= 0) tg.t[n + 1 + N] = tg.t[n + N] + dt;
        }
    }
    for (long n = -1; n >= -N; --n) {
        Geodesic gn{em[n + N], ep[n + N]};
        tg.t[n + N] = tg.t[n + 1 + N] - (projection_parameter(gn, act(p.g(n + 1), x0)) - projection_parameter(gn, x0));
    }
    return tg;
}

/// Fraction of n in [2, N] with d(w_n x0, geodesic) > D log n.
inline double deviation_fraction(const TrackedGeodesic& tg, double D) {
    long bad = 0;
    for (long n = 2; n <= tg.N; ++n)
        if (tg.dev(n) > D * std::log(double(n))) ++bad;
    return tg.N >= 2 ? double(bad) / double(tg.N - 1) : 0.0;
}

inline double max_gap(const TrackedGeodesic& tg) {
    double m = 0;
    for (long n = 0; n < tg.N; ++n) m = std::max(m, std::abs(tg.time(n + 1) - tg.time(n)));
    return m;
}

// ---------------------------------------------------------------- decay tables

struct DecayRow {
    double r = 0.0;
    Proportion freq;
};

struct DecayTable {
    std::vector<DecayRow> rows;
    LinearFit fit;  ///< log frequency against r over the fit window
    std::size_t samples = 0;
};

/// Exceedance frequencies P(x >= r) of a sample, with a log-linear fit over
/// the rows whose frequency lies in [lo, hi].
inline DecayTable exceedance_table(std::vector<double> x, std::span<const double> grid, double lo = 1e-3, double hi = 0.5) {
    std::sort(x.begin(), x.end());
    DecayTable t;
    t.samples = x.size();
    std::vector<double> fx, fy;
    for (double r : grid) {
        auto it = std::lower_bound(x.begin(), x.end(), r);
        std::size_t hits = static_cast<std::size_t>(x.end() - it);
        if (r <= 0) hits = x.size();
        DecayRow row{r, wilson(hits, x.size())};
        t.rows.push_back(row);
        if (row.freq.p >= lo && row.freq.p <= hi && hits > 0) {
            fx.push_back(r);
            fy.push_back(std::log(row.freq.p));
        }
    }
    if (fx.size() >= 2) t.fit = linear_fit(fx, fy);
    return t;
}

/// Gromov products <x0, w_N x0>_{w_i x0} for every 0 < i < N.
inline std::vector<double> gromov_tail_samples(const SamplePath& p) {
    const long N = p.N;
    std::vector<double> pre(N + 1), suf(N + 1);
    for (long i = 0; i <= N; ++i) pre[i] = p.w(i).displacement();
    ScaledFrame s;
    suf[N] = 0;
    for (long i = N - 1; i >= 0; --i) {
        s.premul(p.g(i + 1));
        suf[i] = s.displacement();
    }
    std::vector<double> out;
    for (long i = 1; i < N; ++i) out.push_back(std::max(0.0, gromov_product(pre[i], suf[i], pre[N])));
    return out;
}

inline DecayTable tail_statistics(std::span<const SamplePath> paths, std::span<const double> R) {
    if (paths.size() < 100) throw std::invalid_argument("tail statistics need at least 100 paths");
    std::vector<double> all;
    for (const auto& p : paths) {
        auto s = gromov_tail_samples(p);
        all.insert(all.end(), s.begin(), s.end());
    }
    return exceedance_table(std::move(all), R);
}

/// Gromov product at x0 of the forward and backward limits of each path:
/// both endpoints lie in a common shadow of depth r iff it is at least r.
inline DecayTable diagonal_measure(std::span<const TrackedGeodesic> tracks, std::span<const double> r) {
    if (tracks.size() < 100) throw std::invalid_argument("diagonal measure needs at least 100 paths");
    std::vector<double> x;
    for (const auto& tg : tracks) x.push_back(gromov_product(origin(), tg.forward, tg.backward));
    return exceedance_table(std::move(x), r);
}

/// Hitting frequencies of shadows S(x0, b, r) by the forward limits, over
/// the given shadow centres b.
inline DecayTable shadow_hitting(std::span<const TrackedGeodesic> tracks, std::span<const HPoint> centres,
                                 std::span<const double> r) {
    std::vector<double> x;
    for (const auto& tg : tracks)
        for (const auto& b : centres) x.push_back(gromov_product(origin(), b, tg.forward));
    return exceedance_table(std::move(x), r);
}

// ---------------------------------------------------------------- the Z-projection

/// Step law of the walk on the mapping torus group, seen through phi: surface
/// generators have phi = 0, f and f^-1 have phi = +-1, the lazy step phi = 0.
struct ZStepDistribution {
    double surface = 0.0;  ///< total weight of the octagon generators
    double f = 0.0;
    double f_inv = 0.0;
    double lazy = 0.0;

    [[nodiscard]] std::vector<std::pair<int, double>> phi_law() const {
        std::vector<std::pair<int, double>> out;
        if (f_inv > 0) out.emplace_back(-1, f_inv);
        if (surface + lazy > 0) out.emplace_back(0, surface + lazy);
        if (f > 0) out.emplace_back(1, f);
        return out;
    }

    void validate() const {
        for (double w : {surface, f, f_inv, lazy})
            if (!(w >= 0)) throw std::invalid_argument("step weights must be nonnegative");
        if (std::abs(surface + f + f_inv + lazy - 1) > 1e-12) throw std::invalid_argument("step weights must sum to 1");
        auto law = phi_law();
        int g = 0;
        for (auto [a, wa] : law)
            for (auto [b, wb] : law) g = std::gcd(g, std::abs(a - b));
        if (g != 1)
            throw WalkError("the phi-projection of the walk is periodic (period " + std::to_string(g) +
                            "); add a lazy step, the identity with a small weight");
    }
};

/// Exact law of phi(w_n), as a dense vector over [-n, n].
inline std::vector<double> exact_phi_vector(const ZStepDistribution& d, long n) {
    auto law = d.phi_law();
    std::vector<double> p(2 * n + 1, 0.0), q(2 * n + 1);
    p[n] = 1.0;
    for (long i = 0; i < n; ++i) {
        std::fill(q.begin(), q.end(), 0.0);
        for (long x = n - i; x <= n + i; ++x)
            if (p[x] != 0)
                for (auto [s, ws] : law) q[x + s] += p[x] * ws;
        std::swap(p, q);
    }
    return p;
}

inline std::map<long, double> exact_phi_law(const ZStepDistribution& d, long n) {
    auto v = exact_phi_vector(d, n);
    std::map<long, double> out;
    for (long x = -n; x <= n; ++x)
        if (v[x + n] > 0) out[x] = v[x + n];
    return out;
}

struct ZRow {
    long n = 0;
    double sup_p = 0.0;   ///< conditional estimate of sup_x P(phi(w_n) = x)
    double scaled = 0.0;  ///< sqrt(n) sup_p
    Proportion raw;       ///< mode frequency of the sampled phi(w_n), with its Wilson interval
};

struct FiberRow {
    long T = 0;
    double fraction = 0.0;      ///< mean over paths of the fraction of k <= T with |phi(w_k)| <= R
    double log_fraction = 0.0;  ///< same with the A log k window
};

struct ZStats {
    std::vector<ZRow> rows;
    std::vector<FiberRow> fiber;
    LinearFit fiber_fit;  ///< log fraction against log T
    double beta = 0.0;    ///< -slope
};

/// sup_x P(phi(w_n) = x) is estimated by conditional Monte Carlo: paths are
/// sampled to m = n/2 and the exact (n - m)-step law is averaged over the
/// sampled phi(w_m). Unbiased for every x, and without the upward bias that
/// the maximum of a raw histogram picks up. Per-path work is an independent
/// task and the tables are sums over paths.
inline ZStats z_projection_stats(const ZStepDistribution& d, std::span<const long> times, long paths, std::uint64_t seed,
                                 double R = 1.0, double A = 1.0) {
    d.validate();
    if (times.empty() || paths < 1) throw std::invalid_argument("need times and at least one path");
    for (long t : times)
        if (t < 0) throw std::invalid_argument("times must be nonnegative");
    auto law = d.phi_law();
    std::vector<double> w;
    std::vector<int> s;
    for (auto [x, wx] : law) {
        s.push_back(x);
        w.push_back(wx);
    }
    const long T = *std::max_element(times.begin(), times.end());
    // checkpoints: every n and every n/2
    std::vector<long> marks;
    for (long t : times) {
        marks.push_back(t);
        marks.push_back(t / 2);
    }
    std::sort(marks.begin(), marks.end());
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
    std::vector<std::map<long, long>> counts(marks.size());
    std::vector<double> near(marks.size(), 0.0), near_log(marks.size(), 0.0);
    for (long p = 0; p < paths; ++p) {
        auto rng = task_rng(seed, static_cast<std::uint64_t>(p), 2);
        std::discrete_distribution<int> pick(w.begin(), w.end());
        long phi = 0, hit = 0, hit_log = 0;
        std::size_t next = 0;
        if (marks[0] == 0) {
            counts[0][0]++;
            near[0] += 1.0;
            near_log[0] += 1.0;
            next = 1;
        }
        for (long k = 1; k <= T; ++k) {
            phi += s[pick(rng)];
            if (std::abs(phi) <= R) ++hit;
            if (std::abs(phi) <= A * std::log(double(k))) ++hit_log;
            if (next < marks.size() && marks[next] == k) {
                counts[next][phi]++;
                near[next] += double(hit) / double(k);
                near_log[next] += double(hit_log) / double(k);
                ++next;
            }
        }
    }
    auto at = [&](long t) { return static_cast<std::size_t>(std::lower_bound(marks.begin(), marks.end(), t) - marks.begin()); };
    ZStats z;
    std::vector<double> lx, ly;
    for (long n : times) {
        ZRow row;
        row.n = n;
        long best = 0;
        for (auto [x, c] : counts[at(n)]) best = std::max(best, c);
        row.raw = wilson(static_cast<std::size_t>(best), static_cast<std::size_t>(paths));
        const long m = n / 2, h = n - m;
        auto kernel = exact_phi_vector(d, h);
        std::map<long, double> est;
        for (auto [x, c] : counts[at(m)])
            for (long y = -h; y <= h; ++y)
                if (kernel[y + h] > 0) est[x + y] += double(c) * kernel[y + h];
        for (auto [x, v] : est) row.sup_p = std::max(row.sup_p, v / double(paths));
        row.scaled = std::sqrt(double(n)) * row.sup_p;
        z.rows.push_back(row);
        FiberRow fr{n, near[at(n)] / double(paths), near_log[at(n)] / double(paths)};
        z.fiber.push_back(fr);
        if (n > 0 && fr.fraction > 0) {
            lx.push_back(std::log(double(n)));
            ly.push_back(std::log(fr.fraction));
        }
    }
    if (lx.size() >= 2) {
        z.fiber_fit = linear_fit(lx, ly);
        z.beta = -z.fiber_fit.slope;
    }
    return z;
}

}  // namespace ctlab
