#pragma once
// The four experiment runners behind the command line tool. Each takes a
// merged config and a worker count and returns a RunReport whose content
// depends on the config alone.

#include <chrono>
#include <optional>

#include "ctlab/heightfn.hpp"
#include "ctlab/numgeom.hpp"
#include "ctlab/randwalk.hpp"
#include "ctlab/report.hpp"
#include "ctlab/solvqg.hpp"

namespace ctlab {

namespace detail {

using clock = std::chrono::steady_clock;
inline double since(clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); }

inline std::vector<double> step_grid(double lo, double hi, double step) {
    std::vector<double> g;
    for (int i = 0; lo + i * step <= hi + 1e-12; ++i) g.push_back(lo + i * step);
    return g;
}

inline std::vector<double> decade_grid(double lo, double hi, int per_decade) {
    std::vector<double> g;
    const double a = std::log10(lo), b = std::log10(hi);
    const int n = static_cast<int>(std::lround((b - a) * per_decade));
    for (int i = 0; i <= n; ++i) g.push_back(std::pow(10.0, a + (b - a) * i / n));
    return g;
}

inline std::string fmt(const char* f, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}
inline std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}
inline std::string fmt(const char* f, double a, double b, double c) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

inline numgeom::Mat to_mat(const Frame& f) { return {f.a, f.b, f.c, f.d}; }

/// Hyperbolic translation by d along the geodesic (-1, 1), which meets the vertical one at i.
inline Frame perpendicular_shift(double d) { return {std::cosh(d / 2), std::sinh(d / 2), std::sinh(d / 2), std::cosh(d / 2)}; }

template <class Rng>
Frame random_frame(Rng& rng, double spread = 2.0) {
    std::uniform_real_distribution<double> u(-spread, spread), ang(0, 2 * pi);
    HPoint p{u(rng), std::exp(u(rng))};
    Frame t{std::sqrt(p.y), p.x / std::sqrt(p.y), 0, 1 / std::sqrt(p.y)};
    return t * rotation(ang(rng));
}

template <class T>
std::vector<T> concat(const std::vector<std::vector<T>>& parts) {
    std::vector<T> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

inline json without_workers(json cfg) {
    cfg.erase("workers");
    return cfg;
}

}  // namespace detail

// ---------------------------------------------------------------- verify-hyp2

inline json verify_hyp2_defaults() {
    return {{"seed", 1u}, {"workers", 1}, {"cases", 1000}, {"fellow_pairs", 500}, {"theta0", 0.01}, {"T0", T0}, {"tolerance", 1e-9}};
}

/// Closed forms against numerical geometry, the projection-interval bound and
/// the fellow-travel sandwich.
inline RunReport verify_hyp2(const json& cfg, int workers) {
    using namespace detail;
    RunReport rep;
    rep.command = "verify-hyp2";
    rep.config = without_workers(cfg);
    const auto seed = cfg["seed"].get<std::uint64_t>();
    const int cases = cfg["cases"].get<int>(), pairs = cfg["fellow_pairs"].get<int>();
    const double tol = cfg["tolerance"].get<double>(), theta0 = cfg["theta0"].get<double>(), t0 = cfg["T0"].get<double>();
    if (cases < 1 || pairs < 1) throw ConfigError("cases and fellow_pairs must be positive");
    if (!(theta0 > 0) || theta0 > 0.5) throw ConfigError("theta0 must be in (0, 0.5]");
    constexpr int chunk = 50;
    const std::size_t chunks = (cases + chunk - 1) / chunk;

    // closed forms: one worst case per formula and chunk
    struct Worst {
        double err = 0, a = 0, b = 0;
    };
    auto t_start = clock::now();
    auto closed = parallel_map(chunks, workers, [&](std::size_t c) {
        auto rng = task_rng(seed, c, 0);
        std::uniform_real_distribution<double> U(0, 1);
        std::array<Worst, 3> w{};
        const int n = std::min<int>(chunk, cases - int(c) * chunk);
        for (int i = 0; i < n; ++i) {
            // Lambert quadrilateral: vertical geodesic and its perpendicular translate at distance theta
            double t = 6 * U(rng), th = std::exp(std::log(1e-4) * U(rng));
            Geodesic other = act(perpendicular_shift(th), Geodesic::vertical());
            double num = numgeom::distance_to_geodesic(to_mat(other.frame()), 0.0, std::exp(t));
            double e = std::abs(num - lambert_distance(t, th)) / std::max(1.0, num);
            if (e > w[0].err) w[0] = {e, t, th};
            // right triangle through i: sine rule and the projection formula
            t = 5 * U(rng);
            th = 0.01 + (pi / 2 - 0.01) * U(rng);
            Geodesic cross = act(disk_rotation(th), Geodesic::vertical());
            num = numgeom::distance_to_geodesic(to_mat(cross.frame()), 0.0, std::exp(t));
            e = std::abs(num - intersect_distance(t, th)) / std::max(1.0, num);
            if (e > w[1].err) w[1] = {e, t, th};
            HPoint q = act(disk_rotation(th), HPoint{0.0, std::exp(t)});
            double s = std::abs(numgeom::foot_parameter({1, 0, 0, 1}, q.x, q.y));
            e = std::abs(s - projection_radius(t, th)) / std::max(1.0, s);
            if (e > w[2].err) w[2] = {e, t, th};
        }
        return w;
    });
    rep.seconds["closed_forms"] = since(t_start);
    Table tc{"closed_forms", {"formula", "cases", "max_error", "tolerance", "worst_t", "worst_theta"}, {}};
    const char* names[3] = {"lambert sinh d = cosh t sinh theta", "sine rule sinh d = sin theta sinh t", "projection cos theta = tanh s / tanh t"};
    bool closed_ok = true;
    std::string closed_detail;
    for (int f = 0; f < 3; ++f) {
        Worst w;
        for (const auto& c : closed)
            if (c[f].err >= w.err) w = c[f];
        tc.add({names[f], cases, w.err, tol, w.a, w.b});
        closed_ok = closed_ok && w.err <= tol;
        closed_detail += (f ? ", " : "") + fmt("%.2e", w.err);
        if (w.err > tol) closed_detail += fmt(" (failing case t = %.17g, theta = %.17g)", w.a, w.b);
    }
    rep.tables.push_back(tc);
    rep.check("closed_forms", closed_ok, "max errors lambert, sine, projection " + closed_detail + fmt(" <= %.0e", tol));

    // projection interval: log(1/theta) <= T <= log(1/theta) + T0
    t_start = clock::now();
    struct Span {
        double lo = INFINITY, hi = -INFINITY;
        std::size_t bad = 0;
        double bad_theta = 0;
    };
    auto spans = parallel_map(chunks, workers, [&](std::size_t c) {
        auto rng = task_rng(seed, c, 1);
        std::uniform_real_distribution<double> U(0, 1);
        Span s;
        const int n = std::min<int>(chunk, cases - int(c) * chunk);
        for (int i = 0; i < n; ++i) {
            double th = std::exp(std::log(1e-6) + (std::log(0.5) - std::log(1e-6)) * U(rng));
            Frame g = random_frame(rng);
            Geodesic other = U(rng) < 0.5 ? act(disk_rotation(th), Geodesic::vertical())
                                          : act(perpendicular_shift(th), Geodesic::vertical());
            Configuration cf = configuration(act(g, Geodesic::vertical()), act(g, other));
            double x = cf.radius - std::log(1 / th);
            s.lo = std::min(s.lo, x);
            s.hi = std::max(s.hi, x);
            if (x < -1e-6 || x > t0 + 1e-6) {
                if (!s.bad) s.bad_theta = th;
                ++s.bad;
            }
        }
        return s;
    });
    rep.seconds["projection_interval"] = since(t_start);
    Span all;
    for (const auto& s : spans) {
        all.lo = std::min(all.lo, s.lo);
        all.hi = std::max(all.hi, s.hi);
        if (s.bad && !all.bad) all.bad_theta = s.bad_theta;
        all.bad += s.bad;
    }
    rep.tables.push_back({"projection_interval", {"cases", "min_T_minus_log", "max_T_minus_log", "T0"}, {{cases, all.lo, all.hi, t0}}});
    rep.check("projection_interval", all.bad == 0,
              fmt("T - log(1/theta) in [%.3g, %.6f], allowed [0, T0 = %.6f]", all.lo, all.hi, t0) +
                  (all.bad ? fmt(", %g violations, first at theta = %.17g", double(all.bad), all.bad_theta) : ""));

    // fellow travel: d(gamma_1(t), gamma_2) / (theta e^|t|) for |t| <= log(1/theta)
    t_start = clock::now();
    const std::size_t pchunks = (pairs + chunk - 1) / chunk;
    struct Ratio {
        double lo = INFINITY, hi = 0;
    };
    auto ratios = parallel_map(pchunks, workers, [&](std::size_t c) {
        auto rng = task_rng(seed, c, 2);
        std::uniform_real_distribution<double> U(0, 1);
        Ratio r;
        const int n = std::min<int>(chunk, pairs - int(c) * chunk);
        for (int i = 0; i < n; ++i) {
            double th = std::exp(std::log(1e-5) + (std::log(theta0) - std::log(1e-5)) * U(rng));
            Frame g = random_frame(rng);
            bool crossing = U(rng) < 0.5;
            Frame m = crossing ? disk_rotation(th) : perpendicular_shift(th);
            Geodesic base = act(g, Geodesic::vertical()), g1 = act(g * m, Geodesic::vertical());
            // closest point of gamma_1 to gamma_2 sits over i
            double s = projection_parameter(g1, act(g * m, origin()));
            double t = (2 * U(rng) - 1) * std::log(1 / th);
            double d = tangent_to_geodesic_distance(g1.lift(s + t), base);
            double q = d / (th * std::exp(std::abs(t)));
            r.lo = std::min(r.lo, q);
            r.hi = std::max(r.hi, q);
        }
        return r;
    });
    rep.seconds["fellow_travel"] = since(t_start);
    Ratio rr;
    for (const auto& r : ratios) {
        rr.lo = std::min(rr.lo, r.lo);
        rr.hi = std::max(rr.hi, r.hi);
    }
    rep.tables.push_back({"fellow_travel", {"pairs", "theta_max", "min_ratio", "max_ratio"}, {{pairs, theta0, rr.lo, rr.hi}}});
    rep.check("fellow_travel", rr.lo >= 1e-5 && rr.hi <= 1e5, fmt("ratio in [%.3g, %.3g], allowed [1e-5, 1e5]", rr.lo, rr.hi));
    return rep;
}

// ---------------------------------------------------------------- walk-stats

inline json walk_stats_defaults() {
    return {{"seed", 1u},         {"workers", 1},       {"N", 1000},          {"paths", 200},   {"D", 2.0},
            {"tail_R_max", 12.0}, {"diag_r_max", 8.0},  {"surface", 0.75},    {"f", 0.1},       {"f_inv", 0.1},
            {"lazy", 0.05},       {"z_paths", 10000},   {"z_times", {100, 200, 500, 1000, 2000, 5000, 10000}},
            {"fiber_R", 1.0}};
}

inline ZStepDistribution z_step_from(const json& cfg) {
    return {cfg["surface"].get<double>(), cfg["f"].get<double>(), cfg["f_inv"].get<double>(), cfg["lazy"].get<double>()};
}

/// Local limit and near-fiber tables of the mapping-torus walk.
inline void z_projection_section(RunReport& rep, const json& cfg) {
    using namespace detail;
    auto d = z_step_from(cfg);
    d.validate();
    auto times = cfg["z_times"].get<std::vector<long>>();
    const long zp = cfg["z_paths"].get<long>();
    if (zp < 1 || times.empty()) throw ConfigError("z_paths and z_times must be nonempty");
    auto t0 = clock::now();
    auto z = z_projection_stats(d, times, zp, cfg["seed"].get<std::uint64_t>(), cfg["fiber_R"].get<double>());
    rep.seconds["z_projection"] = since(t0);
    Table tz{"z_projection", {"n", "sup_p", "sqrt_n_sup_p", "mode_freq", "mode_lo", "mode_hi"}, {}};
    double lo = INFINITY, hi = 0;
    for (const auto& r : z.rows) {
        tz.add({r.n, r.sup_p, r.scaled, r.raw.p, r.raw.lo, r.raw.hi});
        if (r.n >= 100 && r.n <= 10000) {
            lo = std::min(lo, r.scaled);
            hi = std::max(hi, r.scaled);
        }
    }
    rep.tables.push_back(tz);
    rep.check("local_clt", lo > 0 && hi / lo - 1 < 0.2, fmt("sqrt(n) sup P in [%.4f, %.4f], spread %.1f%% < 20%%", lo, hi, 100 * (hi / lo - 1)));
    Table tf{"fiber_fraction", {"T", "fraction", "log_window_fraction"}, {}};
    for (const auto& r : z.fiber) tf.add({r.T, r.fraction, r.log_fraction});
    rep.tables.push_back(tf);
    rep.check("fiber_decay", z.beta >= 0.3 && z.beta <= 0.7, fmt("beta = %.3f (r2 %.3f), allowed [0.3, 0.7]", z.beta, z.fiber_fit.r2));
}

inline RunReport walk_stats(const json& cfg, int workers) {
    using namespace detail;
    RunReport rep;
    rep.command = "walk-stats";
    rep.config = without_workers(cfg);
    const auto seed = cfg["seed"].get<std::uint64_t>();
    const long N = cfg["N"].get<long>();
    const int paths = cfg["paths"].get<int>();
    const double D = cfg["D"].get<double>();
    if (N < 10) throw ConfigError("N must be at least 10");
    if (paths < 100) throw ConfigError("paths must be at least 100");
    // the Z-walk is checked first, so a periodic step law fails fast
    z_step_from(cfg).validate();
    const FuchsianGroup G = octagon_group();
    const auto mu = StepDistribution::uniform_generators();

    struct PathOut {
        double drift = 0, drift2 = 0, deviation = 0;
        std::vector<double> tail;
        TrackedGeodesic track;
    };
    auto t0 = clock::now();
    auto out = parallel_map(std::size_t(paths), workers, [&](std::size_t i) {
        PathOut o;
        // forward steps 1..N of the 2N path are those of the N path
        auto p2 = sample_walk(G, mu, 2 * N, seed, i);
        o.drift2 = p2.w(2 * N).displacement() / double(2 * N);
        for (int attempt = 0;; ++attempt) {
            auto p = sample_walk(G, mu, N, seed, i + std::uint64_t(attempt) * std::uint64_t(paths));
            try {
                o.track = track_geodesic(p);
            } catch (const WalkError&) {
                if (attempt < 10) continue;
                throw;
            }
            o.drift = p.w(N).displacement() / double(N);
            o.tail = gromov_tail_samples(p);
            o.deviation = deviation_fraction(o.track, D);
            break;
        }
        return o;
    });
    rep.seconds["walks"] = since(t0);
    std::vector<double> drift, drift2, dev, tails;
    std::vector<TrackedGeodesic> tracks;
    for (auto& o : out) {
        drift.push_back(o.drift);
        drift2.push_back(o.drift2);
        dev.push_back(o.deviation);
        tails.insert(tails.end(), o.tail.begin(), o.tail.end());
        tracks.push_back(std::move(o.track));
    }
    auto [clo, chi] = bootstrap_mean(drift, 0.99, 2000, seed);
    const double m1 = mean(drift), m2 = mean(drift2);
    rep.tables.push_back({"drift",
                          {"N", "paths", "mean", "ci99_lo", "ci99_hi", "mean_2N", "deviation_fraction"},
                          {{N, paths, m1, clo, chi, m2, mean(dev)}}});
    rep.check("drift_positive", clo > 0, fmt("99%% bootstrap interval [%.4f, %.4f] excludes 0", clo, chi));
    rep.check("drift_doubling", std::abs(m2 / m1 - 1) < 0.1, fmt("drift %.4f at N, %.4f at 2N, change %.1f%% < 10%%", m1, m2, 100 * std::abs(m2 / m1 - 1)));
    rep.check("sublinear_deviation", mean(dev) <= 0.05, fmt("fraction of n with deviation > %.1f log n is %.4f <= 0.05", D, mean(dev)));

    auto add_decay = [&](const std::string& name, const DecayTable& t) {
        Table tb{name, {"r", "freq", "lo", "hi"}, {}};
        for (const auto& r : t.rows) tb.add({r.r, r.freq.p, r.freq.lo, r.freq.hi});
        rep.tables.push_back(tb);
    };
    auto tail = exceedance_table(tails, step_grid(0, cfg["tail_R_max"].get<double>(), 1.0));
    add_decay("gromov_tail", tail);
    rep.check("tail_exponential", tail.fit.slope < 0 && tail.fit.r2 >= 0.9, fmt("log-linear slope %.3f, r2 %.3f", tail.fit.slope, tail.fit.r2));
    auto diag = diagonal_measure(tracks, step_grid(0, cfg["diag_r_max"].get<double>(), 0.5));
    add_decay("diagonal", diag);
    rep.check("diagonal_decay", diag.fit.slope < 0, fmt("log-linear slope %.3f", diag.fit.slope));
    std::vector<HPoint> centres;
    for (int j = 0; j < 4; ++j) centres.push_back(sample_walk(G, mu, 6, seed, 1000000 + j).orbit_point(6));
    add_decay("shadows", shadow_hitting(tracks, centres, step_grid(0, cfg["diag_r_max"].get<double>(), 0.5)));

    z_projection_section(rep, cfg);
    // exact binomial reference for the lazy-free +-1 walk
    ZStepDistribution pm{0.0, 0.5, 0.5, 0.0};
    double p100 = exact_phi_vector(pm, 100)[100];
    double ref = std::exp(std::lgamma(101.0) - 2 * std::lgamma(51.0) - 100 * std::log(2.0));
    auto sig3 = [](double x) { return std::stod(fmt("%.3g", x)); };
    rep.check("exact_binomial", sig3(p100) == sig3(ref), fmt("P(S_100 = 0) = %.6f, C(100,50)/2^100 = %.6f", p100, ref));
    return rep;
}

// ---------------------------------------------------------------- solv-qg

inline json solv_qg_defaults() {
    return {{"seed", 1u},        {"workers", 1},      {"chains", 6},        {"links", 15},       {"lmax", 3.0},
            {"resolution", 0.1}, {"margin", 1},       {"z_pad", 1.5},       {"window_lo", 5.0},  {"window_hi", 30.0},
            {"rectangles", 50},  {"rect_lo", 0.3},    {"rect_hi", 1.2},     {"flow_paths", 1000}, {"ladder_cases", 1000},
            {"axis_periods", 12}};
}

inline RunReport solv_qg(const json& cfg, int workers) {
    using namespace detail;
    RunReport rep;
    rep.command = "solv-qg";
    rep.config = without_workers(cfg);
    const auto seed = cfg["seed"].get<std::uint64_t>();
    const int chains = cfg["chains"].get<int>(), links = cfg["links"].get<int>();
    if (links < 1) throw ConfigError("links must be positive: a path needs at least one saddle connection");
    if (chains < 1) throw ConfigError("chains must be positive");
    OracleBox box;
    box.resolution = cfg["resolution"].get<double>();
    box.margin = cfg["margin"].get<int>();
    box.z_pad = cfg["z_pad"].get<double>();
    if (!(box.resolution > 0) || box.resolution > 0.5) throw ConfigError("resolution must be in (0, 0.5]");
    const double wlo = cfg["window_lo"].get<double>(), whi = cfg["window_hi"].get<double>();
    const CanonicalModel m = build_canonical_surface();
    const FuchsianGroup G = octagon_group();
    const double k = m.pa.k;

    // flat-model identities
    auto t0 = clock::now();
    {
        auto rng = task_rng(seed, 0, 10);
        std::uniform_real_distribution<double> U(0.01, 5), Z(-3, 3);
        double worst_gap = 0, worst_measure = 0;
        bool exact = true;
        for (int i = 0; i < cfg["ladder_cases"].get<int>(); ++i) {
            double a = U(rng), b = U(rng), z = Z(rng);
            exact = exact && ladder_gap(a, b) == 2 * std::sqrt(a * b);
            auto f = [&](double zz) { return std::pow(k, zz) * a + std::pow(k, -zz) * b; };
            worst_gap = std::max(worst_gap, std::abs(golden_section(f, -10, 10).second - ladder_gap(a, b)) / ladder_gap(a, b));
            Vec2 r = flow_measures(a, b, z, k);
            worst_measure = std::max(worst_measure, std::abs(r.x * r.y - a * b) / (a * b));
        }
        rep.check("ladder_gap", exact && worst_gap <= 1e-9,
                  fmt("2 sqrt(ab) reproduced exactly; numerical minimum of k^z a + k^-z b agrees to %.2e", worst_gap));
        rep.check("flow_measure", worst_measure <= 4 * std::numeric_limits<double>::epsilon(),
                  fmt("F_z keeps ab up to rounding, worst relative change %.2e", worst_measure));
        std::uniform_real_distribution<double> V(-3, 3);
        double worst_len = 0;
        for (int i = 0; i < cfg["flow_paths"].get<int>(); ++i) {
            SolvPath p;
            int n = 2 + int(rng() % 6);
            for (int j = 0; j < n; ++j) p.vertices.push_back({V(rng), V(rng), V(rng)});
            worst_len = std::max(worst_len, std::abs(ct_length(f_action(p, k), k) - ct_length(p, k)));
        }
        rep.check("monodromy_isometry", worst_len <= 1e-9, fmt("f F_1 changes ct length by at most %.2e", worst_len));
    }
    const double rlo = cfg["rect_lo"].get<double>(), rhi = cfg["rect_hi"].get<double>();
    auto rects = parallel_map(std::size_t(cfg["rectangles"].get<int>()), workers, [&](std::size_t i) {
        auto rng = task_rng(seed, i, 11);
        std::uniform_real_distribution<double> U(std::log(rlo), std::log(rhi));
        double a = std::exp(U(rng)), b = std::exp(U(rng));
        return bottleneck_check(m, G, a, b, rng, box);
    });
    Table tr{"rectangles", {"a", "b", "bound", "oracle", "diagonal", "touched"}, {}};
    std::size_t below = 0, touched = 0;
    for (const auto& r : rects) {
        tr.add({r.R.a, r.R.b, r.bound, r.oracle, r.diagonal, r.touched});
        if (r.touched) ++touched;
        else if (r.oracle < r.bound) ++below;
    }
    rep.tables.push_back(tr);
    rep.check("bottleneck", below == 0 && touched < rects.size(),
              fmt("%g of %g rectangles below the bound (%g touched the box)", double(below), double(rects.size()), double(touched)));
    rep.seconds["flat_identities"] = since(t0);

    // McMullen paths and their doubled counterparts
    t0 = clock::now();
    const auto pool = saddle_connections(m.surface, m.pa, cfg["lmax"].get<double>());
    auto runs = parallel_map(std::size_t(2 * chains), workers, [&](std::size_t i) {
        bool doubled = i >= std::size_t(chains);
        auto rng = task_rng(seed, i % chains, doubled ? 13 : 12);
        return mcmullen_samples(m, G, pool, doubled ? 2 * links : links, rng, box);
    });
    std::vector<QgSample> base, twice;
    for (int i = 0; i < 2 * chains; ++i) (i < chains ? base : twice).insert((i < chains ? base : twice).end(), runs[i].begin(), runs[i].end());
    auto f1 = fit_quasigeodesic(base, wlo, whi), f2 = fit_quasigeodesic(twice, wlo, whi);
    rep.seconds["mcmullen"] = since(t0);
    Table tq{"mcmullen_fit", {"links", "samples", "mean_ratio", "slope", "r2", "Q", "c"}, {}};
    tq.add({links, f1.n, f1.mean_ratio, f1.slope, f1.r2, f1.Q, f1.c});
    tq.add({2 * links, f2.n, f2.mean_ratio, f2.slope, f2.r2, f2.Q, f2.c});
    rep.tables.push_back(tq);
    Table ts{"mcmullen_samples", {"links", "distance", "arclength", "touched"}, {}};
    for (const auto& s : base) ts.add({links, s.distance, s.arclength, s.touched});
    for (const auto& s : twice) ts.add({2 * links, s.distance, s.arclength, s.touched});
    rep.tables.push_back(ts);
    const double change = f1.mean_ratio > 0 ? std::abs(f2.mean_ratio / f1.mean_ratio - 1) : INFINITY;
    rep.check("mcmullen_flat_ratio", f1.n >= 10 && std::abs(f1.slope) <= 0.05 && f2.n >= 10 && std::abs(f2.slope) <= 0.05,
              fmt("ratio slope %.4f (%g samples), doubled %.4f; allowed |m| <= 0.05", f1.slope, double(f1.n), f2.slope));
    rep.check("mcmullen_doubling", change < 0.1 && std::isfinite(f2.Q) && std::isfinite(f2.c),
              fmt("mean ratio %.4f -> %.4f, change %.1f%% < 10%%", f1.mean_ratio, f2.mean_ratio, 100 * change));

    // axis embedding of the horizontal core curve
    auto ax = axis_samples(m, G, {2, 0.3, 0.5}, {1, 0}, cfg["axis_periods"].get<int>(), box);
    Table ta{"axis", {"period", "distance", "arclength", "touched"}, {}};
    for (std::size_t i = 0; i < ax.samples.size(); ++i) ta.add({int(i + 1), ax.samples[i].distance, ax.samples[i].arclength, ax.samples[i].touched});
    rep.tables.push_back(ta);
    auto fa = fit_quasigeodesic(ax.samples, 0, INFINITY);
    rep.check("axis_quasigeodesic", fa.n >= 3 && std::isfinite(fa.Q) && fa.Q > 0, fmt("Q = %.4f, c = %.4f, ratio slope %.2e", fa.Q, fa.c, fa.slope));
    return rep;
}

// ---------------------------------------------------------------- height-fiber

inline json height_fiber_defaults() {
    return {{"seed", 1u},        {"workers", 1},         {"depth", 8},           {"ball", 3.5},          {"theta", 0.15},
            {"geodesics", 50},   {"T", 30.0},            {"step", 0.01},         {"stride", 100},        {"resolution", 0.1},
            {"doubling", 10},    {"window_lo", 5.0},     {"window_hi", 30.0},    {"fiber_paths", 6},     {"walk_fiber_paths", 3},
            {"fiber_T", 400.0},  {"R_step", 0.05},       {"bs_samples", 200000}, {"r_lo", 1e-3},         {"r_hi", 0.1},
            {"endpoint_walks", 1000}, {"endpoint_N", 300}, {"surface", 0.75},    {"f", 0.1},             {"f_inv", 0.1},
            {"lazy", 0.05},      {"z_paths", 2000},      {"z_times", {100, 200, 500, 1000, 2000, 5000, 10000}}, {"fiber_R", 1.0}};
}

inline RunReport height_fiber(const json& cfg, int workers) {
    using namespace detail;
    RunReport rep;
    rep.command = "height-fiber";
    rep.config = without_workers(cfg);
    const auto seed = cfg["seed"].get<std::uint64_t>();
    LaminationOptions lo;
    lo.depth = cfg["depth"].get<int>();
    lo.ball_radius = cfg["ball"].get<double>();
    if (lo.depth < 0 || lo.depth > 12) throw ConfigError("depth must be in [0, 12]");
    HeightConfig hc;
    hc.theta = cfg["theta"].get<double>();
    const double T = cfg["T"].get<double>(), step = cfg["step"].get<double>();
    const int ng = cfg["geodesics"].get<int>(), nd = std::min(cfg["doubling"].get<int>(), ng);
    const auto stride = cfg["stride"].get<std::size_t>();
    if (ng < 2 || !(T > 0) || !(step > 0) || stride == 0) throw ConfigError("need geodesics >= 2 and positive T, step, stride");
    if (cfg["endpoint_walks"].get<int>() < 1000) throw ConfigError("endpoint_walks must be at least 1000");
    OracleBox box;
    box.resolution = cfg["resolution"].get<double>();
    const double wlo = cfg["window_lo"].get<double>(), whi = cfg["window_hi"].get<double>();

    const CanonicalModel m = build_canonical_surface();
    const FuchsianGroup G = octagon_group();
    const double k = m.pa.k, lk = std::log(k);
    hc.k = k;
    auto t0 = clock::now();
    const LaminationPair lam = approximate_laminations(m, G, lo);
    const RadiusField plus(G, lam.plus), minus(G, lam.minus);
    auto sep = cross_side_separation(extended_leaves(lam.plus), extended_leaves(lam.minus));
    rep.seconds["laminations"] = since(t0);
    rep.tables.push_back({"laminations",
                          {"side", "depth", "word_length", "leaves", "diagonals", "crossings"},
                          {{"plus", lo.depth, lam.plus.word_length, lam.plus.leaves.size(), lam.plus.diagonals.size(), crossing_count(lam.plus.leaves)},
                           {"minus", lo.depth, lam.minus.word_length, lam.minus.leaves.size(), lam.minus.diagonals.size(), crossing_count(lam.minus.leaves)}}});
    rep.tables.push_back({"separation", {"min_angle", "min_distance", "shared_endpoints", "theta"}, {{sep.min_angle, sep.min_distance, sep.shared_endpoints, hc.theta}}});
    rep.check("theta_below_half_separation", hc.theta < 0.5 * sep.value(), fmt("theta %.3g, separation %.4f", hc.theta, sep.value()));
    hc.validate();

    // a non-exceptional Lebesgue geodesic for task i of stream s
    auto geodesic_for = [&](std::size_t i, std::uint64_t s) {
        auto rng = task_rng(seed, i, s);
        for (;;) {
            Geodesic g = sample_lebesgue_geodesic(rng);
            try {
                check_non_exceptional(g, plus, minus);
                return g;
            } catch (const HeightError&) {
            }
        }
    };

    // test paths with oracle samples
    struct PathOut {
        LipschitzSlopes slopes;
        TestPathSamples samples;
        double coverage = 0;
        std::size_t crossings = 0;
        double crossing_K = 0;
        double arclen = 0;
    };
    auto run_path = [&](const Geodesic& g, double len) {
        PathOut o;
        auto tp = test_path(m, G, g, plus, minus, hc, len, step);
        o.slopes = lipschitz_slopes(tp.profile);
        o.arclen = tp.profile.samples.back().arclen;
        o.samples = test_path_samples(m, G, tp, stride, box, false);
        auto cr = leaf_crossings(G, g, lam, len, step);
        o.crossings = cr.size();
        o.coverage = classify_segments(cr, len).straight_coverage;
        for (const auto& c : cr)
            if (c.angle <= hc.theta) o.crossing_K = std::max(o.crossing_K, std::abs(std::abs(height_at(tp.profile, c.t)) - std::log(std::log(1 / c.angle)) / lk));
        return o;
    };
    t0 = clock::now();
    auto paths = parallel_map(std::size_t(ng + nd), workers, [&](std::size_t i) {
        return i < std::size_t(ng) ? run_path(geodesic_for(i, 20), T) : run_path(geodesic_for(i - ng, 20), 2 * T);
    });
    rep.seconds["test_paths"] = since(t0);
    LipschitzSlopes worst;
    std::vector<QgSample> tau_all, tau_first, tau_double, tau_a, tau_b;
    TestPathSamples half_a, half_b;
    double cov = 0, cov_min = 1, K = 0;
    Table tpt{"test_paths", {"index", "T", "arclen", "radius_slope", "height_slope", "samples", "crossings", "straight_coverage"}, {}};
    for (int i = 0; i < ng + nd; ++i) {
        const auto& o = paths[i];
        const bool first = i < ng;
        tpt.add({first ? i : i - ng, first ? T : 2 * T, o.arclen, o.slopes.radius, o.slopes.height, o.samples.tau.size(), o.crossings, o.coverage});
        if (!first) {
            tau_double.insert(tau_double.end(), o.samples.tau.begin(), o.samples.tau.end());
            continue;
        }
        worst.radius = std::max(worst.radius, o.slopes.radius);
        worst.height = std::max(worst.height, o.slopes.height);
        cov += o.coverage / ng;
        cov_min = std::min(cov_min, o.coverage);
        K = std::max(K, o.crossing_K);
        tau_all.insert(tau_all.end(), o.samples.tau.begin(), o.samples.tau.end());
        if (i < nd) tau_first.insert(tau_first.end(), o.samples.tau.begin(), o.samples.tau.end());
        auto& h = i < ng / 2 ? half_a : half_b;
        h.tau.insert(h.tau.end(), o.samples.tau.begin(), o.samples.tau.end());
        h.iota.insert(h.iota.end(), o.samples.iota.begin(), o.samples.iota.end());
    }
    rep.tables.push_back(tpt);
    rep.check("radius_lipschitz", worst.radius <= 1 + 1e-6, fmt("max radius slope %.9f <= 1 + 1e-6 over %g profiles", worst.radius, double(ng)));
    rep.check("height_lipschitz", worst.height <= 1 / lk + 1e-4, fmt("max height slope %.6f <= 1/log k + 1e-4 = %.6f", worst.height, 1 / lk + 1e-4));

    auto fa = fit_quasigeodesic(tau_all, wlo, whi), f1 = fit_quasigeodesic(tau_first, wlo, whi), f2 = fit_quasigeodesic(tau_double, wlo, whi);
    TestPathSamples both;
    both.tau = half_a.tau;
    both.tau.insert(both.tau.end(), half_b.tau.begin(), half_b.tau.end());
    both.iota = half_a.iota;
    both.iota.insert(both.iota.end(), half_b.iota.begin(), half_b.iota.end());
    auto pa = fit_projection(half_a), pb = fit_projection(half_b), pall = fit_projection(both);
    Table tq{"test_path_fit", {"set", "samples", "mean_ratio", "slope", "r2", "Q", "c"}, {}};
    tq.add({"all", fa.n, fa.mean_ratio, fa.slope, fa.r2, fa.Q, fa.c});
    tq.add({"first", f1.n, f1.mean_ratio, f1.slope, f1.r2, f1.Q, f1.c});
    tq.add({"first_doubled", f2.n, f2.mean_ratio, f2.slope, f2.r2, f2.Q, f2.c});
    rep.tables.push_back(tq);
    rep.tables.push_back({"projection_fit",
                          {"set", "pairs", "K", "c"},
                          {{"all", pall.n, pall.K, pall.c}, {"first_half", pa.n, pa.K, pa.c}, {"second_half", pb.n, pb.K, pb.c}}});
    const double change = f1.mean_ratio > 0 ? std::abs(f2.mean_ratio / f1.mean_ratio - 1) : INFINITY;
    rep.check("test_path_quasigeodesic",
              fa.n >= 10 && std::abs(fa.slope) <= 0.05 && std::isfinite(fa.Q) && std::isfinite(fa.c) && std::abs(f2.slope) <= 0.05 && change < 0.1,
              fmt("ratio slope %.4f (mean %.3f), doubled slope %.4f", fa.slope, fa.mean_ratio, f2.slope) +
                  fmt(", mean change under doubling %.1f%% < 10%%", 100 * change));
    const bool proj_ok = pall.n > 0 && std::isfinite(pall.K) && std::isfinite(pall.c) &&
                         std::abs(pa.K - pb.K) <= 0.1 * std::max(pa.K, pb.K) && std::abs(pa.c - pb.c) <= 1.0;
    rep.check("projection_bound", proj_ok, fmt("K = %.4f, c = %.4f; halves K %.4f", pall.K, pall.c, pa.K) + fmt(" / %.4f, c %.4f", pb.K, pb.c) + fmt(" / %.4f", pb.c));
    rep.tables.push_back({"segments", {"mean_straight_coverage", "min_straight_coverage", "crossing_height_K"}, {{cov, cov_min, K}}});

    // fiber statistics on long test paths
    t0 = clock::now();
    const double fT = cfg["fiber_T"].get<double>();
    const int nf = cfg["fiber_paths"].get<int>(), nw = cfg["walk_fiber_paths"].get<int>();
    const auto mu = StepDistribution::uniform_generators();
    auto Rg = step_grid(0, 3 * lk, cfg["R_step"].get<double>());
    if (Rg.back() < 3 * lk) Rg.push_back(3 * lk);
    struct FiberOut {
        std::vector<double> in;  // arclength with |z| <= R
        double total = 0, at_zero = 0;
    };
    auto fibers = parallel_map(std::size_t(nf + nw), workers, [&](std::size_t i) {
        Geodesic g;
        if (i < std::size_t(nf)) g = geodesic_for(i, 21);
        else {
            // surface-walk geodesic: the tracked geodesic of a sample path
            for (std::uint64_t a = 0;; ++a) {
                try {
                    g = track_geodesic(sample_walk(G, mu, 200, seed, 2000000 + (i - nf) + 1000 * a)).geodesic;
                    check_non_exceptional(g, plus, minus);
                    break;
                } catch (const std::runtime_error&) {
                }
            }
        }
        // short paths are rerun at twice the length until they carry 100 log k of arclength
        auto tp = test_path(m, G, g, plus, minus, hc, fT, step);
        for (double len = 2 * fT; tp.profile.samples.back().arclen < 100 * lk && len <= 64 * fT; len *= 2)
            tp = test_path(m, G, g, plus, minus, hc, len, step);
        auto fs = fiber_stats(tp.path, Rg, k);
        FiberOut o;
        o.total = fs.total;
        for (double p : fs.proportion) o.in.push_back(p * fs.total);
        const auto& v = tp.path.vertices;
        for (std::size_t j = 1; j < v.size(); ++j)
            if (v[j - 1].z == 0 && v[j].z == 0) o.at_zero += ct_segment_length(v[j - 1], v[j], k);
        return o;
    });
    rep.seconds["fiber"] = since(t0);
    auto pooled = [&](int from, int to) {
        std::vector<double> in(Rg.size(), 0.0);
        double tot = 0, zero = 0;
        for (int i = from; i < to; ++i) {
            for (std::size_t r = 0; r < Rg.size(); ++r) in[r] += fibers[i].in[r];
            tot += fibers[i].total;
            zero += fibers[i].at_zero;
        }
        for (auto& x : in) x = std::min(1.0, x / tot);
        return std::make_tuple(in, tot, zero / tot);
    };
    auto [prop, total, zero_frac] = pooled(0, nf);
    auto dfit = deficit_fit(Rg, prop);
    Table tfib{"fiber", {"R", "proportion", "deficit"}, {}};
    for (std::size_t r = 0; r < Rg.size(); ++r) tfib.add({Rg[r], prop[r], 1 - prop[r]});
    rep.tables.push_back(tfib);
    rep.tables.push_back({"deficit_fit", {"points", "slope", "intercept", "r2", "log_k", "total_arclength"}, {{dfit.fit.n, dfit.fit.slope, dfit.fit.intercept, dfit.fit.r2, lk, total}}});
    rep.check("fiber_r0_is_time_at_zero", prop[0] == std::min(1.0, zero_frac), fmt("proportion(0) = %.6f, arclength fraction at h = 0 is %.6f", prop[0], zero_frac));
    rep.check("near_fiber_majority", prop.back() >= 0.5, fmt("proportion %.4f at R = 3 log k", prop.back()));
    rep.check("deficit_decreasing", dfit.strictly_decreasing && dfit.fit.n >= 3,
              fmt("strictly decreasing while deficit >= 1e-3; %g points in [1e-3, 0.3]", double(dfit.fit.n)));
    rep.check("effective_decay", dfit.fit.n >= 3 && std::abs(dfit.fit.slope / lk - 1) <= 0.5,
              fmt("log log(1/deficit) slope %.3f vs log k %.3f (%.0f%% off, allowed 50%%)", dfit.fit.slope, lk, 100 * std::abs(dfit.fit.slope / lk - 1)));
    if (nw > 0) {
        auto [wprop, wtot, wzero] = pooled(nf, nf + nw);
        (void)wzero;
        Table tw{"walk_fiber", {"R", "proportion"}, {}};
        for (std::size_t r = 0; r < Rg.size(); ++r) tw.add({Rg[r], wprop[r]});
        rep.tables.push_back(tw);
        rep.check("walk_near_fiber_majority", wprop.back() >= 0.5, fmt("surface-walk geodesics: proportion %.4f at R = 3 log k over arclength %.0f", wprop.back(), wtot));
    }

    // mapping-torus walk
    z_projection_section(rep, cfg);

    // Birman-Series window
    t0 = clock::now();
    auto rgrid = decade_grid(cfg["r_lo"].get<double>(), cfg["r_hi"].get<double>(), 4);
    auto bs = birman_series_area(G, lam.plus.leaves, rgrid, cfg["bs_samples"].get<std::size_t>(), seed);
    Table tb{"birman_series", {"r", "freq", "freq_lo", "freq_hi", "area", "area_over_r", "area_over_r_log6"}, {}};
    double rmin = INFINITY, rmax = 0;
    bool log6_monotone = true;
    for (std::size_t i = 0; i < bs.rows.size(); ++i) {
        const auto& r = bs.rows[i];
        tb.add({r.r, r.freq.p, r.freq.lo, r.freq.hi, r.area, r.over_r, r.over_log6});
        rmin = std::min(rmin, r.over_r);
        rmax = std::max(rmax, r.over_r);
        if (i > 0 && r.over_log6 < bs.rows[i - 1].over_log6) log6_monotone = false;
    }
    rep.tables.push_back(tb);
    rep.seconds["birman_series"] = since(t0);
    rep.check("birman_series", rmin > 0 && rmax / rmin < 10 && log6_monotone,
              fmt("area/r in [%.2f, %.2f] (ratio %.2f < 10)", rmin, rmax, rmax / rmin) +
                  (log6_monotone ? "; area/(r log^6) does not grow as r -> 0" : "; area/(r log^6) grows as r -> 0"));

    // endpoint neighbourhoods under the hitting measure
    t0 = clock::now();
    const int nwalk = cfg["endpoint_walks"].get<int>();
    const long eN = cfg["endpoint_N"].get<long>();
    auto ends = parallel_map(std::size_t(nwalk), workers, [&](std::size_t i) {
        for (std::uint64_t a = 0;; ++a) {
            try {
                auto tg = track_geodesic(sample_walk(G, mu, eN, seed, 3000000 + i + 1000000 * a));
                return Geodesic{tg.backward, tg.forward};
            } catch (const WalkError&) {
            }
        }
    });
    auto em = endpoint_neighborhood_measure(ends, extended_leaves(lam.plus), decade_grid(1e-3, 1.0, 4));
    Table te{"endpoint_measure", {"r", "freq", "lo", "hi"}, {}};
    for (const auto& r : em.rows) te.add({r.r, r.freq.p, r.freq.lo, r.freq.hi});
    rep.tables.push_back(te);
    rep.seconds["endpoint_measure"] = since(t0);
    rep.check("endpoint_power_law", em.alpha() > 0 && em.fit.r2 >= 0.85, fmt("alpha = %.3f, r2 = %.3f", em.alpha(), em.fit.r2));
    return rep;
}

// ---------------------------------------------------------------- dispatch

struct Command {
    std::string name;
    json (*defaults)();
    RunReport (*run)(const json&, int);
};

inline const std::vector<Command>& commands() {
    static const std::vector<Command> c{{"verify-hyp2", verify_hyp2_defaults, verify_hyp2},
                                        {"walk-stats", walk_stats_defaults, walk_stats},
                                        {"solv-qg", solv_qg_defaults, solv_qg},
                                        {"height-fiber", height_fiber_defaults, height_fiber}};
    return c;
}

inline const Command& command(const std::string& name) {
    for (const auto& c : commands())
        if (c.name == name) return c;
    throw ConfigError("unknown command " + name);
}

}  // namespace ctlab
