#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace ctlab {

inline constexpr double pi = std::numbers::pi;
/// Width of the projection-interval window, half of log 8.
inline const double T0 = 0.5 * std::log(8.0);

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double degenerate_angle = 1e-12;

struct HPoint {
    double x = 0.0;
    double y = 1.0;

    [[nodiscard]] std::complex<double> z() const { return {x, y}; }
    static HPoint from(std::complex<double> w) { return {w.real(), w.imag()}; }
};

inline HPoint origin() { return {0.0, 1.0}; }

/// Point on the circle at infinity, stored projectively as a unit vector (u, v) ~ u/v.
struct BoundaryPoint {
    double u = 1.0;
    double v = 0.0;

    static BoundaryPoint real(double x) {
        double n = std::hypot(x, 1.0);
        return {x / n, 1.0 / n};
    }
    static BoundaryPoint infinity() { return {1.0, 0.0}; }

    /// Disk-model angle in [0, 2pi) for the Cayley map z -> (z - i)/(z + i).
    static BoundaryPoint from_angle(double phi) { return {std::cos(-phi / 2), std::sin(-phi / 2)}; }
    [[nodiscard]] double angle() const {
        double a = -2.0 * std::atan2(v, u);
        a = std::fmod(a, 2 * pi);
        if (a < 0) a += 2 * pi;
        if (a >= 2 * pi) a -= 2 * pi;
        return a;
    }
    [[nodiscard]] bool is_infinite() const { return std::abs(v) < 1e-300; }
    [[nodiscard]] double x() const { return u / v; }
};

/// Chordal separation of two boundary points (|sin| of the projective angle).
inline double boundary_gap(const BoundaryPoint& a, const BoundaryPoint& b) {
    return std::abs(a.u * b.v - a.v * b.u);
}

/// Angular distance on the boundary circle in the disk model.
inline double angle_gap(double a, double b) {
    double d = std::fmod(std::abs(a - b), 2 * pi);
    return std::min(d, 2 * pi - d);
}

/// Element of SL(2,R), read projectively; also a frame in T^1 H^2 via A -> (A i, A'(i)).
struct Frame {
    double a = 1, b = 0, c = 0, d = 1;

    static Frame identity() { return {}; }
    [[nodiscard]] double det() const { return a * d - b * c; }
    [[nodiscard]] double trace() const { return a + d; }
    [[nodiscard]] Frame inverse() const { return {d, -b, -c, a}; }
    [[nodiscard]] Frame renormalized() const {
        double s = std::sqrt(std::abs(det()));
        Frame f{a / s, b / s, c / s, d / s};
        if (det() < 0) throw GeometryError("frame with negative determinant");
        return f;
    }
    /// Representative of the +-pair with nonnegative trace (ties broken on the first nonzero entry).
    [[nodiscard]] Frame canonical_sign() const {
        double t = trace();
        bool flip = t < 0;
        if (t == 0) {
            double lead = (a != 0) ? a : (b != 0 ? b : c);
            flip = lead < 0;
        }
        return flip ? Frame{-a, -b, -c, -d} : *this;
    }
    [[nodiscard]] double max_abs() const {
        return std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
    }
};

inline Frame operator*(const Frame& p, const Frame& q) {
    return {p.a * q.a + p.b * q.c, p.a * q.b + p.b * q.d,
            p.c * q.a + p.d * q.c, p.c * q.b + p.d * q.d};
}

/// Max-entry distance between frames as elements of PSL(2,R).
inline double projective_residual(const Frame& p, const Frame& q) {
    double plus = std::max({std::abs(p.a - q.a), std::abs(p.b - q.b), std::abs(p.c - q.c), std::abs(p.d - q.d)});
    double minus = std::max({std::abs(p.a + q.a), std::abs(p.b + q.b), std::abs(p.c + q.c), std::abs(p.d + q.d)});
    return std::min(plus, minus);
}

inline Frame a_t(double t) { return {std::exp(t / 2), 0, 0, std::exp(-t / 2)}; }
inline Frame rotation(double psi) { return {std::cos(psi), -std::sin(psi), std::sin(psi), std::cos(psi)}; }

/// Isometry acting on the upper half-plane; g is taken to be unimodular.
inline HPoint act(const Frame& g, HPoint p) {
    double cx = g.c * p.x + g.d, cy = g.c * p.y;
    double den = cx * cx + cy * cy;
    double re = ((g.a * p.x + g.b) * cx + g.a * g.c * p.y * p.y) / den;
    double im = p.y / den;
    return {re, std::max(im, std::numeric_limits<double>::min())};
}

inline BoundaryPoint act(const Frame& g, const BoundaryPoint& p) {
    double u = g.a * p.u + g.b * p.v;
    double v = g.c * p.u + g.d * p.v;
    double n = std::hypot(u, v);
    return {u / n, v / n};
}

/// Base point p(A) = A i.
inline HPoint base_point(const Frame& f) { return act(f, origin()); }

inline double dist_h2(HPoint p, HPoint q) {
    double e = std::hypot(p.x - q.x, p.y - q.y);
    return 2.0 * std::asinh(e / (2.0 * std::sqrt(p.y * q.y)));
}

/// Distance from i to A i; stable for large elements.
inline double displacement(const Frame& g) {
    double s = g.a * g.a + g.b * g.b + g.c * g.c + g.d * g.d;
    double det = g.det();
    // cosh d = s / (2 det); for unit det s - 2 = 4 sinh^2(d/2)
    double q = std::max(s / det - 2.0, 0.0);
    return 2.0 * std::asinh(std::sqrt(q) / 2.0);
}

inline double translation_length(const Frame& g) {
    double t = std::abs(g.trace()) / std::sqrt(std::abs(g.det()));
    return t > 2.0 ? 2.0 * std::acosh(t / 2.0) : 0.0;
}

inline std::complex<double> to_disk(HPoint p) {
    std::complex<double> z = p.z();
    return (z - std::complex<double>(0, 1)) / (z + std::complex<double>(0, 1));
}

inline HPoint from_disk(std::complex<double> w) {
    std::complex<double> i(0, 1);
    std::complex<double> z = i * (1.0 + w) / (1.0 - w);
    return {z.real(), std::max(z.imag(), std::numeric_limits<double>::min())};
}

/// Disk rotation about the center i by angle phi.
inline Frame disk_rotation(double phi) { return rotation(-phi / 2); }

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    [[nodiscard]] double length() const { return hi - lo; }
    [[nodiscard]] bool contains(double t) const { return lo <= t && t <= hi; }
};

inline double overlap(const Interval& p, const Interval& q) {
    return std::max(0.0, std::min(p.hi, q.hi) - std::max(p.lo, q.lo));
}

/// Oriented geodesic between ideal endpoints.
struct Geodesic {
    BoundaryPoint from;
    BoundaryPoint to;

    static Geodesic through(double x_from, double x_to) {
        return {BoundaryPoint::real(x_from), BoundaryPoint::real(x_to)};
    }
    static Geodesic vertical() { return {BoundaryPoint::real(0.0), BoundaryPoint::infinity()}; }
    static Geodesic from_angles(double phi_from, double phi_to) {
        return {BoundaryPoint::from_angle(phi_from), BoundaryPoint::from_angle(phi_to)};
    }
    [[nodiscard]] Geodesic reversed() const { return {to, from}; }

    /// Frame G with G(0) = from, G(inf) = to; G a_t is the unit-speed lift.
    [[nodiscard]] Frame frame() const {
        double det = to.u * from.v - from.u * to.v;
        if (std::abs(det) < 1e-300) throw GeometryError("geodesic endpoints coincide");
        double s = 1.0 / std::sqrt(std::abs(det));
        double sf = det < 0 ? -s : s;
        return {to.u * s, from.u * sf, to.v * s, from.v * sf};
    }
    [[nodiscard]] Frame lift(double t) const { return frame() * a_t(t); }
    [[nodiscard]] HPoint point(double t) const { return base_point(lift(t)); }
};

inline Geodesic act(const Frame& g, const Geodesic& geo) { return {act(g, geo.from), act(g, geo.to)}; }

/// Geodesic through two interior points, oriented p -> q.
inline Geodesic geodesic_through(HPoint p, HPoint q) {
    Geodesic g;
    if (std::abs(p.x - q.x) < 1e-14 * (1 + std::abs(p.x))) {
        g = {BoundaryPoint::real(p.x), BoundaryPoint::infinity()};
    } else {
        double c = (q.x * q.x + q.y * q.y - p.x * p.x - p.y * p.y) / (2.0 * (q.x - p.x));
        double r = std::hypot(p.x - c, p.y);
        g = Geodesic::through(c - r, c + r);
    }
    Frame gi = g.frame().inverse();
    HPoint zp = act(gi, p), zq = act(gi, q);
    return std::hypot(zq.x, zq.y) >= std::hypot(zp.x, zp.y) ? g : g.reversed();
}

/// Closed-form Lambert quadrilateral: sinh d = cosh t sinh theta.
inline double lambert_distance(double t, double theta) {
    if (!(theta > 0)) throw GeometryError("lambert_distance requires theta > 0");
    return std::asinh(std::cosh(t) * std::sinh(theta));
}

/// Right-angled triangle sine rule: sinh d = sin theta sinh t.
inline double intersect_distance(double t, double theta) {
    if (!(theta > 0) || theta > pi / 2 + 1e-15) throw GeometryError("intersect_distance requires 0 < theta <= pi/2");
    return std::asinh(std::sin(theta) * std::sinh(std::abs(t)));
}

/// Finite-interval closed form cos theta = tanh s / tanh t.
inline double projection_radius(double t, double theta) {
    return std::atanh(std::cos(theta) * std::tanh(std::abs(t)));
}

/// Parameter along g (relative to g.frame()) of the nearest point to p.
inline double projection_parameter(const Geodesic& g, HPoint p) {
    HPoint z = act(g.frame().inverse(), p);
    return std::log(std::hypot(z.x, z.y));
}

inline HPoint nearest_point_projection(const Geodesic& g, HPoint p) {
    return g.point(projection_parameter(g, p));
}

inline double distance_to_geodesic(const Geodesic& g, HPoint p) {
    HPoint z = act(g.frame().inverse(), p);
    return std::asinh(std::abs(z.x) / z.y);
}

/// Relative position of two geodesics.
struct Configuration {
    bool intersecting = false;
    double theta = 0.0;   ///< angle in (0, pi/2] if intersecting, else distance
    double anchor = 0.0;  ///< parameter on base of intersection / closest approach
    double radius = 0.0;  ///< half-length T of the projection interval
};

inline Configuration configuration(const Geodesic& base, const Geodesic& other) {
    Frame gi = base.frame().inverse();
    BoundaryPoint p = act(gi, other.from), q = act(gi, other.to);
    if (p.is_infinite() || q.is_infinite() || std::abs(p.u) < 1e-300 || std::abs(q.u) < 1e-300)
        throw GeometryError("geodesics share an endpoint");
    double x1 = p.x(), x2 = q.x();
    Configuration c;
    double l1 = std::log(std::abs(x1)), l2 = std::log(std::abs(x2));
    c.anchor = 0.5 * (l1 + l2);
    c.radius = 0.5 * std::abs(l1 - l2);
    double r = 0.5 * std::abs(x1 - x2);
    if (x1 * x2 < 0) {
        c.intersecting = true;
        c.theta = std::acos(std::min(1.0, std::abs(0.5 * (x1 + x2)) / r));
        // accurate small angles: sin theta = y0 / r with y0^2 = -x1 x2
        double st = std::sqrt(-x1 * x2) / r;
        if (c.theta < 0.5) c.theta = std::asin(std::min(1.0, st));
    } else {
        c.intersecting = false;
        c.theta = std::asinh(std::sqrt(x1 * x2) / r);
    }
    return c;
}

inline Interval projection_interval(const Geodesic& base, const Geodesic& other) {
    Configuration c = configuration(base, other);
    if (c.theta < degenerate_angle) throw GeometryError("near-parallel geodesics");
    return {-c.radius, c.radius};
}

inline Frame geodesic_flow(const Frame& f, double t) { return f * a_t(t); }

/// sl(2) logarithm coordinates in the orthonormal basis A1, A2, A3, for g with trace >= 0.
struct AlgebraVector {
    double x1 = 0, x2 = 0, x3 = 0;
    [[nodiscard]] double norm() const { return std::sqrt(x1 * x1 + x2 * x2 + x3 * x3); }
};

inline std::optional<AlgebraVector> sl2_log(const Frame& g0) {
    Frame g = g0.canonical_sign();
    double tau = 0.5 * g.trace();
    double factor;
    if (tau > 1.0) {
        double s = std::acosh(tau);
        factor = s < 1e-8 ? 1.0 + s * s / 6.0 : s / std::sinh(s);
    } else if (tau < 1.0) {
        if (tau <= -1.0 + 1e-12) return std::nullopt;
        double th = std::acos(tau);
        factor = th < 1e-8 ? 1.0 + th * th / 6.0 : th / std::sin(th);
    } else {
        factor = 1.0;
    }
    // X = factor (g - tau I) = [[x, y], [z, -x]]
    double x = factor * 0.5 * (g.a - g.d);
    double y = factor * g.b;
    double z = factor * g.c;
    return AlgebraVector{2.0 * x, y + z, z - y};
}

/// Length of the rotate-then-translate path from I to g.
inline double chain_length(const Frame& g0) {
    Frame g = g0.renormalized();
    double two_lambda = displacement(g);
    // P = sqrt(g g^T); K = P^-1 g is a rotation by psi
    Frame ggt{g.a * g.a + g.b * g.b, g.a * g.c + g.b * g.d, g.a * g.c + g.b * g.d, g.c * g.c + g.d * g.d};
    double tr = ggt.trace();
    double s = std::sqrt(tr + 2.0);
    Frame p{(ggt.a + 1) / s, ggt.b / s, ggt.c / s, (ggt.d + 1) / s};
    Frame k = p.inverse() * g;
    double psi = std::atan2(k.c, k.a);
    double phi = std::remainder(2.0 * psi, 2.0 * pi);
    return two_lambda + std::abs(phi);
}

/// Left-invariant distance on PSL(2,R) from the orthonormal basis of sl(2,R).
inline double frame_distance(const Frame& a, const Frame& b) {
    Frame g = (a.inverse() * b).renormalized();
    double chain = chain_length(g);
    std::optional<AlgebraVector> x = sl2_log(g);
    if (!x) return chain;
    return std::min(x->norm(), chain);
}

inline constexpr double golden_tolerance = 1e-10;

/// Golden-section minimization of a unimodal function on [lo, hi].
template <class F>
std::pair<double, double> golden_section(F&& f, double lo, double hi, double tol = golden_tolerance, int max_iter = 400) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    int it = 0;
    while (hi - lo > tol) {
        if (++it > max_iter) throw GeometryError("golden-section search did not converge");
        if (f1 <= f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - r * (hi - lo); f1 = f(x1);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + r * (hi - lo); f2 = f(x2);
        }
    }
    double xm = 0.5 * (lo + hi);
    double fm = f(xm);
    if (f1 < fm) { xm = x1; fm = f1; }
    if (f2 < fm) { xm = x2; fm = f2; }
    return {xm, fm};
}

/// Distance from v to the lift g^1 = {G a_t}: inf over t of frame_distance.
inline double tangent_to_geodesic_distance(const Frame& v, const Geodesic& g) {
    Frame w = g.frame().inverse() * v;
    HPoint p = base_point(w);
    double tc = std::log(std::hypot(p.x, p.y));
    auto f = [&](double t) { return frame_distance(w, a_t(t)); };
    double d0 = f(tc);
    double width = std::min(d0, 8.0) + 1e-9;
    // coarse scan guards against a second basin when far from the lift
    const int n = 16;
    double best_t = tc, best = d0;
    for (int i = 0; i <= n; ++i) {
        double t = tc - width + 2 * width * i / n;
        double val = f(t);
        if (val < best) { best = val; best_t = t; }
    }
    double h = 2 * width / n;
    auto [tm, fm] = golden_section(f, best_t - h, best_t + h);
    return std::min(fm, best);
}

/// Cheap lower bound for tangent_to_geodesic_distance: the base-point distance to g.
inline double tangent_lower_bound(const Frame& v, const Geodesic& g) {
    return distance_to_geodesic(g, base_point(v));
}

/// Empirical constants; nothing here is assumed from theory.
struct Constants {
    double delta_thin = 0.0;  ///< largest sampled thin-triangle constant
    double T0 = ctlab::T0;
};

}  // namespace ctlab
