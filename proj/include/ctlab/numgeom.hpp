#pragma once
// Independent numerical geometry, used to check the closed forms. Nothing here
// calls them; distances are minimized directly along explicit
// parametrizations with forward-mode derivatives.

#include <cmath>
#include <functional>
#include <stdexcept>

namespace ctlab::numgeom {

struct Dual {
    double v = 0, d = 0;
};
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
inline Dual operator*(double s, Dual a) { return {s * a.v, s * a.d}; }
inline Dual dexp(Dual a) { return {std::exp(a.v), std::exp(a.v) * a.d}; }

struct Mat {
    double a, b, c, d;
};

/// Point M (e^s i) on the geodesic M(0, inf), with derivative in s.
inline void geodesic_point(const Mat& m, Dual s, Dual& x, Dual& y) {
    Dual e2 = dexp(2.0 * s), e1 = dexp(s);
    Dual den = Dual{m.c * m.c, 0} * e2 + Dual{m.d * m.d, 0};
    double det = m.a * m.d - m.b * m.c;
    x = (Dual{m.a * m.c, 0} * e2 + Dual{m.b * m.d, 0}) / den;
    y = Dual{det, 0} * e1 / den;
}

/// cosh of the distance from (px, py) to the geodesic point, minus one.
inline Dual excess(const Mat& m, Dual s, double px, double py) {
    Dual x, y;
    geodesic_point(m, s, x, y);
    Dual dx = x - Dual{px, 0}, dy = y - Dual{py, 0};
    return (dx * dx + dy * dy) / (2.0 * py * y);
}

/// Minimizing parameter of the distance from p to the geodesic, by bisection on the derivative.
inline double foot_parameter(const Mat& m, double px, double py, double lo = -60, double hi = 60) {
    auto slope = [&](double s) { return excess(m, Dual{s, 1.0}, px, py).d; };
    // coarse scan for a sign change
    double best = lo, bv = excess(m, Dual{lo, 0}, px, py).v;
    for (int i = 1; i <= 2400; ++i) {
        double s = lo + (hi - lo) * i / 2400.0;
        double v = excess(m, Dual{s, 0}, px, py).v;
        if (v < bv) { bv = v; best = s; }
    }
    double step = (hi - lo) / 2400.0;
    double a = best - step, b = best + step;
    if (slope(a) > 0 || slope(b) < 0) throw std::runtime_error("oracle bracket failed");
    for (int it = 0; it < 200 && b - a > 1e-15 * (1 + std::abs(a)); ++it) {
        double mid = 0.5 * (a + b);
        (slope(mid) > 0 ? b : a) = mid;
    }
    return 0.5 * (a + b);
}

inline double point_distance(double x1, double y1, double x2, double y2) {
    double e = std::hypot(x1 - x2, y1 - y2);
    return 2.0 * std::asinh(e / (2.0 * std::sqrt(y1 * y2)));
}

inline double distance_to_geodesic(const Mat& m, double px, double py) {
    double s = foot_parameter(m, px, py);
    Dual x, y;
    geodesic_point(m, Dual{s, 0}, x, y);
    return point_distance(px, py, x.v, y.v);
}

/// Hyperbolic length of a curve by composite Simpson integration of |dz|/y.
inline double curve_length(const std::function<void(double, double&, double&)>& curve, int n = 20000) {
    auto speed = [&](double t) {
        const double h = 1e-6;
        double x1, y1, x2, y2, x0, y0;
        curve(t - h, x1, y1);
        curve(t + h, x2, y2);
        curve(t, x0, y0);
        return std::hypot(x2 - x1, y2 - y1) / (2 * h) / y0;
    };
    double sum = speed(0) + speed(1);
    for (int i = 1; i < n; ++i) sum += speed(double(i) / n) * (i % 2 ? 4 : 2);
    return sum / (3.0 * n);
}

}  // namespace ctlab::numgeom
