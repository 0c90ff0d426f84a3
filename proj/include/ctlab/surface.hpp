#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ctlab/hyp2.hpp"

namespace ctlab {

/// Side labels of the octagon, read counterclockwise from the side whose
/// midpoint sits at disk angle 0. Lowercase marks the inverse generator.
inline constexpr std::array<char, 8> side_labels{'A', 'B', 'C', 'b', 'D', 'a', 'd', 'c'};
inline constexpr std::array<int, 8> side_partner{5, 3, 7, 1, 6, 0, 4, 2};

inline int letter_inverse(int side) { return side_partner[side]; }

inline int side_of_label(char l) {
    for (int i = 0; i < 8; ++i)
        if (side_labels[i] == l) return i;
    throw std::invalid_argument(std::string("unknown side label ") + l);
}

/// Word in the side-pairing generators; letter i stands for crossing side i.
struct GroupWord {
    std::vector<std::uint8_t> letters;

    GroupWord() = default;
    explicit GroupWord(std::vector<std::uint8_t> l) : letters(std::move(l)) { free_reduce(); }
    static GroupWord parse(const std::string& s) {
        GroupWord w;
        for (char ch : s) w.letters.push_back(static_cast<std::uint8_t>(side_of_label(ch)));
        w.free_reduce();
        return w;
    }

    [[nodiscard]] std::size_t size() const { return letters.size(); }
    [[nodiscard]] bool empty() const { return letters.empty(); }
    [[nodiscard]] std::string str() const {
        std::string s;
        for (auto l : letters) s.push_back(side_labels[l]);
        return s;
    }
    [[nodiscard]] GroupWord inverse() const {
        GroupWord w;
        for (auto it = letters.rbegin(); it != letters.rend(); ++it)
            w.letters.push_back(static_cast<std::uint8_t>(letter_inverse(*it)));
        return w;
    }
    void push(int letter) {
        if (!letters.empty() && letters.back() == letter_inverse(letter))
            letters.pop_back();
        else
            letters.push_back(static_cast<std::uint8_t>(letter));
    }
    void append(const GroupWord& other) {
        for (auto l : other.letters) push(l);
    }
    void free_reduce() {
        std::vector<std::uint8_t> out;
        for (auto l : letters) {
            if (!out.empty() && out.back() == letter_inverse(l))
                out.pop_back();
            else
                out.push_back(l);
        }
        letters = std::move(out);
    }
    bool operator==(const GroupWord&) const = default;
};

inline GroupWord operator*(GroupWord a, const GroupWord& b) {
    a.append(b);
    return a;
}

/// Surface-group presentation: one relator of length 8, every letter once.
struct Presentation {
    std::vector<std::uint8_t> relator;

    /// Dehn's algorithm; valid because pieces of the relator have length 1.
    [[nodiscard]] bool is_trivial(const GroupWord& w) const { return dehn_reduce(w).empty(); }

    [[nodiscard]] GroupWord dehn_reduce(GroupWord w) const {
        const int n = static_cast<int>(relator.size());
        std::vector<std::vector<std::uint8_t>> cyc;
        GroupWord r(relator);
        GroupWord ri = r.inverse();
        for (const auto* base : {&r.letters, &ri.letters})
            for (int s = 0; s < n; ++s) {
                std::vector<std::uint8_t> c(n);
                for (int k = 0; k < n; ++k) c[k] = (*base)[(s + k) % n];
                cyc.push_back(std::move(c));
            }
        bool changed = true;
        while (changed) {
            changed = false;
            w.free_reduce();
            auto& L = w.letters;
            for (std::size_t i = 0; i < L.size() && !changed; ++i) {
                for (const auto& c : cyc) {
                    int m = 0;
                    while (m < n && i + m < L.size() && L[i + m] == c[m]) ++m;
                    if (2 * m > n) {
                        // replace c[0..m) by the inverse of c[m..n)
                        std::vector<std::uint8_t> rep;
                        for (int k = n - 1; k >= m; --k) rep.push_back(static_cast<std::uint8_t>(letter_inverse(c[k])));
                        std::vector<std::uint8_t> out(L.begin(), L.begin() + static_cast<long>(i));
                        out.insert(out.end(), rep.begin(), rep.end());
                        out.insert(out.end(), L.begin() + static_cast<long>(i + m), L.end());
                        L = std::move(out);
                        changed = true;
                        break;
                    }
                }
            }
        }
        return w;
    }
};

struct OctagonGeometry {
    double side_midpoint = std::acosh(1.0 / std::tan(pi / 8));  ///< centre to side midpoint
    double vertex = std::acosh(3.0 + 2.0 * std::sqrt(2.0));     ///< centre to vertex

    /// Disk-model angle of vertex k; side k runs from vertex k to vertex k + 1.
    [[nodiscard]] static double vertex_angle(int k) { return k * pi / 4 - pi / 8; }
    [[nodiscard]] HPoint vertex_point(int k) const {
        double r = std::tanh(vertex / 2);
        return from_disk(std::polar(r, vertex_angle(k)));
    }
    [[nodiscard]] HPoint midpoint(int k) const {
        double r = std::tanh(side_midpoint / 2);
        return from_disk(std::polar(r, k * pi / 4));
    }
};

class FuchsianGroup {
public:
    std::array<Frame, 8> generators{};  ///< generators[i] maps P to the tile across side i
    Presentation presentation;
    double relator_residual = 0.0;
    double commutator_residual = 0.0;
    OctagonGeometry octagon;

    [[nodiscard]] Frame generator(int side) const { return generators[side]; }

    [[nodiscard]] Frame evaluate(const GroupWord& w) const {
        Frame m = Frame::identity();
        for (auto l : w.letters) m = m * generators[l];
        return m;
    }

    /// Basis with [a,b][c,d] = 1: a = A, b = D, c = D C^-1, d = B.
    [[nodiscard]] std::array<GroupWord, 4> commutator_basis() const {
        return {GroupWord::parse("A"), GroupWord::parse("D"), GroupWord::parse("Dc"), GroupWord::parse("B")};
    }

    [[nodiscard]] double area() const {
        // Gauss-Bonnet on the octagon from its measured interior angles
        double angle_sum = 0.0;
        for (int k = 0; k < 8; ++k) angle_sum += interior_angle(k);
        return 6.0 * pi - angle_sum;
    }

    [[nodiscard]] double interior_angle(int k) const {
        HPoint v = octagon.vertex_point(k);
        HPoint prev = octagon.vertex_point((k + 7) % 8), next = octagon.vertex_point((k + 1) % 8);
        Geodesic g1 = geodesic_through(v, prev), g2 = geodesic_through(v, next);
        Configuration c = configuration(g1, g2);
        // configuration reports the acute angle; the octagon's angle is acute
        return c.theta;
    }
};

/// Half-turn about the midpoint of side k composed with the rotation taking side j to side k.
inline Frame octagon_pairing(const OctagonGeometry& o, int i, int j) {
    Frame to_mid = disk_rotation(i * pi / 4) * a_t(o.side_midpoint) * disk_rotation(-i * pi / 4);
    Frame half = to_mid * disk_rotation(pi) * to_mid.inverse();
    return (half * disk_rotation((i - j) * pi / 4)).renormalized();
}

inline FuchsianGroup octagon_group() {
    FuchsianGroup g;
    for (int i = 0; i < 8; ++i) g.generators[i] = octagon_pairing(g.octagon, i, side_partner[i]);
    g.presentation.relator = GroupWord::parse("ADacBCdb").letters;
    g.relator_residual = projective_residual(g.evaluate(GroupWord(g.presentation.relator)), Frame::identity());
    auto basis = g.commutator_basis();
    auto comm = [&](const GroupWord& x, const GroupWord& y) { return x * y * x.inverse() * y.inverse(); };
    GroupWord c = comm(basis[0], basis[1]) * comm(basis[2], basis[3]);
    g.commutator_residual = projective_residual(g.evaluate(c), Frame::identity());
    if (g.relator_residual > 1e-9 || g.commutator_residual > 1e-9)
        throw GeometryError("octagon group construction failed the relator check");
    for (const auto& gen : g.generators)
        if (std::abs(gen.trace()) <= 2.0) throw GeometryError("non-hyperbolic generator");
    return g;
}

struct Reduction {
    HPoint point;
    GroupWord word;  ///< original = word . point
};

/// Greedy descent into the Dirichlet octagon centred at i.
inline Reduction reduce_to_domain(HPoint p, const FuchsianGroup& G) {
    Reduction r{p, {}};
    double d = dist_h2(p, origin());
    const int max_steps = 64 + static_cast<int>(20 * d);
    for (int step = 0;; ++step) {
        if (step > max_steps) throw GeometryError("fundamental-domain reduction did not terminate");
        int best = -1;
        double best_d = d;
        HPoint best_p = r.point;
        for (int i = 0; i < 8; ++i) {
            HPoint q = act(G.generators[letter_inverse(i)], r.point);
            double dq = dist_h2(q, origin());
            if (dq < best_d - 1e-12) { best = i; best_d = dq; best_p = q; }
        }
        if (best < 0) break;
        r.point = best_p;
        d = best_d;
        r.word.letters.push_back(static_cast<std::uint8_t>(best));
    }
    r.word.free_reduce();
    return r;
}

inline bool in_domain(HPoint p, const FuchsianGroup& G, double tol = 1e-9) {
    double d = dist_h2(p, origin());
    for (int i = 0; i < 8; ++i)
        if (dist_h2(act(G.generators[i], origin()), p) < d - tol) return false;
    return true;
}

/// Endpoints uniform on the circle seen from the octagon centre.
template <class Rng>
Geodesic sample_lebesgue_geodesic(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 2 * pi);
    for (;;) {
        double a = u(rng), b = u(rng);
        if (angle_gap(a, b) > 1e-12) return Geodesic::from_angles(a, b);
    }
}

/// Unit-speed lift of g with t = 0 at the point nearest the octagon centre.
inline Frame centered_lift(const Geodesic& g, double t) {
    return g.lift(projection_parameter(g, origin()) + t);
}

struct FlowSample {
    double t = 0.0;
    Frame frame;      ///< reduced into the fundamental domain
    GroupWord word;   ///< deck increment since the previous sample
};

inline std::vector<FlowSample> flow_on_surface(const Frame& v, double T, double step, const FuchsianGroup& G) {
    if (!(step > 0)) throw std::invalid_argument("flow step must be positive");
    std::vector<FlowSample> out;
    Reduction r0 = reduce_to_domain(base_point(v), G);
    Frame cur = G.evaluate(r0.word).inverse() * v;
    out.push_back({0.0, cur, r0.word});
    const Frame a = a_t(step);
    const long n = static_cast<long>(std::floor(T / step + 1e-9));
    for (long k = 1; k <= n; ++k) {
        cur = (cur * a).renormalized();
        Reduction r = reduce_to_domain(base_point(cur), G);
        if (!r.word.empty()) cur = (G.evaluate(r.word).inverse() * cur).renormalized();
        out.push_back({k * step, cur, r.word});
    }
    return out;
}

}  // namespace ctlab
