#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ctlab/cover.hpp"
#include "ctlab/flatmodel.hpp"

namespace ctlab {

struct OracleConfig {
    double resolution = 0.1;  ///< lattice spacing in u, s and z
    double z_lo = -3.0, z_hi = 3.0;
    int stencil = 1;  ///< in-layer offsets up to this Chebyshev radius (1 gives the 26-neighbourhood)
};

/// A point of the cover at height z. Cone points are listed once per sector,
/// each entry a lifted square id and local coordinates (the corner).
struct QueryPoint {
    std::vector<std::pair<int, Vec2>> at;
    double z = 0.0;
};

struct OracleResult {
    std::vector<double> distance;
    std::vector<bool> touched_boundary;  ///< optimal grid path reached the edge of the box
    std::size_t settled = 0;
};

/// Brute-force distance in the singular solv metric: Dijkstra on a lattice in
/// eigen-coordinates, replicated over z layers, restricted to a region of
/// lifted squares. Every edge is a straight segment of the cover and is
/// weighted by its exact length, so grid distances bound true distances from above.
class SolvOracle {
public:
    SolvOracle(FlatCover& C, const PseudoAnosov& f, const std::vector<int>& region, OracleConfig cfg)
        : C_(&C), f_(&f), cfg_(cfg) {
        if (!(cfg.resolution > 0) || cfg.resolution > 0.1 + 1e-12)
            throw std::invalid_argument("oracle resolution must be in (0, 0.1]");
        if (!(cfg.z_hi > cfg.z_lo)) throw std::invalid_argument("oracle z range is empty");
        h_ = cfg.resolution;
        layers_ = static_cast<int>(std::ceil((cfg.z_hi - cfg.z_lo) / h_ - 1e-9)) + 1;
        origin_ = {0.03183098861837907, 0.02718281828459045};  // generic, shared by all resolutions
        in_region_.insert(region.begin(), region.end());
        build_nodes(region);
        build_edges();
        build_weights();
    }

    [[nodiscard]] std::size_t nodes_per_layer() const { return nodes_.size(); }
    [[nodiscard]] int layers() const { return layers_; }
    [[nodiscard]] double layer_z(int l) const { return cfg_.z_lo + l * h_; }

    /// Single-source distances to every target.
    [[nodiscard]] OracleResult distances(const QueryPoint& src, const std::vector<QueryPoint>& targets) const {
        const std::size_t P = nodes_.size();
        const std::size_t N = P * static_cast<std::size_t>(layers_);
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> dist(N, inf);
        std::vector<std::int32_t> pred(N, -1);
        using Item = std::pair<double, std::int64_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        for (const auto& [node, w] : anchors(src)) {
            if (w < dist[node]) {
                dist[node] = w;
                pq.push({w, node});
            }
        }
        std::vector<std::vector<std::pair<std::int64_t, double>>> tanchors;
        for (const auto& t : targets) tanchors.push_back(anchors(t));
        std::vector<double> best(targets.size(), inf);
        std::vector<std::int64_t> via(targets.size(), -1);
        // targets in the same lifted square as the source get the direct segment
        for (std::size_t i = 0; i < targets.size(); ++i) best[i] = direct(src, targets[i]);
        std::unordered_map<std::int64_t, std::vector<std::pair<std::size_t, double>>> watch;
        for (std::size_t i = 0; i < targets.size(); ++i)
            for (const auto& [node, w] : tanchors[i]) watch[node].push_back({i, w});

        auto bound = [&] {
            double b = 0;
            for (double v : best) b = std::max(b, v);
            return b;
        };
        double stop = bound();
        std::size_t settled = 0;
        const int nin = static_cast<int>(offsets_.size());
        while (!pq.empty()) {
            auto [d, node] = pq.top();
            pq.pop();
            if (d > dist[node]) continue;
            if (d >= stop) break;
            ++settled;
            if (auto it = watch.find(node); it != watch.end()) {
                bool changed = false;
                for (auto [i, w] : it->second)
                    if (d + w < best[i]) {
                        best[i] = d + w;
                        via[i] = node;
                        changed = true;
                    }
                if (changed) stop = bound();
            }
            const int l = static_cast<int>(node / static_cast<std::int64_t>(P));
            const std::size_t p = static_cast<std::size_t>(node % static_cast<std::int64_t>(P));
            auto relax = [&](std::int64_t m, double w) {
                double nd = d + w;
                if (nd < dist[m]) {
                    dist[m] = nd;
                    pred[m] = static_cast<std::int32_t>(node);
                    pq.push({nd, m});
                }
            };
            for (int dl = -1; dl <= 1; ++dl) {
                int l2 = l + dl;
                if (l2 < 0 || l2 >= layers_) continue;
                const std::int64_t base = static_cast<std::int64_t>(l2) * static_cast<std::int64_t>(P);
                if (dl != 0) relax(base + static_cast<std::int64_t>(p), weight(l, dl, nin));
                for (int o = 0; o < nin; ++o) {
                    int q = nbr_[p * nin + o];
                    if (q >= 0) relax(base + q, weight(l, dl, o));
                }
            }
        }
        OracleResult r;
        r.settled = settled;
        r.distance = best;
        r.touched_boundary.assign(targets.size(), false);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            for (std::int64_t n = via[i]; n >= 0; n = pred[n]) {
                int l = static_cast<int>(n / static_cast<std::int64_t>(P));
                std::size_t p = static_cast<std::size_t>(n % static_cast<std::int64_t>(P));
                if (l == 0 || l == layers_ - 1 || boundary_[p]) {
                    r.touched_boundary[i] = true;
                    break;
                }
            }
        }
        return r;
    }

    /// Query point at a flat position of the cover.
    [[nodiscard]] static QueryPoint point(int lifted, Vec2 local, double z) { return {{{lifted, local}}, z}; }
    /// Query point at a lifted cone point.
    [[nodiscard]] static QueryPoint cone(FlatCover& C, int lifted, int corner, double z) {
        QueryPoint q;
        q.z = z;
        for (auto [id, c] : C.corner_cycle(lifted, corner)) q.at.push_back({id, corner_offset(c)});
        return q;
    }

    [[nodiscard]] bool contains(int lifted) const { return in_region_.count(lifted) > 0; }

private:
    struct Node {
        int lifted;
        long i, j;
    };

    static std::uint64_t key(int lifted, long i, long j) {
        return (std::uint64_t(lifted) << 40) ^ (std::uint64_t(i + (1L << 19)) << 20) ^ std::uint64_t(j + (1L << 19));
    }

    [[nodiscard]] Vec2 lattice_eigen(long i, long j) const { return {origin_.x + h_ * i, origin_.y + h_ * j}; }

    void build_nodes(const std::vector<int>& region) {
        for (int id : region) {
            const auto& ls = (*C_)[id];
            double umin = INFINITY, umax = -INFINITY, smin = INFINITY, smax = -INFINITY;
            for (int c = 0; c < 4; ++c) {
                Vec2 e = f_->eigen(Vec2{double(ls.X), double(ls.Y)} + corner_offset(c));
                umin = std::min(umin, e.x);
                umax = std::max(umax, e.x);
                smin = std::min(smin, e.y);
                smax = std::max(smax, e.y);
            }
            long i0 = static_cast<long>(std::floor((umin - origin_.x) / h_)) - 1;
            long i1 = static_cast<long>(std::ceil((umax - origin_.x) / h_)) + 1;
            long j0 = static_cast<long>(std::floor((smin - origin_.y) / h_)) - 1;
            long j1 = static_cast<long>(std::ceil((smax - origin_.y) / h_)) + 1;
            for (long i = i0; i <= i1; ++i)
                for (long j = j0; j <= j1; ++j) {
                    Vec2 p = f_->from_eigen(lattice_eigen(i, j));
                    double x = p.x - ls.X, y = p.y - ls.Y;
                    if (x < 0 || x >= 1 || y < 0 || y >= 1) continue;
                    index_[key(id, i, j)] = static_cast<int>(nodes_.size());
                    nodes_.push_back({id, i, j});
                }
        }
        if (nodes_.empty()) throw std::invalid_argument("oracle region holds no lattice nodes");
    }

    [[nodiscard]] Vec2 local_of(const Node& n) const {
        const auto& ls = (*C_)[n.lifted];
        Vec2 p = f_->from_eigen(lattice_eigen(n.i, n.j));
        return {p.x - ls.X, p.y - ls.Y};
    }

    void build_edges() {
        for (int di = -cfg_.stencil; di <= cfg_.stencil; ++di)
            for (int dj = -cfg_.stencil; dj <= cfg_.stencil; ++dj)
                if ((di || dj) && std::gcd(std::abs(di), std::abs(dj)) == 1) offsets_.push_back({di, dj});
        const std::size_t nin = offsets_.size();
        nbr_.assign(nodes_.size() * nin, -1);
        boundary_.assign(nodes_.size(), false);
        const auto& S = C_->surface();
        for (std::size_t p = 0; p < nodes_.size(); ++p) {
            const Node n = nodes_[p];
            Vec2 loc = local_of(n);
            for (std::size_t o = 0; o < nin; ++o) {
                auto [di, dj] = offsets_[o];
                Vec2 d = f_->from_eigen({h_ * di, h_ * dj});
                Trace tr = trace_ray(S, nullptr, {(*C_)[n.lifted].sq, loc.x, loc.y}, d, d.norm());
                if (tr.cone) continue;
                int id = n.lifted;
                bool inside = true;
                for (const auto& seg : tr.segments) {
                    if (seg.exit_side < 0) break;
                    id = C_->neighbor(id, seg.exit_side);
                    if (!in_region_.count(id)) { inside = false; break; }
                }
                if (!inside) { boundary_[p] = true; continue; }
                auto it = index_.find(key(id, n.i + di, n.j + dj));
                if (it == index_.end()) { boundary_[p] = true; continue; }
                nbr_[p * nin + o] = it->second;
            }
        }
    }

    void build_weights() {
        const int nin = static_cast<int>(offsets_.size());
        const double k = f_->k;
        wtab_.assign(static_cast<std::size_t>(layers_) * 3 * (nin + 1), 0.0);
        for (int l = 0; l < layers_; ++l)
            for (int dl = -1; dl <= 1; ++dl)
                for (int o = 0; o <= nin; ++o) {
                    double du = o < nin ? h_ * offsets_[o].first : 0.0;
                    double ds = o < nin ? h_ * offsets_[o].second : 0.0;
                    SolvVertex a{0, 0, layer_z(l)}, b{du, ds, layer_z(l) + dl * h_};
                    wtab_[(static_cast<std::size_t>(l) * 3 + (dl + 1)) * (nin + 1) + o] = ct_segment_length(a, b, k);
                }
    }

    [[nodiscard]] double weight(int l, int dl, int o) const {
        const int nin = static_cast<int>(offsets_.size());
        return wtab_[(static_cast<std::size_t>(l) * 3 + (dl + 1)) * (nin + 1) + o];
    }

    /// Lattice nodes joined to a query point by straight segments inside one
    /// square. The reach is fixed in absolute units so that every anchor edge
    /// of a coarse grid is also an anchor edge of its refinements.
    [[nodiscard]] std::vector<std::pair<std::int64_t, double>> anchors(const QueryPoint& q) const {
        constexpr double reach = 0.25, zreach = 0.1 + 1e-9;
        std::vector<std::pair<std::int64_t, double>> out;
        if (q.z < cfg_.z_lo || q.z > layer_z(layers_ - 1)) throw std::invalid_argument("query height outside the oracle box");
        int l0 = std::max(0, static_cast<int>(std::ceil((q.z - zreach - cfg_.z_lo) / h_ - 1e-9)));
        int l1 = std::min(layers_ - 1, static_cast<int>(std::floor((q.z + zreach - cfg_.z_lo) / h_ + 1e-9)));
        const std::size_t P = nodes_.size();
        const long span = static_cast<long>(std::ceil(reach / h_)) + 1;
        for (const auto& [id, loc] : q.at) {
            if (!in_region_.count(id)) throw std::invalid_argument("query point outside the oracle region");
            const auto& ls = (*C_)[id];
            Vec2 e = f_->eigen(Vec2{ls.X + loc.x, ls.Y + loc.y});
            long ic = std::lround((e.x - origin_.x) / h_), jc = std::lround((e.y - origin_.y) / h_);
            for (long i = ic - span; i <= ic + span; ++i)
                for (long j = jc - span; j <= jc + span; ++j) {
                    auto it = index_.find(key(id, i, j));
                    if (it == index_.end()) continue;
                    Vec2 le = lattice_eigen(i, j);
                    if (std::hypot(le.x - e.x, le.y - e.y) > reach) continue;
                    for (int l = l0; l <= l1; ++l) {
                        if (std::abs(layer_z(l) - q.z) > zreach) continue;
                        double w = ct_segment_length({e.x, e.y, q.z}, {le.x, le.y, layer_z(l)}, f_->k);
                        out.push_back({static_cast<std::int64_t>(l) * static_cast<std::int64_t>(P) + it->second, w});
                    }
                }
        }
        if (out.empty()) throw std::invalid_argument("query point has no lattice neighbours; refine the resolution");
        return out;
    }

    [[nodiscard]] double direct(const QueryPoint& a, const QueryPoint& b) const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [ia, la] : a.at)
            for (const auto& [ib, lb] : b.at)
                if (ia == ib) {
                    const auto& ls = (*C_)[ia];
                    Vec2 ea = f_->eigen(Vec2{ls.X + la.x, ls.Y + la.y});
                    Vec2 eb = f_->eigen(Vec2{ls.X + lb.x, ls.Y + lb.y});
                    best = std::min(best, ct_segment_length({ea.x, ea.y, a.z}, {eb.x, eb.y, b.z}, f_->k));
                }
        return best;
    }

    FlatCover* C_;
    const PseudoAnosov* f_;
    OracleConfig cfg_;
    double h_ = 0.1;
    int layers_ = 0;
    Vec2 origin_;
    std::unordered_set<int> in_region_;
    std::vector<Node> nodes_;
    std::unordered_map<std::uint64_t, int> index_;
    std::vector<std::pair<int, int>> offsets_;
    std::vector<int> nbr_;
    std::vector<bool> boundary_;
    std::vector<double> wtab_;
};

}  // namespace ctlab
