#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ctlab/flatmodel.hpp"
#include "ctlab/surface.hpp"

namespace ctlab {

/// Lifted square of the flat universal cover: base square plus deck element.
struct LiftedSquare {
    int sq = 0;
    GroupWord word;
    long X = 0, Y = 0;  ///< developed position of the lower-left corner
    std::array<int, 4> nbr{-1, -1, -1, -1};
};

/// Lazily grown piece of the universal cover of a marked surface. Lifts with
/// the same base square and developed position are compared exactly through
/// the word problem, since the developing map is not injective.
class FlatCover {
public:
    FlatCover(const TranslationSurface& S, const Presentation& P) : S_(&S), P_(&P) {
        if (!S.marked()) throw FlatModelError("the universal cover needs a marked surface");
    }

    [[nodiscard]] const TranslationSurface& surface() const { return *S_; }
    [[nodiscard]] std::size_t size() const { return squares_.size(); }
    [[nodiscard]] const LiftedSquare& operator[](int id) const { return squares_[id]; }

    [[nodiscard]] Vec2 developed(const GroupWord& w) const {
        long x = 0, y = 0;
        for (auto l : w.letters) {
            x += S_->letter_holonomy[l][0];
            y += S_->letter_holonomy[l][1];
        }
        return {double(x), double(y)};
    }

    int find_or_add(int sq, const GroupWord& w0) {
        GroupWord w = P_->dehn_reduce(w0);
        Vec2 d = developed(w) + S_->square_offset[sq];
        long X = std::lround(d.x), Y = std::lround(d.y);
        auto& bucket = index_[key(sq, X, Y)];
        for (int id : bucket)
            if (P_->is_trivial(squares_[id].word.inverse() * w)) return id;
        LiftedSquare ls;
        ls.sq = sq;
        ls.word = std::move(w);
        ls.X = X;
        ls.Y = Y;
        squares_.push_back(std::move(ls));
        bucket.push_back(static_cast<int>(squares_.size()) - 1);
        return static_cast<int>(squares_.size()) - 1;
    }

    int neighbor(int id, int side) {
        if (squares_[id].nbr[side] >= 0) return squares_[id].nbr[side];
        const LiftedSquare cur = squares_[id];
        GroupWord w = cur.word;
        int l = S_->edge_letter[cur.sq][side];
        if (l >= 0) w.push(l);
        int nid = find_or_add(S_->neighbor(cur.sq, side), w);
        squares_[id].nbr[side] = nid;
        squares_[nid].nbr[(side + 2) % 4] = id;
        return nid;
    }

    /// Sectors around the lifted vertex at corner c of square id, counterclockwise.
    std::vector<std::pair<int, int>> corner_cycle(int id, int c) {
        int n = S_->vertices[S_->corner_vertex[squares_[id].sq][c].first].sectors();
        std::vector<std::pair<int, int>> out;
        int cid = id, cc = c;
        for (int i = 0; i < n; ++i) {
            out.emplace_back(cid, cc);
            int nid = neighbor(cid, TranslationSurface::rotation_side(cc));
            cc = S_->next_sector(squares_[cid].sq, cc).second;
            cid = nid;
        }
        if (cid != id || cc != c) throw FlatModelError("lifted corner cycle does not close");
        return out;
    }

    /// Lifted squares visited by a trace that starts in lifted square `id`.
    std::vector<int> follow(int id, const Trace& tr) {
        std::vector<int> out{id};
        for (const auto& seg : tr.segments) {
            if (seg.exit_side < 0) break;
            id = neighbor(id, seg.exit_side);
            out.push_back(id);
        }
        return out;
    }

private:
    static std::uint64_t key(int sq, long X, long Y) {
        return (std::uint64_t(sq) << 48) ^ (std::uint64_t(X + (1L << 23)) << 24) ^ std::uint64_t(Y + (1L << 23));
    }

    const TranslationSurface* S_;
    const Presentation* P_;
    std::vector<LiftedSquare> squares_;
    std::unordered_map<std::uint64_t, std::vector<int>> index_;
};

/// Region of lifted squares: seeds, every full corner cycle around them,
/// then a breadth-first margin.
inline std::vector<int> grow_region(FlatCover& C, const std::vector<int>& seeds, int margin) {
    std::unordered_set<int> in;
    std::vector<int> order;
    auto add = [&](int id) {
        if (in.insert(id).second) order.push_back(id);
    };
    for (int id : seeds) {
        add(id);
        for (int c = 0; c < 4; ++c)
            for (auto [sid, sc] : C.corner_cycle(id, c)) add(sid);
    }
    std::vector<int> frontier = order;
    for (int m = 0; m < margin; ++m) {
        std::vector<int> next;
        for (int id : frontier)
            for (int side = 0; side < 4; ++side) {
                int nid = C.neighbor(id, side);
                if (in.insert(nid).second) {
                    order.push_back(nid);
                    next.push_back(nid);
                }
            }
        frontier = std::move(next);
    }
    return order;
}

/// Equivariant marking of the hyperbolic octagon tiling by the flat L polygon:
/// the Klein-model triangle fan of the octagon is mapped affinely onto the
/// fan of the L polygon from an interior centre.
class Marking {
public:
    Marking(const FuchsianGroup& G, const TranslationSurface& S) : G_(&G), S_(&S) {
        double r = std::tanh(G.octagon.vertex / 2);
        double kr = 2 * r / (1 + r * r);
        for (int k = 0; k < 8; ++k) {
            double a = OctagonGeometry::vertex_angle(k);
            klein_[k] = {kr * std::cos(a), kr * std::sin(a)};
        }
        flat_ = {{{0, 0}, {1, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}, {0, 1}}};
    }

    static Vec2 klein(HPoint p) {
        std::complex<double> w = to_disk(p);
        double s = 2.0 / (1.0 + std::norm(w));
        return {s * w.real(), s * w.imag()};
    }

    /// Point of the L polygon (square coordinates) for a point of the octagon.
    [[nodiscard]] Vec2 fan(HPoint p) const {
        Vec2 q = klein(p);
        double a = std::atan2(q.y, q.x) + pi / 8;
        if (a < 0) a += 2 * pi;
        int k = std::min(7, static_cast<int>(std::floor(a / (pi / 4))));
        Vec2 A = klein_[k], B = klein_[(k + 1) % 8];
        double det = A.x * B.y - A.y * B.x;
        double la = (q.x * B.y - q.y * B.x) / det, lb = (A.x * q.y - A.y * q.x) / det;
        // the reduction tolerance can leave the point a hair outside the octagon
        double s = la + lb;
        if (s > 1) { la /= s; lb /= s; }
        la = std::max(la, 0.0);
        lb = std::max(lb, 0.0);
        Vec2 c = centre();
        return c + la * (flat_[k] - c) + lb * (flat_[(k + 1) % 8] - c);
    }

    static Vec2 centre() { return {0.75, 0.75}; }

    struct Image {
        int sq = 0;
        Vec2 local;     ///< coordinates inside the base square
        GroupWord word; ///< deck element of the tile
        Vec2 dev;       ///< developed square coordinates
    };

    /// Flat image of a hyperbolic point; the deck word is that of the tile holding p.
    [[nodiscard]] Image image(HPoint p, const FlatCover& C) const {
        Reduction r = reduce_to_domain(p, *G_);
        return image_reduced(r.point, r.word, C);
    }

    [[nodiscard]] Image image_reduced(HPoint x0, const GroupWord& w, const FlatCover& C) const {
        Vec2 q = fan(x0);
        Image im;
        im.sq = q.x >= 1 ? 1 : (q.y >= 1 ? 2 : 0);
        im.local = q - S_->square_offset[im.sq];
        im.local.x = std::clamp(im.local.x, 0.0, 1.0);
        im.local.y = std::clamp(im.local.y, 0.0, 1.0);
        im.word = w;
        im.dev = C.developed(w) + q;
        return im;
    }

private:
    const FuchsianGroup* G_;
    const TranslationSurface* S_;
    std::array<Vec2, 8> klein_{};
    std::array<Vec2, 8> flat_{};
};

}  // namespace ctlab
