// Convex polytopes in R^3 held in both representations: the list of applied
// halfspaces and a vertex/face boundary obtained by incremental plane
// clipping of a seed box.
#pragma once

#include "twinlab/core.hpp"

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace twinlab {

/// Closed halfspace {x : <normal, x> <= offset}. `tag` identifies the
/// constraint that produced it (generator index, or a negative box side).
struct Halfspace {
    Vec3 normal = Vec3::UnitX();
    double offset = 0.0;
    int tag = -1;

    static Halfspace make(const Vec3& n, double offset, int tag = -1) {
        const double len = n.norm();
        if (!(len > 0.0)) throw Error(Errc::ZeroVector, "halfspace normal has zero length");
        return {n / len, offset / len, tag};
    }

    double signed_distance(const Vec3& x) const { return normal.dot(x) - offset; }
    bool contains(const Vec3& x, double eps = 0.0) const { return signed_distance(x) <= eps; }
};

/// Tags assigned to the six sides of a seed box.
inline int box_side_tag(int axis, bool upper) { return -2 - (2 * axis + (upper ? 1 : 0)); }
inline bool is_box_tag(int tag) { return tag <= -2 && tag >= -7; }

struct Face {
    std::vector<int> vertices; // counter-clockwise seen from outside
    Vec3 normal = Vec3::UnitX(); // outward unit normal
    double offset = 0.0;         // <normal, x> = offset on the face
    int tag = -1;
};

class ConvexPolytope {
  public:
    ConvexPolytope() = default;

    static ConvexPolytope from_box(const Box& b) {
        if (!b.nonempty()) throw Error(Errc::InvalidArgument, "bounding box is empty");
        ConvexPolytope p;
        for (int i = 0; i < 8; ++i)
            p.vertices_.emplace_back((i & 1) ? b.hi.x() : b.lo.x(), (i & 2) ? b.hi.y() : b.lo.y(),
                                     (i & 4) ? b.hi.z() : b.lo.z());
        // Vertex index bits: 1 = x, 2 = y, 4 = z.
        const auto add = [&](std::vector<int> v, int axis, bool upper) {
            Vec3 n = Vec3::Zero();
            n[axis] = upper ? 1.0 : -1.0;
            const double off = upper ? b.hi[axis] : -b.lo[axis];
            p.faces_.push_back({std::move(v), n, off, box_side_tag(axis, upper)});
            p.halfspaces_.push_back({n, off, box_side_tag(axis, upper)});
        };
        add({0, 4, 6, 2}, 0, false);
        add({1, 3, 7, 5}, 0, true);
        add({0, 1, 5, 4}, 1, false);
        add({2, 6, 7, 3}, 1, true);
        add({0, 2, 3, 1}, 2, false);
        add({4, 5, 7, 6}, 2, true);
        p.scale_ = b.diagonal();
        return p;
    }

    /// Rebuild from stored boundary data (used by deserialization).
    static ConvexPolytope from_boundary(std::vector<Vec3> vertices, std::vector<Face> faces,
                                        std::vector<Halfspace> halfspaces) {
        ConvexPolytope p;
        p.vertices_ = std::move(vertices);
        p.faces_ = std::move(faces);
        p.halfspaces_ = std::move(halfspaces);
        p.scale_ = p.compute_scale();
        return p;
    }

    bool empty() const { return faces_.empty(); }
    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }
    const std::vector<Halfspace>& halfspaces() const { return halfspaces_; }

    /// Intersection with one halfspace.
    ConvexPolytope clipped(const Halfspace& h) const;

    double volume() const;
    Vec3 centroid() const;
    double face_area(const Face& f) const;
    Box bounding_box() const;

    /// Point membership against the boundary faces.
    bool contains(const Vec3& x, double eps = 1e-12) const {
        if (empty()) return false;
        for (const Face& f : faces_)
            if (f.normal.dot(x) - f.offset > eps) return false;
        return true;
    }

    /// max over faces of the signed plane distance; a lower bound of the
    /// Euclidean distance from an outside point to the polytope.
    double plane_distance(const Vec3& x) const {
        double d = -std::numeric_limits<double>::infinity();
        for (const Face& f : faces_) d = std::max(d, f.normal.dot(x) - f.offset);
        return d;
    }

    double merge_tolerance() const { return 1e-9 * scale_; }

  private:
    double compute_scale() const {
        if (vertices_.empty()) return 1.0;
        Vec3 lo = vertices_.front(), hi = vertices_.front();
        for (const Vec3& v : vertices_) {
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
        return std::max((hi - lo).norm(), 1e-300);
    }

    std::vector<Halfspace> halfspaces_;
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    double scale_ = 1.0; // diagonal of the seed box
};

inline ConvexPolytope ConvexPolytope::clipped(const Halfspace& h) const {
    if (empty()) return *this;
    const std::size_t nv = vertices_.size();
    const double eps = 1e-12 * std::max(1.0, scale_);
    std::vector<double> s(nv);
    bool any_out = false, any_in = false;
    for (std::size_t i = 0; i < nv; ++i) {
        s[i] = h.signed_distance(vertices_[i]);
        any_out |= s[i] > eps;
        any_in |= s[i] < -eps;
    }
    ConvexPolytope out;
    out.scale_ = scale_;
    out.halfspaces_ = halfspaces_;
    out.halfspaces_.push_back(h);
    if (!any_out) {
        out.vertices_ = vertices_;
        out.faces_ = faces_;
        return out;
    }
    if (!any_in) return out; // empty or a zero-volume remnant

    const double merge = merge_tolerance();
    std::vector<int> remap(nv, -1);
    std::vector<int> cap; // vertex ids lying on the cutting plane
    const auto add_cap_point = [&](const Vec3& x) {
        for (int id : cap)
            if ((out.vertices_[id] - x).norm() <= merge) return id;
        out.vertices_.push_back(x);
        const int id = int(out.vertices_.size()) - 1;
        cap.push_back(id);
        return id;
    };
    for (std::size_t i = 0; i < nv; ++i) {
        if (s[i] > eps) continue;
        if (s[i] >= -eps) {
            remap[i] = add_cap_point(vertices_[i]);
        } else {
            out.vertices_.push_back(vertices_[i]);
            remap[i] = int(out.vertices_.size()) - 1;
        }
    }
    std::map<std::pair<int, int>, int> edge_cut;
    const auto cut = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        auto it = edge_cut.find(key);
        if (it != edge_cut.end()) return it->second;
        const double t = s[a] / (s[a] - s[b]);
        const Vec3 x = vertices_[a] + t * (vertices_[b] - vertices_[a]);
        const int id = add_cap_point(x);
        edge_cut.emplace(key, id);
        return id;
    };

    for (const Face& f : faces_) {
        std::vector<int> cyc;
        const std::size_t k = f.vertices.size();
        for (std::size_t e = 0; e < k; ++e) {
            const int a = f.vertices[e];
            const int b = f.vertices[(e + 1) % k];
            if (s[a] <= eps) cyc.push_back(remap[a]);
            if ((s[a] < -eps && s[b] > eps) || (s[a] > eps && s[b] < -eps)) cyc.push_back(cut(a, b));
        }
        // Collapse repeats introduced by merging.
        std::vector<int> clean;
        for (int id : cyc)
            if (clean.empty() || clean.back() != id) clean.push_back(id);
        while (clean.size() > 1 && clean.front() == clean.back()) clean.pop_back();
        if (clean.size() >= 3) out.faces_.push_back({std::move(clean), f.normal, f.offset, f.tag});
    }

    if (cap.size() >= 3) {
        Vec3 c = Vec3::Zero();
        for (int id : cap) c += out.vertices_[id];
        c /= double(cap.size());
        const auto [u, v] = orthonormal_basis(h.normal);
        std::vector<std::pair<double, int>> ang;
        for (int id : cap) {
            const Vec3 r = out.vertices_[id] - c;
            ang.emplace_back(std::atan2(r.dot(v), r.dot(u)), id);
        }
        std::sort(ang.begin(), ang.end());
        Face capf{{}, h.normal, h.offset, h.tag};
        for (auto& [a, id] : ang) capf.vertices.push_back(id);
        out.faces_.push_back(std::move(capf));
    }

    // Drop unreferenced vertices and compact indices.
    std::vector<int> used(out.vertices_.size(), -1);
    std::vector<Vec3> compact;
    for (Face& f : out.faces_)
        for (int& id : f.vertices) {
            if (used[id] < 0) {
                used[id] = int(compact.size());
                compact.push_back(out.vertices_[id]);
            }
            id = used[id];
        }
    out.vertices_ = std::move(compact);
    if (out.faces_.size() < 4) {
        out.faces_.clear();
        out.vertices_.clear();
    }
    return out;
}

inline double ConvexPolytope::face_area(const Face& f) const {
    Vec3 acc = Vec3::Zero();
    const Vec3& o = vertices_[f.vertices[0]];
    for (std::size_t i = 1; i + 1 < f.vertices.size(); ++i)
        acc += (vertices_[f.vertices[i]] - o).cross(vertices_[f.vertices[i + 1]] - o);
    return 0.5 * std::abs(acc.dot(f.normal));
}

inline double ConvexPolytope::volume() const {
    if (empty()) return 0.0;
    Vec3 p0 = Vec3::Zero();
    for (const Vec3& v : vertices_) p0 += v;
    p0 /= double(vertices_.size());
    double vol = 0.0;
    for (const Face& f : faces_) {
        const Vec3 a = vertices_[f.vertices[0]] - p0;
        for (std::size_t i = 1; i + 1 < f.vertices.size(); ++i)
            vol += a.dot((vertices_[f.vertices[i]] - p0).cross(vertices_[f.vertices[i + 1]] - p0));
    }
    return std::max(0.0, vol / 6.0);
}

inline Vec3 ConvexPolytope::centroid() const {
    if (empty()) throw Error(Errc::InvalidArgument, "centroid of an empty polytope");
    Vec3 p0 = Vec3::Zero();
    for (const Vec3& v : vertices_) p0 += v;
    p0 /= double(vertices_.size());
    double vol = 0.0;
    Vec3 acc = Vec3::Zero();
    for (const Face& f : faces_) {
        const Vec3& a = vertices_[f.vertices[0]];
        for (std::size_t i = 1; i + 1 < f.vertices.size(); ++i) {
            const Vec3& b = vertices_[f.vertices[i]];
            const Vec3& c = vertices_[f.vertices[i + 1]];
            const double t = (a - p0).dot((b - p0).cross(c - p0));
            vol += t;
            acc += t * (p0 + a + b + c);
        }
    }
    if (!(vol > 0.0)) return p0;
    return acc / (4.0 * vol);
}

inline Box ConvexPolytope::bounding_box() const {
    if (empty()) throw Error(Errc::InvalidArgument, "bounding box of an empty polytope");
    Box b{vertices_.front(), vertices_.front()};
    for (const Vec3& v : vertices_) {
        b.lo = b.lo.cwiseMin(v);
        b.hi = b.hi.cwiseMax(v);
    }
    return b;
}

//---------------------------------------------------------------------------//
// Free functions
//---------------------------------------------------------------------------//

/// Intersection of the halfspaces with the bounding box. An empty result is a
/// regular value (`empty() == true`).
inline ConvexPolytope intersect_halfspaces(const std::vector<Halfspace>& halfspaces, const Box& bounding_box) {
    ConvexPolytope p = ConvexPolytope::from_box(bounding_box);
    for (const Halfspace& h : halfspaces) {
        p = p.clipped(h);
        if (p.empty()) break;
    }
    return p;
}

inline ConvexPolytope clip_to_box(const ConvexPolytope& p, const Box& b) {
    ConvexPolytope out = p;
    for (int axis = 0; axis < 3 && !out.empty(); ++axis) {
        Vec3 n = Vec3::Zero();
        n[axis] = 1.0;
        out = out.clipped({n, b.hi[axis], box_side_tag(axis, true)});
        if (out.empty()) break;
        out = out.clipped({-n, -b.lo[axis], box_side_tag(axis, false)});
    }
    return out;
}

inline double volume(const ConvexPolytope& p) { return p.volume(); }

/// Projection of a polytope onto the line through its centroid along
/// `direction`: the body occupies c + t*direction for t in [alpha, beta].
struct FeretInterval {
    double alpha = 0.0;
    double beta = 0.0;
    double rho = 0.0;
    Vec3 direction = Vec3::UnitZ();
    Vec3 anchor = Vec3::Zero();

    /// Coordinate of a point along the axis.
    double coordinate(const Vec3& x) const { return direction.dot(x - anchor); }
    /// Halfspace {x : <x - c, n> <= t}.
    Halfspace below(double t) const { return {direction, t + direction.dot(anchor), -1}; }
    /// Halfspace {x : <x - c, n> >= t}.
    Halfspace above(double t) const { return {-direction, -(t + direction.dot(anchor)), -1}; }
};

inline FeretInterval feret_interval(const ConvexPolytope& p, const Vec3& direction) {
    if (p.empty()) throw Error(Errc::InvalidArgument, "Feret interval of an empty polytope");
    FeretInterval f;
    f.direction = unit(direction);
    f.anchor = p.centroid();
    f.alpha = std::numeric_limits<double>::infinity();
    f.beta = -std::numeric_limits<double>::infinity();
    for (const Vec3& v : p.vertices()) {
        const double t = f.coordinate(v);
        f.alpha = std::min(f.alpha, t);
        f.beta = std::max(f.beta, t);
    }
    f.rho = f.beta - f.alpha;
    return f;
}

inline double volume_function(const ConvexPolytope& p, const FeretInterval& f, double t) {
    const double slack = 1e-9 * std::max(1.0, f.rho);
    if (t < f.alpha - slack || t > f.beta + slack)
        throw Error(Errc::OutOfRange, "volume function evaluated outside the Feret interval");
    if (t <= f.alpha) return 0.0;
    if (t >= f.beta) return p.volume();
    return p.clipped(f.below(t)).volume();
}

/// p intersected with the slab lo <= <x - c, n> <= hi.
inline ConvexPolytope clip_slab(const ConvexPolytope& p, const FeretInterval& f, double lo, double hi) {
    const double slack = 1e-9 * std::max(1.0, f.rho);
    if (!(lo < hi)) throw Error(Errc::InvalidSlab, "slab bounds must satisfy lo < hi");
    if (lo < f.alpha - slack || hi > f.beta + slack)
        throw Error(Errc::InvalidSlab, "slab lies outside the Feret interval");
    ConvexPolytope out = p;
    if (hi < f.beta) out = out.clipped(f.below(hi));
    if (lo > f.alpha && !out.empty()) out = out.clipped(f.above(lo));
    return out;
}

/// Exact tabulation of the volume function. Between consecutive vertex levels
/// the cross-section area is quadratic in t, so V is a cubic there and four
/// samples per segment determine it.
class VolumeProfile {
  public:
    VolumeProfile() = default;

    VolumeProfile(const ConvexPolytope& p, const FeretInterval& f) : f_(f), total_(p.volume()) {
        std::vector<double> lv;
        for (const Vec3& v : p.vertices()) lv.push_back(f.coordinate(v));
        std::sort(lv.begin(), lv.end());
        const double merge = 1e-12 * std::max(1.0, f.rho);
        levels_.push_back(f.alpha);
        for (double t : lv)
            if (t - levels_.back() > merge && f.beta - t > merge) levels_.push_back(t);
        levels_.push_back(f.beta);
        nodes_.resize(levels_.size() - 1);
        double prev = 0.0;
        for (std::size_t k = 0; k + 1 < levels_.size(); ++k) {
            const double a = levels_[k], b = levels_[k + 1];
            const double h = (b - a) / 3.0;
            auto& n = nodes_[k];
            n[0] = prev;
            n[1] = p.clipped(f.below(a + h)).volume();
            n[2] = p.clipped(f.below(a + 2 * h)).volume();
            n[3] = (k + 2 == levels_.size()) ? total_ : p.clipped(f.below(b)).volume();
            prev = n[3];
        }
    }

    const FeretInterval& feret() const { return f_; }
    double total() const { return total_; }

    double operator()(double t) const {
        if (t <= f_.alpha) return 0.0;
        if (t >= f_.beta) return total_;
        const auto it = std::upper_bound(levels_.begin(), levels_.end(), t);
        const std::size_t k = std::min<std::size_t>(std::size_t(it - levels_.begin()) - 1, nodes_.size() - 1);
        const double a = levels_[k], b = levels_[k + 1];
        const double x = 3.0 * (t - a) / (b - a); // nodes at x = 0, 1, 2, 3
        const auto& y = nodes_[k];
        const double l0 = -(x - 1) * (x - 2) * (x - 3) / 6.0;
        const double l1 = x * (x - 2) * (x - 3) / 2.0;
        const double l2 = -x * (x - 1) * (x - 3) / 2.0;
        const double l3 = x * (x - 1) * (x - 2) / 6.0;
        return std::clamp(l0 * y[0] + l1 * y[1] + l2 * y[2] + l3 * y[3], 0.0, total_);
    }

    /// Volume of the slab lo <= t <= hi.
    double slab(double lo, double hi) const { return (*this)(hi) - (*this)(lo); }

  private:
    FeretInterval f_;
    double total_ = 0.0;
    std::vector<double> levels_;
    std::vector<std::array<double, 4>> nodes_;
};

} // namespace twinlab
