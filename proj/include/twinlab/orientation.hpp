// Cubic lattice orientations. An orientation G maps specimen coordinates to
// crystal coordinates (x' = G x); G and R*G describe the same lattice for
// every R in the 24-element rotation group of the cube.
#pragma once

#include "twinlab/core.hpp"

#include <Eigen/Geometry>

#include <array>
#include <optional>
#include <vector>

namespace twinlab {

using Quat = Eigen::Quaterniond;

/// Unit quaternion as (w, x, y, z).
using QuatCoeffs = Eigen::Vector4d;

inline QuatCoeffs wxyz(const Quat& q) { return {q.w(), q.x(), q.y(), q.z()}; }

// Sign convention: nonnegative scalar part; for w == 0 the first nonzero
// vector component is made positive.
inline Quat canonical_sign(const Quat& q) {
    const QuatCoeffs c = wxyz(q);
    for (int i = 0; i < 4; ++i) {
        if (c[i] > 0) return q;
        if (c[i] < 0) return Quat(-q.w(), -q.x(), -q.y(), -q.z());
    }
    return q;
}

class Orientation {
  public:
    Orientation() : m_(Mat3::Identity()), q_(Quat::Identity()) {}

    static Orientation identity() { return {}; }

    static Orientation from_quaternion(const Quat& q) {
        const double n = q.norm();
        if (!(n > 0)) throw Error(Errc::ZeroVector, "zero quaternion");
        Orientation o;
        // Inputs already unit to rounding are kept as given so stored marks reload exactly.
        const double d = std::abs(n - 1.0) <= 1e-15 ? 1.0 : n;
        o.q_ = canonical_sign(Quat(q.w() / d, q.x() / d, q.y() / d, q.z() / d));
        o.m_ = o.q_.toRotationMatrix();
        return o;
    }

    static Orientation from_quaternion(double w, double x, double y, double z) {
        return from_quaternion(Quat(w, x, y, z));
    }

    static Orientation from_matrix(const Mat3& m) {
        if (!(m * m.transpose()).isApprox(Mat3::Identity(), 1e-8) || std::abs(m.determinant() - 1.0) > 1e-8)
            throw Error(Errc::InvalidArgument, "matrix is not a proper rotation");
        Orientation o = from_quaternion(Quat(m));
        return o;
    }

    const Mat3& matrix() const { return m_; }
    const Quat& quaternion() const { return q_; }
    QuatCoeffs coeffs() const { return wxyz(q_); }

    Orientation inverse() const { return from_quaternion(q_.conjugate()); }

    /// Left composition R * G.
    friend Orientation operator*(const Quat& r, const Orientation& g) { return from_quaternion(r * g.q_); }

  private:
    Mat3 m_;
    Quat q_;
};

//---------------------------------------------------------------------------//
// Symmetry group
//---------------------------------------------------------------------------//
struct SymmetryGroup {
    std::vector<Mat3> elements;
    std::vector<Quat> quaternions;

    std::size_t size() const { return elements.size(); }

    /// Index of the element equal to m within tol, if any.
    std::optional<std::size_t> find(const Mat3& m, double tol = 1e-12) const {
        for (std::size_t k = 0; k < elements.size(); ++k)
            if ((elements[k] - m).cwiseAbs().maxCoeff() <= tol) return k;
        return std::nullopt;
    }
};

/// The 24 proper rotations of the cube: signed permutation matrices with
/// determinant +1. Identity first, the rest in lexicographic order of their
/// row-major entries.
inline const SymmetryGroup& cubic_group() {
    static const SymmetryGroup group = [] {
        std::vector<Mat3> all;
        std::array<int, 3> perm{0, 1, 2};
        do {
            for (int signs = 0; signs < 8; ++signs) {
                Mat3 m = Mat3::Zero();
                for (int r = 0; r < 3; ++r) m(r, perm[r]) = (signs >> r & 1) ? -1.0 : 1.0;
                if (m.determinant() > 0) all.push_back(m);
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        const auto lex_less = [](const Mat3& a, const Mat3& b) {
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    if (a(r, c) != b(r, c)) return a(r, c) < b(r, c);
            return false;
        };
        std::sort(all.begin(), all.end(), [&](const Mat3& a, const Mat3& b) {
            const bool ia = a.isIdentity(), ib = b.isIdentity();
            if (ia != ib) return ia;
            return lex_less(a, b);
        });
        SymmetryGroup g;
        g.elements = all;
        for (const Mat3& m : all) g.quaternions.push_back(canonical_sign(Quat(m)));
        return g;
    }();
    return group;
}

//---------------------------------------------------------------------------//
// Metrics
//---------------------------------------------------------------------------//

/// Smallest rotation angle of G1^{-1} R G2 over the cubic group, in radians.
inline double disorientation(const Orientation& g1, const Orientation& g2) {
    const auto& grp = cubic_group();
    double best = -1.0;
    const Mat3 a = g1.matrix().transpose();
    for (const Mat3& r : grp.elements) {
        const double c = 0.5 * ((a * r * g2.matrix()).trace() - 1.0);
        best = std::max(best, c);
    }
    return std::acos(std::clamp(best, -1.0, 1.0));
}

/// Largest cosine between the lattice direction v and the symmetry orbit of
/// the image G u.
inline double tilt(const Orientation& g, const Vec3& v, const Vec3& u) {
    const double nv = v.norm(), nu = u.norm();
    if (!(nv > 0) || !(nu > 0)) throw Error(Errc::ZeroVector, "tilt directions must be nonzero");
    const Vec3 gu = g.matrix() * u;
    double best = -std::numeric_limits<double>::infinity();
    for (const Mat3& r : cubic_group().elements) best = std::max(best, v.dot(r * gu));
    return best / (nv * nu);
}

//---------------------------------------------------------------------------//
// Sampling
//---------------------------------------------------------------------------//

/// Haar-uniform rotation from a uniform point on S^3.
inline Orientation sample_uniform(Rng& rng) {
    for (;;) {
        const Quat q(standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng));
        if (q.norm() > 1e-12) return Orientation::from_quaternion(q);
    }
}

struct OdfParams {
    double kappa = 0.0;
    Vec3 u = Vec3::UnitZ();
    Vec3 v = Vec3(1, 1, 1);

    void validate() const {
        if (!(kappa >= 0)) throw Error(Errc::InvalidArgument, "kappa must be nonnegative");
        if (!(u.norm() > 0) || !(v.norm() > 0)) throw Error(Errc::ZeroVector, "odf directions must be nonzero");
    }
};

/// Exact draw from f(G) proportional to exp(kappa * tilt(G, v, u)) by
/// rejection from the Haar measure.
inline Orientation sample_odf(const OdfParams& p, Rng& rng) {
    p.validate();
    if (p.kappa == 0.0) return sample_uniform(rng);
    constexpr long max_proposals = 10'000'000;
    for (long i = 0; i < max_proposals; ++i) {
        const Orientation g = sample_uniform(rng);
        const double accept = std::exp(p.kappa * (tilt(g, p.v, p.u) - 1.0));
        if (uniform01(rng) < accept) return g;
    }
    throw Error(Errc::NonConvergence, "odf rejection sampler exceeded its proposal budget");
}

//---------------------------------------------------------------------------//
// Moving-average marking
//---------------------------------------------------------------------------//

/// Representative of the class {R*G} in the asymmetric domain: the
/// equivalent unit quaternion with the largest scalar part, ties broken by
/// the lexicographically largest (w, x, y, z).
inline Quat fundamental_representative(const Orientation& g) {
    const auto& grp = cubic_group();
    QuatCoeffs best = QuatCoeffs::Constant(-2.0);
    for (const Quat& r : grp.quaternions) {
        const QuatCoeffs c = wxyz(canonical_sign(r * g.quaternion()));
        bool better = false;
        if (c[0] > best[0] + 1e-12) {
            better = true;
        } else if (c[0] >= best[0] - 1e-12) {
            for (int i = 1; i < 4; ++i) {
                if (c[i] > best[i] + 1e-12) {
                    better = true;
                    break;
                }
                if (c[i] < best[i] - 1e-12) break;
            }
        }
        if (better) best = c;
    }
    return Quat(best[0], best[1], best[2], best[3]);
}

/// Normalized component-wise sum of the neighbours' representative
/// quaternions, one output mark per cell.
inline std::vector<Orientation> moving_average_marks(const std::vector<std::vector<std::size_t>>& adjacency,
                                                     const std::vector<Orientation>& marks) {
    if (adjacency.size() != marks.size())
        throw Error(Errc::InvalidArgument, "adjacency and marks differ in length");
    std::vector<QuatCoeffs> reps(marks.size());
    for (std::size_t i = 0; i < marks.size(); ++i) reps[i] = wxyz(fundamental_representative(marks[i]));
    std::vector<Orientation> out;
    out.reserve(marks.size());
    for (std::size_t i = 0; i < marks.size(); ++i) {
        if (adjacency[i].empty())
            throw Error(Errc::IsolatedCell, "cell " + std::to_string(i) + " has no neighbours");
        QuatCoeffs sum = QuatCoeffs::Zero();
        for (std::size_t j : adjacency[i]) sum += reps.at(j);
        if (sum.norm() < 1e-9)
            throw Error(Errc::DegenerateSum, "neighbour quaternion sum vanishes for cell " + std::to_string(i));
        sum.normalize();
        out.push_back(Orientation::from_quaternion(sum[0], sum[1], sum[2], sum[3]));
    }
    return out;
}

//---------------------------------------------------------------------------//
// Inverse pole figure
//---------------------------------------------------------------------------//

/// Crystal direction G*d folded into the standard triangle (0 <= y <= x <= z)
/// and projected stereographically from the south pole.
inline Eigen::Vector2d ipf_coordinates(const Orientation& g, const Vec3& direction) {
    Vec3 h = (g.matrix() * direction).cwiseAbs();
    std::sort(h.data(), h.data() + 3);
    const double nrm = h.norm();
    if (!(nrm > 0)) throw Error(Errc::ZeroVector, "ipf direction must be nonzero");
    h /= nrm;
    const double y = h[0], x = h[1], z = h[2];
    return {x / (1.0 + z), y / (1.0 + z)};
}

/// Projected corners of the standard triangle.
inline Eigen::Vector2d ipf_corner_001() { return {0.0, 0.0}; }
inline Eigen::Vector2d ipf_corner_101() { return {std::sqrt(0.5) / (1.0 + std::sqrt(0.5)), 0.0}; }
inline Eigen::Vector2d ipf_corner_111() {
    const double c = 1.0 / std::sqrt(3.0);
    return {c / (1.0 + c), c / (1.0 + c)};
}

} // namespace twinlab
