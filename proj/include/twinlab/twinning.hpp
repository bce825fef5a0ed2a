// Deformation twinning of a single grain: Schmid factor, propensity, twin
// plane normal, lattice reorientation, twinning strain and the
// volume-dependent decision rule.
#pragma once

#include "twinlab/core.hpp"
#include "twinlab/orientation.hpp"

namespace twinlab {

struct TwinningSystem {
    Vec3 n1, a1, n2, a2;
    double shear_s = 0.0;
    double beta_tw = 0.0;

    /// {114}<221> system of a cubic lattice: K1 = (-4 1 1), eta1 = [1 2 2],
    /// K2 = (0 1 1), eta2 = [1 0 0].
    static TwinningSystem paper_114() {
        TwinningSystem s;
        s.n1 = Vec3(-4, 1, 1) / std::sqrt(18.0);
        s.a1 = Vec3(1, 2, 2) / 3.0;
        s.n2 = Vec3(0, 1, 1) / std::sqrt(2.0);
        s.a2 = Vec3(1, 0, 0);
        s.beta_tw = std::acos(std::abs(s.a2.dot(s.n1)));
        s.shear_s = 2.0 * std::tan(s.beta_tw);
        return s;
    }

    void validate() const {
        for (const Vec3* v : {&n1, &a1, &n2, &a2})
            if (std::abs(v->norm() - 1.0) > 1e-12) throw Error(Errc::InvalidArgument, "twinning vectors must be unit");
        if (std::abs(n1.dot(a1)) > 1e-12) throw Error(Errc::InvalidArgument, "shear direction must lie in K1");
        if (!(shear_s > 0.0) || !std::isfinite(shear_s)) throw Error(Errc::InvalidArgument, "shear must be positive");
    }
};

/// chi = <n1, G d> <a1, G d>.
inline double schmid_factor(const Orientation& g, const Vec3& a1, const Vec3& n1, const Vec3& d_l) {
    const Vec3 gd = g.matrix() * d_l;
    return n1.dot(gd) * a1.dot(gd);
}

struct Propensity {
    double psi = 0.0;
    std::size_t r_bar = 0; // index into cubic_group()
    bool tie = false;
};

/// Largest Schmid factor over the symmetry images (R a1, R n1). The first
/// maximizing group element wins ties.
inline Propensity propensity(const Orientation& g, const TwinningSystem& sys, const Vec3& d_l) {
    const auto& grp = cubic_group();
    const Vec3 gd = g.matrix() * d_l;
    Propensity p;
    p.psi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < grp.size(); ++k) {
        const Mat3& r = grp.elements[k];
        const double chi = (r * sys.n1).dot(gd) * (r * sys.a1).dot(gd);
        if (chi > p.psi + 1e-14) {
            p.psi = chi;
            p.r_bar = k;
            p.tie = false;
        } else if (chi >= p.psi - 1e-14) {
            p.tie = true;
        }
    }
    return p;
}

/// Twin plane normal in the specimen frame, G^{-1} R n1.
inline Vec3 twin_normal(const Orientation& g, const TwinningSystem& sys, std::size_t r_bar) {
    return g.matrix().transpose() * (cubic_group().elements.at(r_bar) * sys.n1);
}

/// 180 degree rotation about abar = R a1 in the crystal frame.
inline Mat3 twin_rotation(const TwinningSystem& sys, std::size_t r_bar) {
    const Vec3 a = cubic_group().elements.at(r_bar) * sys.a1;
    return 2.0 * a * a.transpose() - Mat3::Identity();
}

/// Orientation of the twinned lattice, R_t G.
inline Orientation reorientation(const TwinningSystem& sys, std::size_t r_bar, const Orientation& g) {
    return Orientation::from_matrix(twin_rotation(sys, r_bar) * g.matrix());
}

struct TwinStrain {
    Mat3 e_l = Mat3::Zero();
    double e_scalar = 0.0;
};

/// Green-Lagrange strain of the simple shear F = I + s abar nbar^T and its
/// normal component along the loading direction.
inline TwinStrain twin_strain(const Orientation& g, const TwinningSystem& sys, std::size_t r_bar, const Vec3& d_l) {
    if (!(sys.shear_s >= 0.0) || !std::isfinite(sys.shear_s)) throw Error(Errc::InvalidArgument, "invalid shear");
    const Mat3& r = cubic_group().elements.at(r_bar);
    const Vec3 a = r * sys.a1, n = r * sys.n1;
    const Mat3 f = Mat3::Identity() + sys.shear_s * a * n.transpose();
    TwinStrain out;
    out.e_l = 0.5 * (f.transpose() * f - Mat3::Identity());
    const Vec3 gd = g.matrix() * d_l;
    out.e_scalar = gd.dot(out.e_l * gd);
    return out;
}

inline double twin_volume_fraction(double epsilon_m, double e_scalar) {
    if (!(epsilon_m > 0.0) || !(epsilon_m < 1.0)) throw Error(Errc::InvalidArgument, "epsilon_m must lie in (0, 1)");
    if (!(e_scalar > 0.0) || epsilon_m >= e_scalar)
        throw Error(Errc::FractionOverflow, "strain " + std::to_string(epsilon_m) + " unreachable with E = " +
                                                std::to_string(e_scalar));
    return epsilon_m / e_scalar;
}

struct TwinDecisionParams {
    double psi1 = 0.2;
    double psi2 = 0.4;
    double v_min = 0.0;
    double v_max = 1.0;
    Vec3 d_l = Vec3::UnitZ();
    // Swap the end points so that the smallest cell gets psi2.
    bool hall_petch_orientation = false;

    void validate() const {
        if (!(0.0 < psi1 && psi1 < psi2 && psi2 < 1.0)) throw Error(Errc::InvalidArgument, "need 0 < psi1 < psi2 < 1");
        if (!(0.0 < v_min && v_min < v_max)) throw Error(Errc::InvalidArgument, "need 0 < v_min < v_max");
        if (!(d_l.norm() > 0.0)) throw Error(Errc::ZeroVector, "loading direction must be nonzero");
    }
};

/// h(V) = (6V / pi)^(-1/6).
inline double size_scale(double v) { return std::pow(6.0 * v / pi, -1.0 / 6.0); }

/// psi(V) = psi1 + (h(V) - h(Vmin)) / (h(Vmax) - h(Vmin)) (psi2 - psi1).
inline double critical_propensity(double v, const TwinDecisionParams& p) {
    p.validate();
    if (v < p.v_min - 1e-12 || v > p.v_max + 1e-12)
        throw Error(Errc::OutOfRange, "cell volume " + std::to_string(v) + " outside [v_min, v_max]");
    v = std::clamp(v, p.v_min, p.v_max);
    const double hmin = size_scale(p.v_min), hmax = size_scale(p.v_max);
    const double ratio = (size_scale(v) - hmin) / (hmax - hmin);
    const double lo = p.hall_petch_orientation ? p.psi2 : p.psi1;
    const double hi = p.hall_petch_orientation ? p.psi1 : p.psi2;
    return lo + ratio * (hi - lo);
}

inline bool twin_decision(double psi, double psi_crit) { return psi >= psi_crit; }

enum class TwinStatus { Untwinned, Twinned, Overflow };

inline const char* twin_status_name(TwinStatus s) {
    switch (s) {
    case TwinStatus::Untwinned: return "untwinned";
    case TwinStatus::Twinned: return "twinned";
    case TwinStatus::Overflow: return "overflow";
    }
    return "?";
}

struct TwinState {
    double propensity = 0.0;
    std::size_t r_bar = 0;
    Vec3 n_vec = Vec3::UnitZ();
    double e_scalar = 0.0;
    double v_t = 0.0;
    double psi_crit = 0.0;
    Orientation reoriented;
    bool decision = false;
    TwinStatus status = TwinStatus::Untwinned;
};

/// Full per-cell evaluation. A positive decision whose volume fraction would
/// reach 1 is reported with status Overflow.
inline TwinState evaluate_twin(const Orientation& g, double volume, double epsilon_m, const TwinningSystem& sys,
                               const TwinDecisionParams& p) {
    TwinState s;
    const Vec3 d = unit(p.d_l);
    const Propensity pr = propensity(g, sys, d);
    s.propensity = pr.psi;
    s.r_bar = pr.r_bar;
    s.n_vec = twin_normal(g, sys, pr.r_bar);
    s.e_scalar = twin_strain(g, sys, pr.r_bar, d).e_scalar;
    s.reoriented = reorientation(sys, pr.r_bar, g);
    s.psi_crit = critical_propensity(volume, p);
    s.decision = twin_decision(s.propensity, s.psi_crit);
    if (s.decision) {
        try {
            s.v_t = twin_volume_fraction(epsilon_m, s.e_scalar);
            s.status = TwinStatus::Twinned;
        } catch (const Error& e) {
            if (e.code() != Errc::FractionOverflow) throw;
            s.status = TwinStatus::Overflow;
        }
    }
    return s;
}

} // namespace twinlab
