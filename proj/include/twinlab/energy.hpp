// Strain energy of mesh elements: per-element energy, volume-weighted
// totals, the split into lamella and matrix phases and a synthetic element
// generator standing in for finite-element output.
#pragma once

#include "twinlab/core.hpp"
#include "twinlab/lamellae.hpp"

#include <optional>
#include <string>
#include <vector>

namespace twinlab {

enum class ElementPhase { Matrix, Lamella, Straddling };

inline const char* element_phase_name(ElementPhase p) {
    switch (p) {
    case ElementPhase::Matrix: return "matrix";
    case ElementPhase::Lamella: return "lamella";
    case ElementPhase::Straddling: return "straddling";
    }
    return "?";
}

struct ElementRecord {
    std::size_t element_id = 0;
    Vec3 centroid = Vec3::Zero();
    double volume = 0.0;
    Mat3 stress = Mat3::Zero(); // MPa
    Mat3 strain = Mat3::Zero();
    ElementPhase phase = ElementPhase::Matrix;

    void validate() const {
        if (!(volume > 0.0)) throw Error(Errc::InvalidArgument, "element volume must be positive");
        if ((stress - stress.transpose()).cwiseAbs().maxCoeff() > 1e-9 ||
            (strain - strain.transpose()).cwiseAbs().maxCoeff() > 1e-9)
            throw Error(Errc::InvalidArgument, "element tensors must be symmetric");
    }
};

/// Pairwise summation, independent of thread layout.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 16) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

/// E = 1/2 sum_ij sigma_ij eps_ij.
inline double element_energy(const ElementRecord& r) { return 0.5 * r.stress.cwiseProduct(r.strain).sum(); }

/// sum_k E_k |e_k|.
inline double tsed(const std::vector<ElementRecord>& records) {
    if (records.empty()) throw Error(Errc::InvalidArgument, "no element records");
    std::vector<double> terms(records.size());
    for (std::size_t k = 0; k < records.size(); ++k) terms[k] = element_energy(records[k]) * records[k].volume;
    return pairwise_sum(terms);
}

struct TsedResult {
    double w_total = 0.0; // energy per unit volume over all elements
    std::optional<double> w_lamella;
    std::optional<double> w_matrix;
    double v_l = 0.0; // volume fractions of the phases
    double v_m = 0.0;
    double v_straddling = 0.0;
    std::size_t n_straddling = 0;

    double lamella() const {
        if (!w_lamella) throw Error(Errc::EmptyPhase, "no lamella elements");
        return *w_lamella;
    }
    double matrix() const {
        if (!w_matrix) throw Error(Errc::EmptyPhase, "no matrix elements");
        return *w_matrix;
    }
};

/// Volume-normalized energies of the whole sample and of each phase.
/// Straddling elements count towards the total only.
inline TsedResult phase_tsed(const std::vector<ElementRecord>& records) {
    if (records.empty()) throw Error(Errc::InvalidArgument, "no element records");
    std::vector<double> all, lam, mat, vol, vol_l, vol_m, vol_s;
    for (const auto& r : records) {
        const double e = element_energy(r) * r.volume;
        all.push_back(e);
        vol.push_back(r.volume);
        if (r.phase == ElementPhase::Lamella) {
            lam.push_back(e);
            vol_l.push_back(r.volume);
        } else if (r.phase == ElementPhase::Matrix) {
            mat.push_back(e);
            vol_m.push_back(r.volume);
        } else {
            vol_s.push_back(r.volume);
        }
    }
    TsedResult t;
    const double total = pairwise_sum(vol);
    t.w_total = pairwise_sum(all) / total;
    const double vl = pairwise_sum(vol_l), vm = pairwise_sum(vol_m);
    t.v_l = vl / total;
    t.v_m = vm / total;
    t.v_straddling = pairwise_sum(vol_s) / total;
    t.n_straddling = vol_s.size();
    if (vl > 0.0) t.w_lamella = pairwise_sum(lam) / vl;
    if (vm > 0.0) t.w_matrix = pairwise_sum(mat) / vm;
    return t;
}

/// Phase of the subcell containing the centroid. Elements whose bounding
/// sphere, radius 2 (3|e| / 4 pi)^(1/3), reaches a subcell of the other
/// phase are straddling.
inline ElementPhase classify_phase(const ElementRecord& r, const NestedTessellation& n) {
    if (!n.window.contains(r.centroid, 1e-9))
        throw Error(Errc::OutsideDomain, "element " + std::to_string(r.element_id) + " lies outside the window");
    const double radius = 2.0 * std::cbrt(3.0 * r.volume / (4.0 * pi));
    std::size_t best = n.subcells.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n.subcells.size(); ++k) {
        const double d = n.subcells[k].polytope.plane_distance(r.centroid);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    if (best == n.subcells.size()) throw Error(Errc::OutsideDomain, "no subcell contains the element");
    const Phase own = n.subcells[best].phase;
    for (const Subcell& s : n.subcells) {
        if (s.phase == own) continue;
        const Box bb = s.polytope.bounding_box();
        const Vec3 gap = (bb.lo - r.centroid).cwiseMax(r.centroid - bb.hi).cwiseMax(0.0);
        if (gap.norm() >= radius) continue;
        if (s.polytope.plane_distance(r.centroid) < radius) return ElementPhase::Straddling;
    }
    return own == Phase::Lamella ? ElementPhase::Lamella : ElementPhase::Matrix;
}

//---------------------------------------------------------------------------//
// Synthetic elements
//---------------------------------------------------------------------------//

struct SynthParams {
    double density = 50000.0; // elements per unit volume
    double lamella_scale = 2.0;
    double matrix_scale = 1.0;
    double noise = 0.0; // relative Gaussian noise on the stress
    double strain = 0.01;
    Vec3 loading = Vec3::UnitZ();
};

/// Uniform points in every subcell, each carrying an equal share of the
/// subcell volume and a uniaxial field with energy density equal to the
/// phase scale. Synthetic data, not a mechanical solution.
inline std::vector<ElementRecord> synthesize_elements(const NestedTessellation& n, const SynthParams& p, Rng& rng) {
    if (!(p.density > 0.0) || !(p.strain != 0.0)) throw Error(Errc::InvalidArgument, "invalid synthesis parameters");
    const Vec3 d = unit(p.loading);
    const Mat3 dd = d * d.transpose();
    std::vector<ElementRecord> out;
    for (const Subcell& s : n.subcells) {
        if (s.polytope.empty() || !(s.volume > 0.0)) continue;
        const std::size_t k = std::max<std::size_t>(1, std::size_t(std::llround(p.density * s.volume)));
        const Box bb = s.polytope.bounding_box();
        const double scale = s.phase == Phase::Lamella ? p.lamella_scale : p.matrix_scale;
        std::size_t placed = 0;
        for (std::size_t tries = 0; placed < k; ++tries) {
            Vec3 x;
            for (int a = 0; a < 3; ++a) x[a] = uniform(rng, bb.lo[a], bb.hi[a]);
            if (tries > 1000 * k) x = s.polytope.centroid(); // sliver subcells
            else if (!s.polytope.contains(x)) continue;
            ElementRecord r;
            r.element_id = out.size();
            r.centroid = x;
            r.volume = s.volume / double(k);
            r.strain = p.strain * dd;
            const double sigma = 2.0 * scale / p.strain * (1.0 + p.noise * standard_normal(rng));
            r.stress = sigma * dd;
            r.phase = s.phase == Phase::Lamella ? ElementPhase::Lamella : ElementPhase::Matrix;
            out.push_back(r);
            ++placed;
        }
    }
    return out;
}

} // namespace twinlab
