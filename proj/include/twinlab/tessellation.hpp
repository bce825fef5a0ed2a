// Laguerre (power) tessellations of a box: generator sampling, volume
// targets, cell construction by radical-plane clipping and weight fitting.
#pragma once

#include "twinlab/core.hpp"
#include "twinlab/polytope.hpp"

#include <Eigen/SparseCholesky>

#include <numeric>
#include <optional>
#include <vector>

namespace twinlab {

struct WeightedGenerator {
    Vec3 x = Vec3::Zero();
    double w = 0.0;
};

struct VolumeTargets {
    std::vector<double> values;

    void validate(double domain_volume) const {
        if (values.empty()) throw Error(Errc::InvalidArgument, "no volume targets");
        double s = 0.0;
        for (double v : values) {
            if (!(v > 0.0)) throw Error(Errc::InvalidArgument, "volume targets must be positive");
            s += v;
        }
        if (std::abs(s - domain_volume) > 1e-9 * domain_volume)
            throw Error(Errc::InvalidArgument, "volume targets do not sum to the domain volume");
    }
};

/// Cell i belongs to generator i; cells that vanish are stored as empty
/// polytopes so indices stay aligned with the generators.
struct LaguerreTessellation {
    Box domain;
    std::vector<WeightedGenerator> generators;
    std::vector<ConvexPolytope> cells;
    std::vector<double> volumes;
    std::vector<std::vector<std::size_t>> adjacency;
    // Shared face area per adjacency entry (same layout as adjacency).
    std::vector<std::vector<double>> face_areas;

    std::size_t size() const { return cells.size(); }

    std::vector<std::size_t> nonempty_cells() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (!cells[i].empty()) out.push_back(i);
        return out;
    }
};

//---------------------------------------------------------------------------//
// Sampling
//---------------------------------------------------------------------------//

/// Homogeneous Poisson process; the intensity is the mean count per unit volume.
inline std::vector<Vec3> poisson_generators(double intensity, const Box& domain, Rng& rng) {
    if (!(intensity > 0.0)) throw Error(Errc::InvalidArgument, "intensity must be positive");
    if (!domain.nonempty()) throw Error(Errc::InvalidArgument, "domain is empty");
    const long n = poisson(rng, intensity * domain.volume());
    std::vector<Vec3> pts;
    pts.reserve(std::size_t(n));
    for (long i = 0; i < n; ++i) {
        Vec3 x;
        for (int a = 0; a < 3; ++a) x[a] = uniform(rng, domain.lo[a], domain.hi[a]);
        pts.push_back(x);
    }
    return pts;
}

/// Volume-equivalent diameters from a Gaussian truncated to (0, inf),
/// converted to sphere volumes and rescaled to fill the domain.
inline VolumeTargets gaussian_volume_targets(std::size_t n, double mu, double sigma, double domain_volume,
                                             Rng& rng, std::vector<double>* diameters = nullptr) {
    if (n < 2) throw Error(Errc::InvalidArgument, "need at least two volume targets");
    if (!(mu > 0.0) || !(sigma > 0.0) || !(domain_volume > 0.0))
        throw Error(Errc::InvalidArgument, "mu, sigma and domain volume must be positive");
    std::vector<double> d(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
        do d[i] = mu + sigma * standard_normal(rng);
        while (!(d[i] > 0.0));
        x[i] = pi * d[i] * d[i] * d[i] / 6.0;
    }
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    VolumeTargets t;
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.values[i] = domain_volume * x[i] / total;
    if (diameters) *diameters = std::move(d);
    return t;
}

/// Lognormal volumes exp(sigma Z), rescaled to fill the domain.
inline VolumeTargets lognormal_volume_targets(std::size_t n, double sigma, double domain_volume, Rng& rng) {
    if (n < 2) throw Error(Errc::InvalidArgument, "need at least two volume targets");
    if (!(sigma > 0.0) || !(domain_volume > 0.0))
        throw Error(Errc::InvalidArgument, "sigma and domain volume must be positive");
    std::vector<double> x(n);
    for (auto& v : x) v = std::exp(sigma * standard_normal(rng));
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    VolumeTargets t;
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.values[i] = domain_volume * x[i] / total;
    return t;
}

//---------------------------------------------------------------------------//
// Construction
//---------------------------------------------------------------------------//

inline void check_distinct(const std::vector<WeightedGenerator>& g, double tol = 1e-12) {
    std::vector<std::size_t> order(g.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g[a].x.x() < g[b].x.x(); });
    for (std::size_t a = 0; a < order.size(); ++a)
        for (std::size_t b = a + 1; b < order.size() && g[order[b]].x.x() - g[order[a]].x.x() <= tol; ++b)
            if ((g[order[a]].x - g[order[b]].x).norm() <= tol)
                throw Error(Errc::DuplicateGenerators, "generators " + std::to_string(order[a]) + " and " +
                                                           std::to_string(order[b]) + " coincide");
}

/// Radical-plane halfspace of generator i against j: points whose power
/// distance to i does not exceed that to j.
inline Halfspace radical_halfspace(const WeightedGenerator& gi, const WeightedGenerator& gj, int tag) {
    const Vec3 diff = gj.x - gi.x;
    const double d = diff.norm();
    const Vec3 n = diff / d;
    const double h = (d * d + gi.w - gj.w) / (2.0 * d);
    return {n, n.dot(gi.x) + h, tag};
}

namespace detail {

inline ConvexPolytope laguerre_cell(const std::vector<WeightedGenerator>& g, std::size_t i, const Box& domain) {
    struct Cand {
        double h;
        std::size_t j;
    };
    std::vector<Cand> cand;
    cand.reserve(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
        if (j == i) continue;
        const double d = (g[j].x - g[i].x).norm();
        cand.push_back({(d * d + g[i].w - g[j].w) / (2.0 * d), j});
    }
    std::sort(cand.begin(), cand.end(), [](const Cand& a, const Cand& b) { return a.h < b.h || (a.h == b.h && a.j < b.j); });
    ConvexPolytope cell = ConvexPolytope::from_box(domain);
    const auto reach = [&] {
        double r = 0.0;
        for (const Vec3& v : cell.vertices()) r = std::max(r, (v - g[i].x).norm());
        return r;
    };
    double r = reach();
    for (const Cand& c : cand) {
        // A plane at distance h from x_i cannot cut a cell contained in the ball of radius r.
        if (c.h >= r) break;
        cell = cell.clipped(radical_halfspace(g[i], g[c.j], int(c.j)));
        if (cell.empty()) break;
        r = reach();
    }
    return cell;
}

} // namespace detail

inline LaguerreTessellation build_laguerre(const std::vector<WeightedGenerator>& generators, const Box& domain) {
    if (generators.size() < 2) throw Error(Errc::InvalidArgument, "need at least two generators");
    if (!domain.nonempty()) throw Error(Errc::InvalidArgument, "domain is empty");
    check_distinct(generators);
    const std::size_t n = generators.size();
    LaguerreTessellation t;
    t.domain = domain;
    t.generators = generators;
    t.cells.resize(n);
    t.volumes.assign(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        t.cells[i] = detail::laguerre_cell(generators, i, domain);
        t.volumes[i] = t.cells[i].empty() ? 0.0 : t.cells[i].volume();
    });

    // Shared-face areas, symmetrized (each side sees the same face up to rounding).
    std::vector<std::vector<std::pair<std::size_t, double>>> faces(n);
    for (std::size_t i = 0; i < n; ++i)
        for (const Face& f : t.cells[i].faces())
            if (f.tag >= 0) faces[i].emplace_back(std::size_t(f.tag), t.cells[i].face_area(f));
    std::vector<std::vector<std::pair<std::size_t, double>>> merged(n);
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& [j, a] : faces[i]) {
            merged[i].emplace_back(j, a);
            merged[j].emplace_back(i, a);
        }
    t.adjacency.resize(n);
    t.face_areas.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& m = merged[i];
        std::sort(m.begin(), m.end());
        for (std::size_t k = 0; k < m.size();) {
            std::size_t e = k;
            double amax = 0.0;
            while (e < m.size() && m[e].first == m[k].first) amax = std::max(amax, m[e++].second);
            if (amax > 1e-10) {
                t.adjacency[i].push_back(m[k].first);
                t.face_areas[i].push_back(amax);
            }
            k = e;
        }
    }
    return t;
}

inline LaguerreTessellation build_laguerre(const std::vector<Vec3>& points, const std::vector<double>& weights,
                                           const Box& domain) {
    if (points.size() != weights.size()) throw Error(Errc::InvalidArgument, "points and weights differ in length");
    std::vector<WeightedGenerator> g(points.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = {points[i], weights[i]};
    return build_laguerre(g, domain);
}

//---------------------------------------------------------------------------//
// Weight fitting
//---------------------------------------------------------------------------//

struct FitOptions {
    int max_iterations = 500;
};

struct FitReport {
    int iterations = 0;
    double max_relative_error = 0.0;
};

inline double max_relative_error(const std::vector<double>& volumes, const std::vector<double>& targets) {
    double e = 0.0;
    for (std::size_t i = 0; i < volumes.size(); ++i) e = std::max(e, std::abs(volumes[i] - targets[i]) / targets[i]);
    return e;
}

/// Damped Newton iteration on the concave dual. The Jacobian of the cell
/// volumes with respect to the weights is the weighted graph Laplacian with
/// off-diagonal entries -A_ij / (2 |x_i - x_j|).
inline std::vector<double> fit_weights(const std::vector<Vec3>& points, const VolumeTargets& targets, const Box& domain,
                                       double tol, const FitOptions& opt = {}, FitReport* report = nullptr,
                                       LaguerreTessellation* result = nullptr) {
    const std::size_t n = points.size();
    if (targets.values.size() != n) throw Error(Errc::InvalidArgument, "one target per generator required");
    targets.validate(domain.volume());
    if (!(tol > 0.0) || tol > 0.1) throw Error(Errc::InvalidArgument, "tolerance must lie in (0, 0.1]");
    const std::vector<double>& tv = targets.values;

    std::vector<double> w(n, 0.0);
    LaguerreTessellation t = build_laguerre(points, w, domain);
    const auto residual_norm = [&](const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += (tv[i] - v[i]) * (tv[i] - v[i]);
        return std::sqrt(s);
    };
    double floor_volume = *std::min_element(tv.begin(), tv.end());
    for (double v : t.volumes) floor_volume = std::min(floor_volume, v);
    floor_volume *= 0.5;

    int it = 0;
    double err = max_relative_error(t.volumes, tv);
    for (; err > tol && it < opt.max_iterations; ++it) {
        // Reduced system with w_0 fixed; the Laplacian of a connected graph is then positive definite.
        std::vector<Eigen::Triplet<double>> trip;
        Eigen::VectorXd rhs(Eigen::Index(n - 1));
        std::vector<double> diag(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < t.adjacency[i].size(); ++k) {
                const std::size_t j = t.adjacency[i][k];
                const double c = t.face_areas[i][k] / (2.0 * (points[i] - points[j]).norm());
                diag[i] += c;
                if (i > 0 && j > 0) trip.emplace_back(int(i - 1), int(j - 1), -c);
            }
        double scale = 0.0;
        for (double d : diag) scale = std::max(scale, d);
        for (std::size_t i = 1; i < n; ++i) {
            trip.emplace_back(int(i - 1), int(i - 1), diag[i] + 1e-12 * scale);
            rhs[Eigen::Index(i - 1)] = tv[i] - t.volumes[i];
        }
        Eigen::SparseMatrix<double> lap(Eigen::Index(n - 1), Eigen::Index(n - 1));
        lap.setFromTriplets(trip.begin(), trip.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(lap);
        if (solver.info() != Eigen::Success)
            throw Error(Errc::NonConvergence, "weight update system is singular; worst relative volume error " +
                                                  std::to_string(err));
        const Eigen::VectorXd step = solver.solve(rhs);

        const double g0 = residual_norm(t.volumes);
        double alpha = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 30; ++halving, alpha *= 0.5) {
            std::vector<double> trial = w;
            for (std::size_t i = 1; i < n; ++i) trial[i] += alpha * step[Eigen::Index(i - 1)];
            LaguerreTessellation cand = build_laguerre(points, trial, domain);
            const double vmin = *std::min_element(cand.volumes.begin(), cand.volumes.end());
            if (vmin >= floor_volume && residual_norm(cand.volumes) <= (1.0 - 0.5 * alpha) * g0) {
                w = std::move(trial);
                t = std::move(cand);
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        err = max_relative_error(t.volumes, tv);
    }
    if (report) *report = {it, err};
    if (err > tol)
        throw Error(Errc::NonConvergence,
                    "weight fit stopped after " + std::to_string(it) + " iterations; worst relative volume error " +
                        std::to_string(err));
    const double wmin = *std::min_element(w.begin(), w.end());
    for (double& x : w) x -= wmin;
    if (result) {
        *result = build_laguerre(points, w, domain);
        if (report) report->max_relative_error = max_relative_error(result->volumes, tv);
    }
    return w;
}

//---------------------------------------------------------------------------//
// Sampling windows
//---------------------------------------------------------------------------//

struct PlusSample {
    std::vector<std::size_t> cells;
    // Selected cells that reach the boundary of the domain.
    std::vector<std::size_t> violations;
};

inline bool touches_boundary(const ConvexPolytope& p, const Box& domain, double eps = 1e-9) {
    for (const Vec3& v : p.vertices())
        if (domain.boundary_distance(v) <= eps) return true;
    return false;
}

inline bool hits_window(const ConvexPolytope& p, const Box& window) {
    if (p.empty()) return false;
    const Box bb = p.bounding_box();
    if ((bb.hi.array() <= window.lo.array()).any() || (bb.lo.array() >= window.hi.array()).any()) return false;
    const ConvexPolytope c = clip_to_box(p, window);
    return !c.empty() && c.volume() > 0.0;
}

inline PlusSample plus_sample(const LaguerreTessellation& t, const Box& window) {
    if (!t.domain.contains(window, 1e-12)) throw Error(Errc::InvalidArgument, "window must lie inside the domain");
    PlusSample s;
    for (std::size_t i = 0; i < t.cells.size(); ++i) {
        if (!hits_window(t.cells[i], window)) continue;
        s.cells.push_back(i);
        if (touches_boundary(t.cells[i], t.domain)) s.violations.push_back(i);
    }
    return s;
}

/// Nonempty cells with every vertex farther than 1e-9 from the domain boundary.
inline std::vector<std::size_t> inner_cells(const LaguerreTessellation& t) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < t.cells.size(); ++i)
        if (!t.cells[i].empty() && !touches_boundary(t.cells[i], t.domain)) out.push_back(i);
    return out;
}

} // namespace twinlab
