// Twin lamellae inside a cell: slabs orthogonal to the twin normal, placed
// by random sequential adsorption and grown to a target volume fraction, or
// found by simulated annealing. Also assembles the nested tessellation.
#pragma once

#include "twinlab/core.hpp"
#include "twinlab/orientation.hpp"
#include "twinlab/polytope.hpp"
#include "twinlab/tessellation.hpp"
#include "twinlab/twinning.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace twinlab {

struct LamellaParams {
    int l_max = 3;
    double xi = 0.05;
    double gamma = 0.05;
    double zeta1 = 0.05;
    double zeta2 = 0.5;
    std::vector<double> theta{1.0, 1.2, 1.2};
    double poisson_lambda = 1.0;
    int grid_points = 200;
    int max_retries = 50;
    int rsa_attempts = 1000;
    double volume_tol = 1e-3; // relative to V_t |C|
    int anneal_iterations = 10000;
    double anneal_cooling = 0.995;
    double anneal_stop = 1e-4; // relative H at which annealing stops early

    void validate() const {
        if (l_max < 1) throw Error(Errc::InvalidArgument, "l_max must be at least 1");
        if (!(xi > 0 && xi < 1) || !(gamma > 0 && gamma < 1))
            throw Error(Errc::InvalidArgument, "xi and gamma must lie in (0, 1)");
        if (!(0 < zeta1 && zeta1 < zeta2 && zeta2 <= 0.5))
            throw Error(Errc::InvalidArgument, "need 0 < zeta1 < zeta2 <= 0.5");
        if (theta.size() < std::size_t(l_max)) throw Error(Errc::InvalidArgument, "theta shorter than l_max");
        for (double t : theta)
            if (!(t >= 1.0 && t < 2.0)) throw Error(Errc::InvalidArgument, "growth rates must lie in [1, 2)");
        if (!(poisson_lambda >= 0)) throw Error(Errc::InvalidArgument, "poisson_lambda must be nonnegative");
        if (grid_points < 2 || max_retries < 1 || rsa_attempts < 1 || anneal_iterations < 0)
            throw Error(Errc::InvalidArgument, "iteration budgets must be positive");
        if (!(volume_tol > 0)) throw Error(Errc::InvalidArgument, "volume_tol must be positive");
    }
};

struct Lamella {
    double d = 0.0;
    double w = 0.0;
    ConvexPolytope polytope;
    double volume = 0.0;
};

enum class LamellaMethod { Growth, Annealing };

struct LamellarSystem {
    std::size_t cell_id = 0;
    Vec3 direction = Vec3::UnitZ();
    FeretInterval feret;
    std::vector<Lamella> lamellae;
    double target_fraction = 0.0;
    double achieved_fraction = 0.0;
    int attempts = 0;
    LamellaMethod method = LamellaMethod::Growth;

    std::size_t size() const { return lamellae.size(); }
};

//---------------------------------------------------------------------------//
// Counts and centers
//---------------------------------------------------------------------------//

/// m = M + 1 with M ~ Poisson(lambda) truncated to {0, ..., l_max - 1}.
inline int sample_count(const LamellaParams& p, Rng& rng) {
    if (p.l_max == 1 || p.poisson_lambda == 0.0) return 1;
    std::vector<double> weights;
    double term = 1.0;
    for (int k = 0; k < p.l_max; ++k) {
        weights.push_back(term);
        term *= p.poisson_lambda / (k + 1);
    }
    std::discrete_distribution<int> dist(weights.begin(), weights.end());
    return dist(rng) + 1;
}

/// Sorted centers in (alpha + (xi + zeta1) rho, beta - (xi + zeta1) rho) with
/// hard-core distance (gamma + 2 zeta1) rho.
inline std::vector<double> rsa_centers(int m, const FeretInterval& f, const LamellaParams& p, Rng& rng) {
    if (m < 1) throw Error(Errc::InvalidArgument, "need at least one center");
    const double lo = f.alpha + (p.xi + p.zeta1) * f.rho;
    const double hi = f.beta - (p.xi + p.zeta1) * f.rho;
    const double excl = (p.gamma + 2.0 * p.zeta1) * f.rho;
    if (!(hi > lo) || (m - 1) * excl >= hi - lo)
        throw Error(Errc::Infeasible, "interval too short for " + std::to_string(m) + " centers");
    std::vector<double> c;
    for (int a = 0; a < p.rsa_attempts && int(c.size()) < m; ++a) {
        const double x = uniform(rng, lo, hi);
        bool ok = true;
        for (double y : c)
            if (std::abs(x - y) < excl) {
                ok = false;
                break;
            }
        if (ok) c.push_back(x);
    }
    if (int(c.size()) < m)
        throw Error(Errc::Infeasible, "placed " + std::to_string(c.size()) + " of " + std::to_string(m) + " centers");
    std::sort(c.begin(), c.end());
    return c;
}

/// Largest common width factor keeping the end margins and gaps:
/// min((d1 - alpha - xi rho)/theta1, (beta - xi rho - dm)/thetam,
///     min_j (d_{j+1} - d_j - gamma rho)/(theta_j + theta_{j+1})).
inline double delta_w(const std::vector<double>& centers, const std::vector<double>& theta, const FeretInterval& f,
                      const LamellaParams& p) {
    const std::size_t m = centers.size();
    if (m == 0 || theta.size() < m) throw Error(Errc::InvalidArgument, "centers and theta differ in length");
    double d = std::min((centers.front() - f.alpha - p.xi * f.rho) / theta.front(),
                        (f.beta - p.xi * f.rho - centers.back()) / theta[m - 1]);
    for (std::size_t j = 0; j + 1 < m; ++j)
        d = std::min(d, (centers[j + 1] - centers[j] - p.gamma * f.rho) / (theta[j] + theta[j + 1]));
    return d;
}

/// Total volume of the slabs [d_j - theta_j w, d_j + theta_j w].
inline double upsilon(const VolumeProfile& v, const std::vector<double>& centers, const std::vector<double>& theta,
                      double w) {
    double s = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) s += v.slab(centers[j] - theta[j] * w, centers[j] + theta[j] * w);
    return s;
}

inline double upsilon(const ConvexPolytope& cell, const FeretInterval& f, const std::vector<double>& centers,
                      const std::vector<double>& theta, double w) {
    double s = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j)
        s += volume_function(cell, f, centers[j] + theta[j] * w) - volume_function(cell, f, centers[j] - theta[j] * w);
    return s;
}

namespace detail {

inline LamellarSystem make_system(std::size_t cell_id, const ConvexPolytope& cell, const FeretInterval& f,
                                  const std::vector<double>& d, const std::vector<double>& w, double v_t) {
    LamellarSystem s;
    s.cell_id = cell_id;
    s.direction = f.direction;
    s.feret = f;
    s.target_fraction = v_t;
    double total = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        Lamella l;
        l.d = d[j];
        l.w = w[j];
        l.polytope = clip_slab(cell, f, d[j] - w[j], d[j] + w[j]);
        l.volume = l.polytope.empty() ? 0.0 : l.polytope.volume();
        total += l.volume;
        s.lamellae.push_back(std::move(l));
    }
    s.achieved_fraction = total / cell.volume();
    return s;
}

/// Conditions (i)-(iii) for explicit centers and semi-widths.
inline bool in_state_space(const std::vector<double>& d, const std::vector<double>& w, const FeretInterval& f,
                           const LamellaParams& p) {
    const double rho = f.rho;
    for (std::size_t j = 0; j < d.size(); ++j) {
        if (!(w[j] > p.zeta1 * rho && w[j] < p.zeta2 * rho)) return false;
        if (j + 1 < d.size() && !(d[j + 1] - w[j + 1] - (d[j] + w[j]) >= p.gamma * rho)) return false;
    }
    return d.front() - w.front() - f.alpha >= p.xi * rho && f.beta - (d.back() + w.back()) >= p.xi * rho;
}

} // namespace detail

//---------------------------------------------------------------------------//
// Lamellar growth
//---------------------------------------------------------------------------//

/// Resample (m, centers) until Upsilon(w) = V_t |C| has a root on
/// I = (zeta1 rho, min(delta_w, zeta2 rho / theta_max)); the root is located
/// by a grid search followed by bisection.
inline LamellarSystem grow_lamellae(std::size_t cell_id, const ConvexPolytope& cell, const Vec3& n_vec, double v_t,
                                    const LamellaParams& p, Rng& rng) {
    p.validate();
    if (cell.empty()) throw Error(Errc::InvalidArgument, "cannot grow lamellae in an empty cell");
    if (!(v_t > 0.0 && v_t < 1.0)) throw Error(Errc::InvalidArgument, "volume fraction must lie in (0, 1)");
    const FeretInterval f = feret_interval(cell, n_vec);
    const VolumeProfile prof(cell, f);
    const double target = v_t * prof.total();
    const double tol = p.volume_tol * target;
    const double nudge = 1e-9 * f.rho;

    for (int attempt = 1; attempt <= p.max_retries; ++attempt) {
        const int m = sample_count(p, rng);
        std::vector<double> centers;
        try {
            centers = rsa_centers(m, f, p, rng);
        } catch (const Error& e) {
            if (e.code() != Errc::Infeasible) throw;
            continue;
        }
        const std::vector<double> theta(p.theta.begin(), p.theta.begin() + m);
        const double theta_max = *std::max_element(theta.begin(), theta.end());
        const double wlo = p.zeta1 * f.rho + nudge;
        const double whi = std::min(delta_w(centers, theta, f, p), p.zeta2 * f.rho / theta_max) - nudge;
        if (!(whi > wlo)) continue;
        const auto ups = [&](double w) { return upsilon(prof, centers, theta, w); };
        if (ups(wlo) > target + tol || ups(whi) < target - tol) continue;

        double a = wlo, b = whi;
        if (ups(whi) < target) {
            a = b = whi;
        } else if (ups(wlo) > target) {
            a = b = wlo;
        } else {
            double prev = wlo;
            for (int k = 1; k < p.grid_points; ++k) {
                const double x = wlo + (whi - wlo) * k / (p.grid_points - 1);
                if (ups(x) >= target) {
                    a = prev;
                    b = x;
                    break;
                }
                prev = x;
            }
            for (int it = 0; it < 200 && b - a > 1e-15 * f.rho; ++it) {
                const double mid = 0.5 * (a + b);
                (ups(mid) < target ? a : b) = mid;
            }
        }
        const double w0 = std::abs(ups(a) - target) <= std::abs(ups(b) - target) ? a : b;
        std::vector<double> widths(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) widths[std::size_t(j)] = theta[std::size_t(j)] * w0;
        if (!detail::in_state_space(centers, widths, f, p)) continue;
        LamellarSystem s = detail::make_system(cell_id, cell, f, centers, widths, v_t);
        if (std::abs(s.achieved_fraction - v_t) * prof.total() > tol) continue;
        s.attempts = attempt;
        s.method = LamellaMethod::Growth;
        return s;
    }
    throw Error(Errc::Unresolvable, "cell " + std::to_string(cell_id) + ": no lamellar system after " +
                                        std::to_string(p.max_retries) + " attempts");
}

//---------------------------------------------------------------------------//
// Simulated annealing
//---------------------------------------------------------------------------//

struct AnnealStart {
    std::vector<double> d;
    std::vector<double> w;
};

/// Minimizes H = |sum |L(d_j, w_j)| - V_t |C|| over states satisfying
/// conditions (i)-(iii), moving one (d_j, w_j) pair per step with geometric
/// cooling T_k = T_0 c^k, T_0 = V_t |C|.
inline LamellarSystem anneal_lamellae(std::size_t cell_id, const ConvexPolytope& cell, const Vec3& n_vec, double v_t,
                                      const LamellaParams& p, Rng& rng,
                                      const std::optional<AnnealStart>& start = std::nullopt) {
    p.validate();
    if (cell.empty()) throw Error(Errc::InvalidArgument, "cannot place lamellae in an empty cell");
    if (!(v_t > 0.0 && v_t < 1.0)) throw Error(Errc::InvalidArgument, "volume fraction must lie in (0, 1)");
    const FeretInterval f = feret_interval(cell, n_vec);
    const VolumeProfile prof(cell, f);
    const double target = v_t * prof.total();
    const double rho = f.rho;
    const auto energy = [&](const std::vector<double>& d, const std::vector<double>& w) {
        double s = 0.0;
        for (std::size_t j = 0; j < d.size(); ++j) s += prof.slab(d[j] - w[j], d[j] + w[j]);
        return std::abs(s - target);
    };

    for (int attempt = 1; attempt <= p.max_retries; ++attempt) {
        std::vector<double> d, w;
        if (start && attempt == 1) {
            d = start->d;
            w = start->w;
        } else {
            const int m = sample_count(p, rng);
            try {
                d = rsa_centers(m, f, p, rng);
            } catch (const Error& e) {
                if (e.code() != Errc::Infeasible) throw;
                continue;
            }
            w.assign(d.size(), (p.zeta1 + 1e-6) * rho);
        }
        if (d.empty() || d.size() != w.size() || !detail::in_state_space(d, w, f, p)) continue;

        double h = energy(d, w);
        double temp = target;
        for (int k = 0; k < p.anneal_iterations && h > p.anneal_stop * target; ++k, temp *= p.anneal_cooling) {
            const std::size_t j = std::size_t(uniform01(rng) * double(d.size()));
            // Step sizes follow the current error; the slab volume changes by roughly 2 A dw.
            const double rel = h / target;
            const double sw = rho * std::max(0.5 * v_t * rel / double(d.size()), 1e-9);
            const double sd = rho * std::max(0.02 * std::sqrt(temp / target), 1e-9);
            std::vector<double> d2 = d, w2 = w;
            w2[j] += sw * standard_normal(rng);
            if (uniform01(rng) < 0.5) d2[j] += sd * standard_normal(rng);
            if (!detail::in_state_space(d2, w2, f, p)) continue;
            const double h2 = energy(d2, w2);
            if (h2 <= h || uniform01(rng) < std::exp(-(h2 - h) / temp)) {
                d = std::move(d2);
                w = std::move(w2);
                h = h2;
            }
        }
        LamellarSystem s = detail::make_system(cell_id, cell, f, d, w, v_t);
        if (std::abs(s.achieved_fraction - v_t) * prof.total() > p.volume_tol * target) continue;
        s.attempts = attempt;
        s.method = LamellaMethod::Annealing;
        return s;
    }
    throw Error(Errc::Unresolvable, "cell " + std::to_string(cell_id) + ": annealing did not reach the target volume");
}

//---------------------------------------------------------------------------//
// Audit
//---------------------------------------------------------------------------//

struct LamellaAudit {
    std::vector<std::string> violations; // conditions (i)-(iii)
    double volume_error = 0.0;           // relative to V_t |C|, condition (iv)
    bool ok(double volume_tol) const { return violations.empty() && volume_error <= volume_tol; }
};

/// Re-derives the Feret interval and slab volumes from the cell itself.
inline LamellaAudit audit_lamellar_system(const LamellarSystem& s, const ConvexPolytope& cell, const LamellaParams& p) {
    LamellaAudit a;
    const FeretInterval f = feret_interval(cell, s.direction);
    const double rho = f.rho;
    const auto& l = s.lamellae;
    if (l.empty()) a.violations.push_back("no lamellae");
    if (int(l.size()) > p.l_max) a.violations.push_back("more than l_max lamellae");
    double total = 0.0;
    for (std::size_t j = 0; j < l.size(); ++j) {
        const std::string tag = "lamella " + std::to_string(j) + ": ";
        if (!(l[j].w > p.zeta1 * rho)) a.violations.push_back(tag + "semi-width below zeta1 rho");
        if (!(l[j].w < p.zeta2 * rho)) a.violations.push_back(tag + "semi-width above zeta2 rho");
        if (j + 1 < l.size() && !(l[j + 1].d > l[j].d)) a.violations.push_back(tag + "centers not increasing");
        if (j + 1 < l.size() && !(l[j + 1].d - l[j + 1].w - (l[j].d + l[j].w) >= p.gamma * rho * (1 - 1e-12)))
            a.violations.push_back(tag + "gap below gamma rho");
        const ConvexPolytope slab = cell.clipped(f.below(l[j].d + l[j].w)).clipped(f.above(l[j].d - l[j].w));
        total += slab.empty() ? 0.0 : slab.volume();
    }
    if (!l.empty()) {
        if (!(l.front().d - l.front().w - f.alpha >= p.xi * rho * (1 - 1e-12)))
            a.violations.push_back("lower end margin below xi rho");
        if (!(f.beta - l.back().d - l.back().w >= p.xi * rho * (1 - 1e-12)))
            a.violations.push_back("upper end margin below xi rho");
    }
    const double target = s.target_fraction * cell.volume();
    a.volume_error = std::abs(total - target) / target;
    return a;
}

//---------------------------------------------------------------------------//
// Nested tessellation
//---------------------------------------------------------------------------//

enum class Phase { Matrix, Lamella };

inline const char* phase_name(Phase p) { return p == Phase::Lamella ? "lamella" : "matrix"; }

struct Subcell {
    std::size_t cell_id = 0;
    Phase phase = Phase::Matrix;
    int lamella_index = -1; // position within the cell's lamellar system
    ConvexPolytope polytope;
    double volume = 0.0;
    Orientation mark;
};

struct NestedTessellation {
    std::shared_ptr<const LaguerreTessellation> mother;
    std::map<std::size_t, LamellarSystem> systems;
    std::vector<Subcell> subcells;
    Box window; // region covered by the subcells

    double total_volume() const {
        double s = 0.0;
        for (const auto& c : subcells) s += c.volume;
        return s;
    }
};

/// Splits each twinned mother cell into its lamellae (mark R_t G) and the
/// interlamellar pieces (mark G); other nonempty cells stay whole.
inline NestedTessellation build_nested(std::shared_ptr<const LaguerreTessellation> t,
                                       const std::vector<Orientation>& marks, const std::vector<TwinState>& states,
                                       std::map<std::size_t, LamellarSystem> systems) {
    if (!t) throw Error(Errc::InvalidArgument, "no mother tessellation");
    if (marks.size() != t->size() || states.size() != t->size())
        throw Error(Errc::InvalidArgument, "one mark and twin state per mother cell required");
    NestedTessellation n;
    n.mother = t;
    n.window = t->domain;
    for (std::size_t i = 0; i < t->size(); ++i) {
        const ConvexPolytope& cell = t->cells[i];
        if (cell.empty()) continue;
        const auto it = systems.find(i);
        if (it == systems.end()) {
            n.subcells.push_back({i, Phase::Matrix, -1, cell, t->volumes[i], marks[i]});
            continue;
        }
        if (!states[i].decision) throw Error(Errc::InvalidArgument, "lamellar system for untwinned cell " + std::to_string(i));
        const LamellarSystem& s = it->second;
        const FeretInterval& f = s.feret;
        const Orientation twin = states[i].reoriented;
        double lo = f.alpha, sum = 0.0;
        const auto add_matrix = [&](double a, double b) {
            if (!(b > a)) return;
            ConvexPolytope piece = clip_slab(cell, f, std::max(a, f.alpha), std::min(b, f.beta));
            if (piece.empty()) return;
            const double v = piece.volume();
            if (!(v > 0.0)) return;
            sum += v;
            n.subcells.push_back({i, Phase::Matrix, -1, std::move(piece), v, marks[i]});
        };
        for (std::size_t j = 0; j < s.lamellae.size(); ++j) {
            const Lamella& l = s.lamellae[j];
            add_matrix(lo, l.d - l.w);
            sum += l.volume;
            n.subcells.push_back({i, Phase::Lamella, int(j), l.polytope, l.volume, twin});
            lo = l.d + l.w;
        }
        add_matrix(lo, f.beta);
        if (std::abs(sum - t->volumes[i]) > 1e-6 * t->volumes[i])
            throw Error(Errc::VolumeMismatch, "cell " + std::to_string(i) + ": subcells sum to " +
                                                  std::to_string(sum) + " of " + std::to_string(t->volumes[i]));
    }
    n.systems = std::move(systems);
    return n;
}

inline NestedTessellation clip_to_window(const NestedTessellation& n, const Box& window) {
    if (!n.window.contains(window, 1e-12)) throw Error(Errc::InvalidArgument, "window must lie inside the domain");
    NestedTessellation out;
    out.mother = n.mother;
    out.systems = n.systems;
    out.window = window;
    for (const Subcell& c : n.subcells) {
        if (!hits_window(c.polytope, window)) continue;
        Subcell k = c;
        if (!window.contains(c.polytope.bounding_box())) {
            k.polytope = clip_to_box(c.polytope, window);
            k.volume = k.polytope.volume();
        }
        if (k.polytope.empty() || !(k.volume > 0.0)) continue;
        out.subcells.push_back(std::move(k));
    }
    return out;
}

} // namespace twinlab
