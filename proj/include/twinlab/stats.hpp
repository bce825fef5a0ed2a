// Descriptive statistics over a realization: histograms, lamella counts,
// normalized lamella geometry, 2D kernel density estimates and inverse pole
// figure point sets.
#pragma once

#include "twinlab/core.hpp"
#include "twinlab/lamellae.hpp"
#include "twinlab/orientation.hpp"

#include <map>
#include <vector>

namespace twinlab {

struct Histogram {
    std::vector<double> bin_edges;
    std::vector<std::size_t> counts;
    std::size_t n = 0;
};

/// Equal-width bins on [lo, hi]; left-closed, the last bin also right-closed.
/// Values outside [lo, hi] are not counted.
inline Histogram histogram(const std::vector<double>& values, std::size_t bins, double lo, double hi) {
    if (bins < 1) throw Error(Errc::InvalidArgument, "need at least one bin");
    if (!(hi > lo)) throw Error(Errc::InvalidArgument, "histogram range must satisfy lo < hi");
    Histogram h;
    h.counts.assign(bins, 0);
    for (std::size_t k = 0; k <= bins; ++k) h.bin_edges.push_back(lo + (hi - lo) * double(k) / double(bins));
    for (double v : values) {
        if (!(v >= lo && v <= hi)) continue;
        std::size_t k = std::size_t((v - lo) / (hi - lo) * double(bins));
        k = std::min(k, bins - 1);
        // Guard against rounding at interior edges.
        while (k > 0 && v < h.bin_edges[k]) --k;
        while (k + 1 < bins && v >= h.bin_edges[k + 1]) ++k;
        ++h.counts[k];
        ++h.n;
    }
    return h;
}

/// Range taken from the data.
inline Histogram histogram(const std::vector<double>& values, std::size_t bins) {
    if (values.empty()) return histogram(values, bins, 0.0, 1.0);
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn, hi = *mx > *mn ? *mx : *mn + 1.0;
    return histogram(values, bins, lo, hi);
}

/// p_k = #{inner cells with exactly k lamellae} / #inner cells, k = 1..l_max.
inline std::vector<double> lamella_count_frequencies(const std::map<std::size_t, LamellarSystem>& systems,
                                                     const std::vector<std::size_t>& inner_ids, int l_max) {
    if (inner_ids.empty()) throw Error(Errc::InvalidArgument, "no inner cells");
    std::vector<double> p(std::size_t(std::max(l_max, 1)), 0.0);
    for (std::size_t id : inner_ids) {
        const auto it = systems.find(id);
        if (it == systems.end()) continue;
        const std::size_t k = it->second.size();
        if (k >= 1 && k <= p.size()) p[k - 1] += 1.0;
    }
    for (double& x : p) x /= double(inner_ids.size());
    return p;
}

struct LamellaGeometry {
    std::size_t cell_id = 0;
    int k = 1; // 1-based position in the cell
    double d_tilde = 0.0;
    double w_tilde = 0.0;
    bool two_lamellae = false;
};

/// Centers and semi-widths relative to the Feret interval of each cell.
inline std::vector<LamellaGeometry> normalized_geometry(const std::map<std::size_t, LamellarSystem>& systems) {
    std::vector<LamellaGeometry> out;
    for (const auto& [id, s] : systems) {
        const double rho = s.feret.rho;
        for (std::size_t j = 0; j < s.lamellae.size(); ++j)
            out.push_back({id, int(j + 1), (s.lamellae[j].d - s.feret.alpha) / rho, s.lamellae[j].w / rho,
                           s.lamellae.size() == 2});
    }
    return out;
}

struct GridSpec {
    double x_lo = 0.0, x_hi = 1.0;
    std::size_t nx = 101;
    double y_lo = 0.0, y_hi = 1.0;
    std::size_t ny = 101;
};

struct Kde2D {
    std::vector<double> grid_x, grid_y;
    Eigen::MatrixXd density; // density(i, j) at (grid_x[i], grid_y[j])
    double h_x = 0.0, h_y = 0.0;
    bool bandwidth_floored = false;

    /// Trapezoidal integral over the grid.
    double integral() const {
        const auto w = [](const std::vector<double>& g, std::size_t i) {
            if (g.size() < 2) return 0.0;
            const double h = g[1] - g[0];
            return (i == 0 || i + 1 == g.size()) ? 0.5 * h : h;
        };
        double s = 0.0;
        for (std::size_t i = 0; i < grid_x.size(); ++i)
            for (std::size_t j = 0; j < grid_y.size(); ++j)
                s += w(grid_x, i) * w(grid_y, j) * density(Eigen::Index(i), Eigen::Index(j));
        return s;
    }

    std::pair<double, double> argmax() const {
        Eigen::Index i = 0, j = 0;
        density.maxCoeff(&i, &j);
        return {grid_x[std::size_t(i)], grid_y[std::size_t(j)]};
    }

    /// Grid nodes strictly larger than their eight neighbours and at least
    /// min_fraction of the global maximum.
    std::vector<std::pair<double, double>> local_maxima(double min_fraction = 0.01) const {
        std::vector<std::pair<double, double>> out;
        const Eigen::Index nx = density.rows(), ny = density.cols();
        const double floor = min_fraction * density.maxCoeff();
        for (Eigen::Index i = 1; i + 1 < nx; ++i)
            for (Eigen::Index j = 1; j + 1 < ny; ++j) {
                const double v = density(i, j);
                bool peak = v > floor;
                for (int a = -1; a <= 1 && peak; ++a)
                    for (int b = -1; b <= 1 && peak; ++b)
                        if ((a || b) && density(i + a, j + b) >= v) peak = false;
                if (peak) out.emplace_back(grid_x[std::size_t(i)], grid_y[std::size_t(j)]);
            }
        return out;
    }
};

/// Silverman's rule 1.06 sigma n^(-1/5).
inline double silverman_bandwidth(const std::vector<double>& v) {
    const double n = double(v.size());
    double m = 0.0;
    for (double x : v) m += x;
    m /= n;
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    const double sd = std::sqrt(s2 / (n - 1.0));
    if (sd <= 1e-12 * std::max(1.0, std::abs(m))) return 0.0;
    return 1.06 * sd * std::pow(n, -0.2);
}

/// Product Gaussian kernel estimate. An axis with zero spread gets bandwidth
/// 1e-3 and the result is flagged.
inline Kde2D kde2(const std::vector<std::pair<double, double>>& pts, const GridSpec& g) {
    if (pts.size() < 2) throw Error(Errc::InvalidArgument, "kde2 needs at least two points");
    if (g.nx < 2 || g.ny < 2 || !(g.x_hi > g.x_lo) || !(g.y_hi > g.y_lo))
        throw Error(Errc::InvalidArgument, "invalid kde grid");
    std::vector<double> xs, ys;
    for (const auto& [x, y] : pts) {
        xs.push_back(x);
        ys.push_back(y);
    }
    Kde2D k;
    k.h_x = silverman_bandwidth(xs);
    k.h_y = silverman_bandwidth(ys);
    if (!(k.h_x > 0.0)) k.h_x = 1e-3, k.bandwidth_floored = true;
    if (!(k.h_y > 0.0)) k.h_y = 1e-3, k.bandwidth_floored = true;
    for (std::size_t i = 0; i < g.nx; ++i) k.grid_x.push_back(g.x_lo + (g.x_hi - g.x_lo) * double(i) / double(g.nx - 1));
    for (std::size_t j = 0; j < g.ny; ++j) k.grid_y.push_back(g.y_lo + (g.y_hi - g.y_lo) * double(j) / double(g.ny - 1));
    // Separable kernel: density = Kx * Ky^T / n.
    const Eigen::Index n = Eigen::Index(pts.size());
    Eigen::MatrixXd kx(Eigen::Index(g.nx), n), ky(Eigen::Index(g.ny), n);
    const double cx = 1.0 / (std::sqrt(2.0 * pi) * k.h_x), cy = 1.0 / (std::sqrt(2.0 * pi) * k.h_y);
    for (Eigen::Index p = 0; p < n; ++p) {
        for (std::size_t i = 0; i < g.nx; ++i) {
            const double u = (k.grid_x[i] - xs[std::size_t(p)]) / k.h_x;
            kx(Eigen::Index(i), p) = cx * std::exp(-0.5 * u * u);
        }
        for (std::size_t j = 0; j < g.ny; ++j) {
            const double u = (k.grid_y[j] - ys[std::size_t(p)]) / k.h_y;
            ky(Eigen::Index(j), p) = cy * std::exp(-0.5 * u * u);
        }
    }
    k.density = kx * ky.transpose() / double(n);
    return k;
}

//---------------------------------------------------------------------------//
// Inverse pole figures
//---------------------------------------------------------------------------//

struct IpfRecord {
    std::size_t id = 0;      // cell id (before) or subcell index (after)
    std::size_t cell_id = 0; // mother cell
    double x = 0.0, y = 0.0;
    Phase phase = Phase::Matrix;
};

/// Mother-cell marks before twinning.
inline std::vector<IpfRecord> ipf_dataset(const std::vector<Orientation>& marks, const std::vector<std::size_t>& ids,
                                          const Vec3& direction) {
    std::vector<IpfRecord> out;
    for (std::size_t id : ids) {
        const auto p = ipf_coordinates(marks.at(id), direction);
        out.push_back({id, id, p.x(), p.y(), Phase::Matrix});
    }
    return out;
}

/// Subcell marks after twinning, optionally restricted to some mother cells.
inline std::vector<IpfRecord> ipf_dataset(const NestedTessellation& n, const Vec3& direction,
                                          const std::vector<std::size_t>* cells = nullptr) {
    std::vector<bool> keep;
    if (cells) {
        keep.assign(n.mother ? n.mother->size() : 0, false);
        for (std::size_t c : *cells) keep.at(c) = true;
    }
    std::vector<IpfRecord> out;
    for (std::size_t k = 0; k < n.subcells.size(); ++k) {
        const Subcell& s = n.subcells[k];
        if (cells && !keep.at(s.cell_id)) continue;
        const auto p = ipf_coordinates(s.mark, direction);
        out.push_back({k, s.cell_id, p.x(), p.y(), s.phase});
    }
    return out;
}

/// Mean Euclidean distance of IPF points to a reference corner.
inline double mean_distance_to(const std::vector<IpfRecord>& r, const Eigen::Vector2d& corner) {
    if (r.empty()) return 0.0;
    double s = 0.0;
    for (const auto& p : r) s += std::hypot(p.x - corner.x(), p.y - corner.y());
    return s / double(r.size());
}

} // namespace twinlab
