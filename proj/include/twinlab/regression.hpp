// Ordinary least squares with t- and F-tests, residual diagnostics and the
// strain energy model suite fitted over the (eps_m, kappa) grid.
#pragma once

#include "twinlab/core.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace twinlab {

//---------------------------------------------------------------------------//
// Distributions
//---------------------------------------------------------------------------//

/// Student t distribution function.
inline double t_cdf(double t, double dof) {
    if (!(dof > 0.0)) throw Error(Errc::InvalidArgument, "t_cdf needs dof > 0");
    if (std::isnan(t)) return t;
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double tail = 0.5 * boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + t * t));
    return t >= 0.0 ? 1.0 - tail : tail;
}

/// P(|T| >= |t|).
inline double t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0)) throw Error(Errc::InvalidArgument, "t test needs dof > 0");
    if (std::isnan(t)) return t;
    if (std::isinf(t)) return 0.0;
    return boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + t * t));
}

/// F distribution function with (d1, d2) degrees of freedom.
inline double f_cdf(double x, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw Error(Errc::InvalidArgument, "f_cdf needs positive dof");
    if (!(x > 0.0)) return 0.0;
    if (std::isinf(x)) return 1.0;
    return boost::math::ibeta(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2));
}

/// P(F >= x).
inline double f_sf(double x, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw Error(Errc::InvalidArgument, "f_sf needs positive dof");
    if (!(x > 0.0)) return 1.0;
    if (std::isinf(x)) return 0.0;
    return boost::math::ibeta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * x));
}

//---------------------------------------------------------------------------//
// Least squares
//---------------------------------------------------------------------------//

struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd estimates, std_errors, t_values, p_values;
    Eigen::VectorXd residuals, fitted;
    Eigen::MatrixXd covariance;
    double rss = 0.0;
    int dof = 0;

    std::size_t index(const std::string& name) const {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw Error(Errc::InvalidArgument, "no term " + name);
        return std::size_t(it - names.begin());
    }
    double estimate(const std::string& name) const { return estimates[Eigen::Index(index(name))]; }
};

/// Condition number of X^T X after scaling the columns of X to unit norm.
inline double gram_condition(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd s = x;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const double n = s.col(j).norm();
        if (!(n > 0.0)) return std::numeric_limits<double>::infinity();
        s.col(j) /= n;
    }
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(s).singularValues();
    const double c = sv.maxCoeff() / sv.minCoeff();
    return c * c;
}

inline FitResult ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> names) {
    const Eigen::Index n = x.rows(), k = x.cols();
    if (k < 1) throw Error(Errc::InvalidArgument, "design has no columns");
    if (y.size() != n) throw Error(Errc::InvalidArgument, "response length differs from design rows");
    if (Eigen::Index(names.size()) != k) throw Error(Errc::InvalidArgument, "one name per column required");
    if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
        throw Error(Errc::InvalidArgument, "term names must be unique");
    if (n < k + 1) throw Error(Errc::InvalidArgument, "need more observations than terms");
    if (!x.allFinite() || !y.allFinite()) throw Error(Errc::InvalidArgument, "non-finite regression data");
    const double cond = gram_condition(x);
    if (!(cond <= 1e12)) throw Error(Errc::RankDeficient, "design is rank deficient (condition " + std::to_string(cond) + ")");

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    FitResult f;
    f.names = std::move(names);
    f.estimates = qr.solve(y);
    f.fitted = x * f.estimates;
    f.residuals = y - f.fitted;
    f.rss = f.residuals.squaredNorm();
    f.dof = int(n - k);

    // (X^T X)^-1 = P R^-1 R^-T P^T
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd perm = qr.colsPermutation();
    const double sigma2 = f.rss / double(f.dof);
    f.covariance = sigma2 * perm * (rinv * rinv.transpose()) * perm.transpose();

    f.std_errors.resize(k);
    f.t_values.resize(k);
    f.p_values.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double se = std::sqrt(std::max(0.0, f.covariance(j, j)));
        const double b = f.estimates[j];
        f.std_errors[j] = se;
        if (se > 0.0) f.t_values[j] = b / se;
        else f.t_values[j] = b == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), b);
        f.p_values[j] = t_two_sided_p(f.t_values[j], double(f.dof));
    }
    return f;
}

struct FTest {
    double f = 0.0;
    double p = 1.0;
    int q = 0;
    int dof = 0;
};

/// Joint test that the terms of `full` missing from `reduced` vanish.
inline FTest f_test_joint(const FitResult& full, const FitResult& reduced) {
    const std::set<std::string> a(full.names.begin(), full.names.end());
    for (const auto& n : reduced.names)
        if (!a.count(n)) throw Error(Errc::NotNested, "term " + n + " is not in the full model");
    if (full.residuals.size() != reduced.residuals.size())
        throw Error(Errc::NotNested, "models were fitted to different data");
    FTest t;
    t.q = int(full.names.size() - reduced.names.size());
    t.dof = full.dof;
    if (t.q == 0) return t;
    const double num = std::max(0.0, reduced.rss - full.rss) / double(t.q);
    const double den = full.rss / double(full.dof);
    if (den > 0.0) t.f = num / den;
    else t.f = num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    t.p = f_sf(t.f, double(t.q), double(full.dof));
    return t;
}

struct ResidualDiagnostics {
    std::vector<std::pair<double, double>> qq;     // (normal quantile, sorted standardized residual)
    std::vector<std::pair<double, double>> scatter; // (fitted, residual) in input order
};

inline ResidualDiagnostics residual_diagnostics(const FitResult& f) {
    const std::size_t n = std::size_t(f.residuals.size());
    ResidualDiagnostics d;
    const double sigma = f.dof > 0 ? std::sqrt(f.rss / double(f.dof)) : 0.0;
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = sigma > 0.0 ? f.residuals[Eigen::Index(i)] / sigma : 0.0;
    std::sort(z.begin(), z.end());
    const boost::math::normal normal;
    for (std::size_t i = 0; i < n; ++i)
        d.qq.emplace_back(boost::math::quantile(normal, (double(i) + 0.5) / double(n)), z[i]);
    for (std::size_t i = 0; i < n; ++i)
        d.scatter.emplace_back(f.fitted[Eigen::Index(i)], f.residuals[Eigen::Index(i)]);
    return d;
}

//---------------------------------------------------------------------------//
// Energy model suite
//---------------------------------------------------------------------------//

enum class Marking { Independent, MovingAverage };

inline const char* marking_name(Marking m) { return m == Marking::Independent ? "im" : "ma"; }

inline Marking parse_marking(const std::string& s) {
    if (s == "im") return Marking::Independent;
    if (s == "ma") return Marking::MovingAverage;
    throw Error(Errc::InvalidArgument, "marking must be im or ma, got " + s);
}

struct TsedRow {
    double eps_m = 0.0;
    double kappa = 0.0;
    Marking marking = Marking::Independent;
    double w_total = 0.0;
    double w_lamella = 0.0;
    double w_matrix = 0.0;
};

enum class Response { Total, Lamella, Matrix };

struct ModelDef {
    std::string name;
    Response response = Response::Total;
    bool intercept = false;
    std::vector<std::string> terms;
};

/// Basis functions of a row by name.
inline double basis(const std::string& term, const TsedRow& r) {
    const double e = r.eps_m, k = r.kappa;
    const bool im = r.marking == Marking::Independent;
    if (term == "eps") return e;
    if (term == "eps2") return e * e;
    if (term == "eps3") return e * e * e;
    if (term == "eps_kappa") return e * k;
    if (term == "eps2_kappa") return e * e * k;
    if (term == "eps_im") return im ? e : 0.0;
    if (term == "eps2_im") return im ? e * e : 0.0;
    if (term == "eps_ma") return im ? 0.0 : e;
    if (term == "eps2_ma") return im ? 0.0 : e * e;
    throw Error(Errc::InvalidArgument, "unknown term " + term);
}

inline double response_value(Response r, const TsedRow& row) {
    switch (r) {
    case Response::Total: return row.w_total;
    case Response::Lamella: return row.w_lamella;
    case Response::Matrix: return row.w_matrix;
    }
    return 0.0;
}

inline FitResult fit_model(const std::vector<TsedRow>& rows, const ModelDef& m) {
    std::vector<std::string> names;
    if (m.intercept) names.push_back("intercept");
    for (const auto& t : m.terms) names.push_back(t);
    Eigen::MatrixXd x(Eigen::Index(rows.size()), Eigen::Index(names.size()));
    Eigen::VectorXd y(Eigen::Index(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Eigen::Index c = 0;
        if (m.intercept) x(Eigen::Index(i), c++) = 1.0;
        for (const auto& t : m.terms) x(Eigen::Index(i), c++) = basis(t, rows[i]);
        y[Eigen::Index(i)] = response_value(m.response, rows[i]);
    }
    return ols_fit(x, y, names);
}

/// Models of the suite. m1: full interaction model of the total energy;
/// m1p: without the quadratic interaction; m0: no interaction; lamella and
/// matrix: phase energies; cubic: both markings at kappa = 0 with a shared
/// cubic term.
inline std::vector<ModelDef> paper_models() {
    const std::vector<std::string> full{"eps", "eps2", "eps_kappa", "eps2_kappa"};
    return {
        {"m1", Response::Total, false, full},
        {"m1p", Response::Total, false, {"eps", "eps2", "eps_kappa"}},
        {"m0", Response::Total, false, {"eps", "eps2"}},
        {"lamella", Response::Lamella, true, full},
        {"matrix", Response::Matrix, false, full},
        {"cubic", Response::Total, false, {"eps_im", "eps2_im", "eps_ma", "eps2_ma", "eps3"}},
    };
}

inline ModelDef paper_model(const std::string& name) {
    for (auto& m : paper_models())
        if (m.name == name) return m;
    throw Error(Errc::InvalidArgument, "unknown model " + name);
}

struct ModelSuite {
    std::map<std::string, FitResult> fits;
    FTest interaction;           // m1 against m0
    FTest quadratic_interaction; // m1 against m1p
    std::vector<std::string> notes;
};

/// Rows used by a model: the cubic pair takes both markings at kappa = 0,
/// the others the independent marking.
inline std::vector<TsedRow> model_rows(const std::vector<TsedRow>& data, const std::string& model) {
    std::vector<TsedRow> out;
    for (const auto& r : data) {
        if (model == "cubic" ? r.kappa == 0.0 : r.marking == Marking::Independent) out.push_back(r);
    }
    return out;
}

inline ModelSuite paper_model_suite(const std::vector<TsedRow>& data) {
    const auto im = model_rows(data, "m1");
    std::set<double> eps, kap;
    for (const auto& r : im) {
        eps.insert(r.eps_m);
        kap.insert(r.kappa);
    }
    if (eps.size() < 2 || kap.size() < 2)
        throw Error(Errc::DegenerateData, "need two distinct eps_m and kappa values under independent marking");
    ModelSuite s;
    for (const auto& m : paper_models()) {
        const auto rows = model_rows(data, m.name);
        if (m.name == "cubic") {
            bool has_im = false, has_ma = false;
            for (const auto& r : rows) (r.marking == Marking::Independent ? has_im : has_ma) = true;
            if (!has_im || !has_ma) {
                s.notes.push_back("cubic pair skipped: both markings at kappa = 0 required");
                continue;
            }
        }
        s.fits.emplace(m.name, fit_model(rows, m));
    }
    s.interaction = f_test_joint(s.fits.at("m1"), s.fits.at("m0"));
    s.quadratic_interaction = f_test_joint(s.fits.at("m1"), s.fits.at("m1p"));
    return s;
}

} // namespace twinlab
