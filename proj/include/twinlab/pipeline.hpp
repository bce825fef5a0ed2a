// End-to-end run over the (marking, kappa, eps_m) grid: configuration,
// per-stage functions shared with the command line tool, and the driver that
// writes one directory per grid point.
#pragma once

#include "twinlab/energy.hpp"
#include "twinlab/io.hpp"
#include "twinlab/lamellae.hpp"
#include "twinlab/orientation.hpp"
#include "twinlab/regression.hpp"
#include "twinlab/stats.hpp"
#include "twinlab/tessellation.hpp"
#include "twinlab/twinning.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace twinlab {

inline constexpr const char* config_schema = "twinlab-config/1";
inline constexpr const char* summary_schema = "twinlab-summary/1";

/// Error raised by a pipeline stage; carries the stage and, where known, the cell.
class StageError : public Error {
  public:
    StageError(std::string stage, std::optional<std::size_t> cell, const Error& cause)
        : Error(cause.code(), "stage " + stage + (cell ? ", cell " + std::to_string(*cell) : std::string()) + ": " +
                                  cause.what()),
          stage_(std::move(stage)), cell_(cell) {}

    const std::string& stage() const noexcept { return stage_; }
    std::optional<std::size_t> cell() const noexcept { return cell_; }

  private:
    std::string stage_;
    std::optional<std::size_t> cell_;
};

//---------------------------------------------------------------------------//
// Configuration
//---------------------------------------------------------------------------//

struct VariantSpec {
    Marking marking = Marking::Independent;
    double kappa = 0.0;
};

struct EnergyConfig {
    bool enabled = true;
    SynthParams synth{50000.0, 2.0, 1.0, 0.05, 0.01, Vec3::UnitZ()};
    bool write_elements = false;
};

struct RunConfig {
    std::uint64_t seed = 1;
    double lambda0 = 100.0; // mean number of generators per unit volume
    double margin = 0.5;
    double diameter_mu = 5.1;
    double diameter_sigma = 1.3;
    double fit_tol = 0.01;
    int fit_max_iterations = 500;
    std::vector<VariantSpec> variants{{Marking::Independent, 0.0},
                                      {Marking::Independent, 10.0},
                                      {Marking::Independent, 20.0},
                                      {Marking::Independent, 30.0},
                                      {Marking::MovingAverage, 0.0}};
    Vec3 odf_u = Vec3::UnitZ();
    Vec3 odf_v = Vec3(1, 1, 1);
    std::vector<double> eps_m{0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2};
    TwinningSystem system = TwinningSystem::paper_114();
    double psi1 = 0.2;
    double psi2 = 0.4;
    Vec3 loading = Vec3::UnitZ();
    bool hall_petch_orientation = false;
    LamellaParams lamellae;
    LamellaMethod method = LamellaMethod::Growth;
    bool reuse_tess = true;
    EnergyConfig energy;
    std::string output = "twinlab-out";

    Box domain() const { return Box::cube(-margin, 1.0 + margin); }
    Box window() const { return Box::unit(); }

    void validate() const {
        const auto fail = [](const std::string& m) { throw Error(Errc::ConfigError, m); };
        if (!(lambda0 > 0.0)) fail("lambda0 must be positive");
        if (!(margin >= 0.0)) fail("margin must be nonnegative");
        if (!(diameter_mu > 0.0) || !(diameter_sigma > 0.0)) fail("diameter mu and sigma must be positive");
        if (!(fit_tol > 0.0 && fit_tol <= 0.1)) fail("fit_tol must lie in (0, 0.1]");
        if (fit_max_iterations < 1) fail("fit_max_iterations must be positive");
        if (variants.empty()) fail("no variants");
        std::set<std::pair<int, double>> seen;
        for (const auto& v : variants) {
            if (!(v.kappa >= 0.0)) fail("kappa must be nonnegative");
            if (v.marking == Marking::MovingAverage && v.kappa != 0.0) fail("moving-average marking requires kappa = 0");
            if (!seen.insert({int(v.marking), v.kappa}).second) fail("duplicate variant");
        }
        if (eps_m.empty()) fail("no eps_m values");
        for (double e : eps_m)
            if (!(e > 0.0 && e < 1.0)) fail("eps_m values must lie in (0, 1)");
        if (std::set<double>(eps_m.begin(), eps_m.end()).size() != eps_m.size()) fail("duplicate eps_m value");
        if (!(odf_u.norm() > 0.0) || !(odf_v.norm() > 0.0) || !(loading.norm() > 0.0)) fail("zero direction vector");
        try {
            system.validate();
            lamellae.validate();
            TwinDecisionParams{psi1, psi2, 1.0, 2.0, loading, hall_petch_orientation}.validate();
        } catch (const Error& e) {
            fail(e.what());
        }
        if (!(energy.synth.density > 0.0) || !(energy.synth.strain != 0.0) || !(energy.synth.noise >= 0.0))
            fail("invalid energy synthesis parameters");
        if (output.empty()) fail("output directory must be named");
    }

    /// Paper profile. The critical propensity runs from psi2 at the smallest
    /// cell to psi1 at the largest.
    static RunConfig paper() {
        RunConfig c;
        c.hall_petch_orientation = true;
        return c;
    }
};

inline TwinningSystem twinning_system_from(const Vec3& n1, const Vec3& a1, const Vec3& n2, const Vec3& a2) {
    TwinningSystem s;
    s.n1 = unit(n1);
    s.a1 = unit(a1);
    s.n2 = unit(n2);
    s.a2 = unit(a2);
    s.beta_tw = std::acos(std::abs(s.a2.dot(s.n1)));
    s.shear_s = 2.0 * std::tan(s.beta_tw);
    return s;
}

inline Json config_to_json(const RunConfig& c) {
    Json j;
    j["schema"] = config_schema;
    j["seed"] = c.seed;
    j["lambda0"] = c.lambda0;
    j["margin"] = c.margin;
    j["diameter_mu"] = c.diameter_mu;
    j["diameter_sigma"] = c.diameter_sigma;
    j["fit_tol"] = c.fit_tol;
    j["fit_max_iterations"] = c.fit_max_iterations;
    Json v = Json::array();
    for (const auto& x : c.variants) v.push_back({{"marking", marking_name(x.marking)}, {"kappa", x.kappa}});
    j["variants"] = v;
    j["odf_u"] = to_json(c.odf_u);
    j["odf_v"] = to_json(c.odf_v);
    j["eps_m"] = c.eps_m;
    j["twinning"] = {{"n1", to_json(c.system.n1)}, {"a1", to_json(c.system.a1)},
                     {"n2", to_json(c.system.n2)}, {"a2", to_json(c.system.a2)}, {"shear", c.system.shear_s}};
    j["psi1"] = c.psi1;
    j["psi2"] = c.psi2;
    j["loading"] = to_json(c.loading);
    j["hall_petch_orientation"] = c.hall_petch_orientation;
    const LamellaParams& p = c.lamellae;
    j["lamellae"] = {{"l_max", p.l_max},
                     {"xi", p.xi},
                     {"gamma", p.gamma},
                     {"zeta1", p.zeta1},
                     {"zeta2", p.zeta2},
                     {"theta", p.theta},
                     {"poisson_lambda", p.poisson_lambda},
                     {"grid_points", p.grid_points},
                     {"max_retries", p.max_retries},
                     {"rsa_attempts", p.rsa_attempts},
                     {"volume_tol", p.volume_tol},
                     {"anneal_iterations", p.anneal_iterations},
                     {"anneal_cooling", p.anneal_cooling},
                     {"anneal_stop", p.anneal_stop}};
    j["lamella_method"] = c.method == LamellaMethod::Growth ? "growth" : "anneal";
    j["reuse_tess"] = c.reuse_tess;
    const SynthParams& s = c.energy.synth;
    j["energy"] = {{"enabled", c.energy.enabled},       {"density", s.density}, {"lamella_scale", s.lamella_scale},
                   {"matrix_scale", s.matrix_scale},    {"noise", s.noise},     {"strain", s.strain},
                   {"loading", to_json(s.loading)},     {"write_elements", c.energy.write_elements}};
    j["output"] = c.output;
    return j;
}

namespace detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw Error(Errc::ConfigError, where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw Error(Errc::ConfigError, "unknown key '" + it.key() + "' in " + where);
}

template <class T> void read_opt(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ConfigError, std::string("bad value for ") + key + ": " + e.what());
    }
}

inline void read_vec(const Json& j, const char* key, Vec3& out) {
    if (!j.contains(key)) return;
    try {
        out = vec3_from(j.at(key));
    } catch (const std::exception& e) {
        throw Error(Errc::ConfigError, std::string("bad vector for ") + key);
    }
}

} // namespace detail

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig config_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("schema") || j["schema"] != config_schema)
        throw Error(Errc::SchemaMismatch, std::string("expected schema ") + config_schema);
    detail::check_keys(j,
                       {"schema", "seed", "lambda0", "margin", "diameter_mu", "diameter_sigma", "fit_tol",
                        "fit_max_iterations", "variants", "odf_u", "odf_v", "eps_m", "twinning", "psi1", "psi2",
                        "loading", "hall_petch_orientation", "lamellae", "lamella_method", "reuse_tess", "energy",
                        "output"},
                       "config");
    RunConfig c;
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "lambda0", c.lambda0);
    detail::read_opt(j, "margin", c.margin);
    detail::read_opt(j, "diameter_mu", c.diameter_mu);
    detail::read_opt(j, "diameter_sigma", c.diameter_sigma);
    detail::read_opt(j, "fit_tol", c.fit_tol);
    detail::read_opt(j, "fit_max_iterations", c.fit_max_iterations);
    if (j.contains("variants")) {
        c.variants.clear();
        for (const auto& v : j["variants"]) {
            detail::check_keys(v, {"marking", "kappa"}, "variant");
            VariantSpec s;
            std::string m = "im";
            detail::read_opt(v, "marking", m);
            try {
                s.marking = parse_marking(m);
            } catch (const Error& e) {
                throw Error(Errc::ConfigError, e.what());
            }
            detail::read_opt(v, "kappa", s.kappa);
            c.variants.push_back(s);
        }
    }
    detail::read_vec(j, "odf_u", c.odf_u);
    detail::read_vec(j, "odf_v", c.odf_v);
    detail::read_opt(j, "eps_m", c.eps_m);
    if (j.contains("twinning")) {
        const Json& t = j["twinning"];
        detail::check_keys(t, {"n1", "a1", "n2", "a2", "shear"}, "twinning");
        Vec3 n1 = c.system.n1, a1 = c.system.a1, n2 = c.system.n2, a2 = c.system.a2;
        detail::read_vec(t, "n1", n1);
        detail::read_vec(t, "a1", a1);
        detail::read_vec(t, "n2", n2);
        detail::read_vec(t, "a2", a2);
        for (const Vec3* v : {&n1, &a1, &n2, &a2})
            if (!(v->norm() > 0.0)) throw Error(Errc::ConfigError, "twinning vectors must be nonzero");
        c.system = twinning_system_from(n1, a1, n2, a2);
        detail::read_opt(t, "shear", c.system.shear_s);
    }
    detail::read_opt(j, "psi1", c.psi1);
    detail::read_opt(j, "psi2", c.psi2);
    detail::read_vec(j, "loading", c.loading);
    detail::read_opt(j, "hall_petch_orientation", c.hall_petch_orientation);
    if (j.contains("lamellae")) {
        const Json& l = j["lamellae"];
        detail::check_keys(l,
                           {"l_max", "xi", "gamma", "zeta1", "zeta2", "theta", "poisson_lambda", "grid_points",
                            "max_retries", "rsa_attempts", "volume_tol", "anneal_iterations", "anneal_cooling",
                            "anneal_stop"},
                           "lamellae");
        LamellaParams& p = c.lamellae;
        detail::read_opt(l, "l_max", p.l_max);
        detail::read_opt(l, "xi", p.xi);
        detail::read_opt(l, "gamma", p.gamma);
        detail::read_opt(l, "zeta1", p.zeta1);
        detail::read_opt(l, "zeta2", p.zeta2);
        detail::read_opt(l, "theta", p.theta);
        detail::read_opt(l, "poisson_lambda", p.poisson_lambda);
        detail::read_opt(l, "grid_points", p.grid_points);
        detail::read_opt(l, "max_retries", p.max_retries);
        detail::read_opt(l, "rsa_attempts", p.rsa_attempts);
        detail::read_opt(l, "volume_tol", p.volume_tol);
        detail::read_opt(l, "anneal_iterations", p.anneal_iterations);
        detail::read_opt(l, "anneal_cooling", p.anneal_cooling);
        detail::read_opt(l, "anneal_stop", p.anneal_stop);
    }
    if (j.contains("lamella_method")) {
        std::string m;
        detail::read_opt(j, "lamella_method", m);
        if (m == "growth") c.method = LamellaMethod::Growth;
        else if (m == "anneal") c.method = LamellaMethod::Annealing;
        else throw Error(Errc::ConfigError, "lamella_method must be growth or anneal");
    }
    detail::read_opt(j, "reuse_tess", c.reuse_tess);
    if (j.contains("energy")) {
        const Json& e = j["energy"];
        detail::check_keys(e,
                           {"enabled", "density", "lamella_scale", "matrix_scale", "noise", "strain", "loading",
                            "write_elements"},
                           "energy");
        detail::read_opt(e, "enabled", c.energy.enabled);
        detail::read_opt(e, "density", c.energy.synth.density);
        detail::read_opt(e, "lamella_scale", c.energy.synth.lamella_scale);
        detail::read_opt(e, "matrix_scale", c.energy.synth.matrix_scale);
        detail::read_opt(e, "noise", c.energy.synth.noise);
        detail::read_opt(e, "strain", c.energy.synth.strain);
        detail::read_vec(e, "loading", c.energy.synth.loading);
        detail::read_opt(e, "write_elements", c.energy.write_elements);
    }
    detail::read_opt(j, "output", c.output);
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& p) {
    Json j;
    try {
        j = Json::parse(read_file(p));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ConfigError, p.string() + ": " + e.what());
    }
    return config_from_json(j);
}

//---------------------------------------------------------------------------//
// Stages
//---------------------------------------------------------------------------//

struct TessStage {
    std::shared_ptr<const LaguerreTessellation> tess;
    VolumeTargets targets;
    FitReport fit;
    PlusSample hits;               // cells hitting the window
    std::vector<std::size_t> inner; // cells away from the domain boundary
};

inline TessStage run_tess_stage(const RunConfig& c, const std::string& label = "tess") {
    TessStage s;
    const Box domain = c.domain();
    try {
        Rng rng = substream(c.seed, label);
        const auto pts = poisson_generators(c.lambda0, domain, rng);
        s.targets = gaussian_volume_targets(pts.size(), c.diameter_mu, c.diameter_sigma, domain.volume(), rng);
        auto t = std::make_shared<LaguerreTessellation>();
        fit_weights(pts, s.targets, domain, c.fit_tol, FitOptions{c.fit_max_iterations}, &s.fit, t.get());
        s.tess = t;
    } catch (const Error& e) {
        throw StageError("tess", std::nullopt, e);
    }
    s.hits = plus_sample(*s.tess, c.window());
    s.inner = inner_cells(*s.tess);
    return s;
}

inline TessStage tess_stage_from(std::shared_ptr<const LaguerreTessellation> t, const Box& window) {
    TessStage s;
    s.tess = std::move(t);
    s.hits = plus_sample(*s.tess, window);
    s.inner = inner_cells(*s.tess);
    return s;
}

inline std::string variant_name(const VariantSpec& v) {
    return std::string(marking_name(v.marking)) + "_k" + fmt_double(v.kappa);
}

inline std::string variant_label(const VariantSpec& v, double eps) { return variant_name(v) + "_e" + fmt_double(eps); }

/// One mark per mother cell. Independent marks come from the odf with the
/// variant's kappa; moving-average marks smooth uniform marks over neighbours.
inline std::vector<Orientation> run_mark_stage(const RunConfig& c, const LaguerreTessellation& t, const VariantSpec& v) {
    std::vector<Orientation> marks(t.size());
    try {
        if (v.marking == Marking::Independent) {
            const OdfParams odf{v.kappa, c.odf_u, c.odf_v};
            const std::string stream = "marks/" + variant_name(v);
            parallel_for(t.size(), [&](std::size_t i) {
                Rng rng = substream(c.seed, stream, i);
                marks[i] = sample_odf(odf, rng);
            });
            return marks;
        }
        std::vector<Orientation> base(t.size());
        parallel_for(t.size(), [&](std::size_t i) {
            Rng rng = substream(c.seed, "marks/ma-base", i);
            base[i] = sample_uniform(rng);
        });
        auto adj = t.adjacency;
        for (std::size_t i = 0; i < adj.size(); ++i)
            if (t.cells[i].empty()) adj[i] = {i};
        return moving_average_marks(adj, base);
    } catch (const Error& e) {
        throw StageError("mark", std::nullopt, e);
    }
}

/// Cells that receive a twin decision: those hitting the window and the
/// inner cells, sorted.
inline std::vector<std::size_t> decision_cells(const TessStage& s) {
    std::set<std::size_t> ids(s.hits.cells.begin(), s.hits.cells.end());
    ids.insert(s.inner.begin(), s.inner.end());
    return {ids.begin(), ids.end()};
}

/// V_min and V_max are taken over the cells hitting the window; other cells
/// are clamped into that range before the critical propensity is evaluated.
inline TwinTable run_twin_stage(const RunConfig& c, const TessStage& s, const std::vector<Orientation>& marks, double eps) {
    const LaguerreTessellation& t = *s.tess;
    TwinTable table;
    table.eps_m = eps;
    if (s.hits.cells.size() < 2) throw StageError("twin", std::nullopt, Error(Errc::InvalidArgument, "fewer than two cells hit the window"));
    double vmin = std::numeric_limits<double>::infinity(), vmax = 0.0;
    for (std::size_t i : s.hits.cells) {
        vmin = std::min(vmin, t.volumes[i]);
        vmax = std::max(vmax, t.volumes[i]);
    }
    table.params = TwinDecisionParams{c.psi1, c.psi2, vmin, vmax, unit(c.loading), c.hall_petch_orientation};
    table.ids = decision_cells(s);
    table.states.assign(t.size(), TwinState{});
    for (std::size_t i : table.ids) {
        try {
            const double v = std::clamp(t.volumes[i], vmin, vmax);
            table.states[i] = evaluate_twin(marks[i], v, eps, c.system, table.params);
        } catch (const Error& e) {
            throw StageError("twin", i, e);
        }
    }
    return table;
}

struct LamellaStage {
    std::map<std::size_t, LamellarSystem> systems;
    std::vector<std::size_t> unresolved;
};

/// Lamellar systems for every twinned decision cell. Cells where no system
/// is found are listed and left without lamellae.
inline LamellaStage run_lamella_stage(const RunConfig& c, const LaguerreTessellation& t, const TwinTable& table,
                                      const std::string& label) {
    std::vector<std::size_t> todo;
    for (std::size_t i : table.ids)
        if (table.states[i].status == TwinStatus::Twinned) todo.push_back(i);
    std::vector<std::optional<LamellarSystem>> out(todo.size());
    const std::string stream = "lamellae/" + label;
    parallel_for(todo.size(), [&](std::size_t k) {
        const std::size_t i = todo[k];
        const TwinState& st = table.states[i];
        Rng rng = substream(c.seed, stream, i);
        try {
            out[k] = c.method == LamellaMethod::Growth
                         ? grow_lamellae(i, t.cells[i], st.n_vec, st.v_t, c.lamellae, rng)
                         : anneal_lamellae(i, t.cells[i], st.n_vec, st.v_t, c.lamellae, rng);
        } catch (const Error& e) {
            if (e.code() != Errc::Unresolvable) throw StageError("lamellae", i, e);
        }
    });
    LamellaStage s;
    for (std::size_t k = 0; k < todo.size(); ++k) {
        if (out[k]) s.systems.emplace(todo[k], std::move(*out[k]));
        else s.unresolved.push_back(todo[k]);
    }
    return s;
}

/// Twin states with the decision withdrawn for cells that got no lamellae.
inline std::vector<TwinState> effective_states(const TwinTable& table, const LamellaStage& l) {
    std::vector<TwinState> st = table.states;
    for (auto& s : st)
        if (s.decision) s.decision = false;
    for (const auto& [id, sys] : l.systems) st[id].decision = true;
    return st;
}

struct VariantStats {
    std::size_t n_cells = 0, n_hits = 0, n_inner = 0;
    std::size_t hits_twinned = 0; // positive twin decisions among cells hitting the window
    double twinned_fraction = 0.0;
    std::size_t n_overflow = 0, n_unresolved = 0, n_systems = 0;
    double mean_propensity = 0.0;
    std::vector<double> count_frequencies; // p_k over inner cells, k = 1..l_max
    std::size_t subcells = 0, lamella_subcells = 0;
    double window_volume = 0.0;
    double lamella_volume_fraction = 0.0;
};

inline VariantStats variant_stats(const RunConfig& c, const TessStage& s, const TwinTable& table,
                                  const LamellaStage& l, const NestedTessellation& clipped) {
    VariantStats v;
    v.n_cells = s.tess->size();
    v.n_hits = s.hits.cells.size();
    v.n_inner = s.inner.size();
    for (std::size_t i : s.hits.cells) v.hits_twinned += table.states[i].decision;
    v.twinned_fraction = double(v.hits_twinned) / double(v.n_hits);
    double psum = 0.0;
    for (std::size_t i : table.ids) {
        v.n_overflow += table.states[i].status == TwinStatus::Overflow;
        psum += table.states[i].propensity;
    }
    v.mean_propensity = psum / double(table.ids.size());
    v.n_unresolved = l.unresolved.size();
    v.n_systems = l.systems.size();
    v.count_frequencies = lamella_count_frequencies(l.systems, s.inner, c.lamellae.l_max);
    v.subcells = clipped.subcells.size();
    double lam = 0.0;
    for (const auto& sc : clipped.subcells)
        if (sc.phase == Phase::Lamella) {
            ++v.lamella_subcells;
            lam += sc.volume;
        }
    v.window_volume = clipped.total_volume();
    v.lamella_volume_fraction = lam / v.window_volume;
    return v;
}

inline Json stats_to_json(const VariantStats& v) {
    return {{"n_cells", v.n_cells},
            {"n_hits", v.n_hits},
            {"n_inner", v.n_inner},
            {"hits_twinned", v.hits_twinned},
            {"twinned_fraction", v.twinned_fraction},
            {"n_overflow", v.n_overflow},
            {"n_unresolved", v.n_unresolved},
            {"n_systems", v.n_systems},
            {"mean_propensity", v.mean_propensity},
            {"count_frequencies", v.count_frequencies},
            {"subcells", v.subcells},
            {"lamella_subcells", v.lamella_subcells},
            {"window_volume", v.window_volume},
            {"lamella_volume_fraction", v.lamella_volume_fraction}};
}

//---------------------------------------------------------------------------//
// Driver
//---------------------------------------------------------------------------//

struct VariantResult {
    VariantSpec spec;
    double eps_m = 0.0;
    std::string label;
    std::shared_ptr<const std::vector<Orientation>> marks;
    TwinTable twins;
    LamellaStage lamellae;
    NestedTessellation nested; // clipped to the window
    VariantStats stats;
    std::optional<TsedResult> energy;
    std::vector<std::string> warnings;
};

struct PipelineResult {
    std::vector<TessStage> tess; // one when shared, otherwise one per variant
    std::vector<VariantResult> variants;
    std::vector<TsedRow> tsed;
    std::optional<ModelSuite> suite;
    std::vector<std::string> warnings;
    std::vector<std::string> plan; // variant labels in execution order
};

struct RunOptions {
    bool write = true;
    bool dry_run = false;
    bool keep_nested = true;
};

inline std::vector<std::string> run_plan(const RunConfig& c) {
    std::vector<std::string> p;
    for (const auto& v : c.variants)
        for (double e : c.eps_m) p.push_back(variant_label(v, e));
    return p;
}

inline Json summary_to_json(const RunConfig& c, const PipelineResult& r) {
    Json j;
    j["schema"] = summary_schema;
    j["seed"] = c.seed;
    j["synthetic_energy"] = c.energy.enabled;
    Json t = Json::array();
    for (const auto& s : r.tess)
        t.push_back({{"cells", s.tess->size()},
                     {"hits", s.hits.cells.size()},
                     {"inner", s.inner.size()},
                     {"boundary_violations", s.hits.violations.size()},
                     {"fit_iterations", s.fit.iterations},
                     {"fit_max_relative_error", s.fit.max_relative_error}});
    j["tessellations"] = t;
    Json v = Json::array();
    for (const auto& x : r.variants) {
        Json e = {{"label", x.label},
                  {"marking", marking_name(x.spec.marking)},
                  {"kappa", x.spec.kappa},
                  {"eps_m", x.eps_m},
                  {"stats", stats_to_json(x.stats)}};
        if (x.energy) e["energy"] = {{"w_total", x.energy->w_total}, {"v_l", x.energy->v_l}, {"v_m", x.energy->v_m}};
        v.push_back(e);
    }
    j["variants"] = v;
    j["warnings"] = r.warnings;
    return j;
}

/// Runs every (variant, eps_m) grid point. Output files are a function of
/// the configuration alone; wall-clock timings go to a separate file.
inline PipelineResult run_pipeline(const RunConfig& c, const RunOptions& opt = {}) {
    c.validate();
    namespace fs = std::filesystem;
    using clock = std::chrono::steady_clock;
    PipelineResult r;
    r.plan = run_plan(c);
    if (opt.dry_run) return r;

    const fs::path root(c.output);
    Json timings = Json::object();
    const auto timed = [&](const std::string& key, auto&& f) {
        const auto t0 = clock::now();
        f();
        timings[key] = timings.value(key, 0.0) + std::chrono::duration<double>(clock::now() - t0).count();
    };

    const auto tess_warnings = [&](const TessStage& s, const std::string& name) {
        if (!s.hits.violations.empty())
            r.warnings.push_back(name + ": " + std::to_string(s.hits.violations.size()) +
                                 " cells hitting the window touch the boundary of the extended domain");
    };
    if (c.reuse_tess) {
        timed("tess", [&] { r.tess.push_back(run_tess_stage(c)); });
        tess_warnings(r.tess.back(), "tess");
        if (opt.write) write_json(root / "tess.json", tess_to_json(*r.tess.back().tess));
    }

    for (const auto& spec : c.variants) {
        const std::string vname = variant_name(spec);
        const TessStage* ts = nullptr;
        if (c.reuse_tess) {
            ts = &r.tess.front();
        } else {
            timed("tess", [&] { r.tess.push_back(run_tess_stage(c, "tess/" + vname)); });
            ts = &r.tess.back();
            tess_warnings(*ts, vname);
            if (opt.write) write_json(root / vname / "tess.json", tess_to_json(*ts->tess));
        }
        std::shared_ptr<const std::vector<Orientation>> marks;
        timed("mark", [&] { marks = std::make_shared<std::vector<Orientation>>(run_mark_stage(c, *ts->tess, spec)); });
        if (opt.write) write_json(root / vname / "marks.json", marks_to_json(*marks, spec.marking, spec.kappa));

        for (double eps : c.eps_m) {
            VariantResult v;
            v.spec = spec;
            v.eps_m = eps;
            v.label = variant_label(spec, eps);
            v.marks = marks;
            timed("twin", [&] { v.twins = run_twin_stage(c, *ts, *marks, eps); });
            timed("lamellae", [&] { v.lamellae = run_lamella_stage(c, *ts->tess, v.twins, v.label); });
            for (std::size_t i : v.lamellae.unresolved)
                v.warnings.push_back("cell " + std::to_string(i) + ": no lamellar system found; left untwinned");
            timed("nest", [&] {
                try {
                    const auto states = effective_states(v.twins, v.lamellae);
                    const auto nested = build_nested(ts->tess, *marks, states, v.lamellae.systems);
                    v.nested = clip_to_window(nested, c.window());
                } catch (const Error& e) {
                    throw StageError("nest", std::nullopt, e);
                }
            });
            timed("stats", [&] { v.stats = variant_stats(c, *ts, v.twins, v.lamellae, v.nested); });
            if (v.stats.n_overflow > 0)
                v.warnings.push_back(std::to_string(v.stats.n_overflow) + " twinned cells cannot reach eps_m");

            std::vector<ElementRecord> elements;
            if (c.energy.enabled) {
                timed("energy", [&] {
                    try {
                        Rng rng = substream(c.seed, "energy/" + v.label);
                        elements = synthesize_elements(v.nested, c.energy.synth, rng);
                        v.energy = phase_tsed(elements);
                    } catch (const Error& e) {
                        throw StageError("energy", std::nullopt, e);
                    }
                });
                TsedRow row;
                row.eps_m = eps;
                row.kappa = spec.kappa;
                row.marking = spec.marking;
                row.w_total = v.energy->w_total;
                row.w_lamella = v.energy->w_lamella.value_or(std::nan(""));
                row.w_matrix = v.energy->w_matrix.value_or(std::nan(""));
                r.tsed.push_back(row);
            }

            if (opt.write) {
                const fs::path dir = root / v.label;
                timed("write", [&] {
                    write_json(dir / "twin.json", twin_to_json(v.twins));
                    write_json(dir / "lamellae.json", lamellae_to_json(v.lamellae.systems));
                    write_json(dir / "nested.json", nested_to_json(v.nested));
                    Json st = stats_to_json(v.stats);
                    st["warnings"] = v.warnings;
                    write_json(dir / "stats.json", st);
                    write_file(dir / "geometry.csv", geometry_to_csv(normalized_geometry(v.lamellae.systems)));
                    std::vector<std::size_t> hit_ids = ts->hits.cells;
                    write_file(dir / "ipf_before.csv", ipf_to_csv(ipf_dataset(*marks, hit_ids, unit(c.loading))));
                    write_file(dir / "ipf_after.csv", ipf_to_csv(ipf_dataset(v.nested, unit(c.loading))));
                    if (v.energy) {
                        write_json(dir / "energy.json",
                                   Json{{"synthetic", true},
                                        {"w_total", v.energy->w_total},
                                        {"w_lamella", v.energy->w_lamella ? Json(*v.energy->w_lamella) : Json()},
                                        {"w_matrix", v.energy->w_matrix ? Json(*v.energy->w_matrix) : Json()},
                                        {"v_l", v.energy->v_l},
                                        {"v_m", v.energy->v_m},
                                        {"n_elements", elements.size()},
                                        {"n_straddling", v.energy->n_straddling}});
                        if (c.energy.write_elements) write_file(dir / "elements.csv", elements_to_csv(elements));
                    }
                });
            }
            for (const auto& w : v.warnings) r.warnings.push_back(v.label + ": " + w);
            if (!opt.keep_nested) v.nested.subcells.clear();
            r.variants.push_back(std::move(v));
        }
    }

    if (!r.tsed.empty()) {
        if (opt.write) write_file(root / "tsed.csv", tsed_to_csv(r.tsed));
        try {
            timed("regress", [&] { r.suite = paper_model_suite(r.tsed); });
        } catch (const Error& e) {
            r.warnings.push_back(std::string("regression skipped: ") + e.what());
        }
        if (r.suite) {
            for (const auto& n : r.suite->notes) r.warnings.push_back(n);
            if (opt.write) {
                for (const auto& [name, fit] : r.suite->fits)
                    write_file(root / "regression" / (name + ".csv"), coefficients_to_csv(fit));
                write_json(root / "regression" / "f_tests.json",
                           Json{{"interaction", {{"F", r.suite->interaction.f}, {"p", r.suite->interaction.p}}},
                                {"quadratic_interaction",
                                 {{"F", r.suite->quadratic_interaction.f}, {"p", r.suite->quadratic_interaction.p}}}});
            }
        }
    }
    if (opt.write) {
        write_json(root / "config.json", config_to_json(c));
        write_json(root / "summary.json", summary_to_json(c, r));
        write_json(root / "timings.json", timings);
    }
    return r;
}

} // namespace twinlab
