// twinlab command line tool. Each subcommand reads and writes the documented
// file schemas, so the stages can be chained through files or run together
// with `pipeline`.
#include "twinlab/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;
using namespace twinlab;

namespace {

constexpr int exit_config = 2;
constexpr int exit_stage = 3;

/// Relative output paths are resolved against $TWINLAB_OUTPUT when it is set.
fs::path output_path(const std::string& p) {
    const char* root = std::getenv("TWINLAB_OUTPUT");
    const fs::path path(p);
    if (!root || !*root || path.is_absolute()) return path;
    return fs::path(root) / path;
}

std::shared_ptr<const LaguerreTessellation> load_tess(const std::string& p) {
    return std::make_shared<LaguerreTessellation>(tess_from_json(read_json(p)));
}

std::vector<Orientation> load_marks(const std::string& p, const LaguerreTessellation& t) {
    auto m = marks_from_json(read_json(p));
    if (m.size() != t.size()) throw Error(Errc::SchemaMismatch, "marks file does not match the tessellation");
    return m;
}

TwinTable load_twin(const std::string& p, const LaguerreTessellation& t) {
    auto tw = twin_from_json(read_json(p));
    if (tw.states.size() != t.size()) throw Error(Errc::SchemaMismatch, "twin file does not match the tessellation");
    return tw;
}

LamellaStage load_lamellae(const std::string& p, const LaguerreTessellation& t, const TwinTable& tw) {
    LamellaStage s;
    s.systems = lamellae_from_json(read_json(p), t);
    for (std::size_t i : tw.ids)
        if (tw.states[i].status == TwinStatus::Twinned && !s.systems.count(i)) s.unresolved.push_back(i);
    return s;
}

struct Chain {
    std::string tess, marks, twin, lamellae;
};

void add_chain(CLI::App* app, Chain& c, bool lamellae = true) {
    app->add_option("--tess", c.tess, "tessellation file (twinlab-tess/1)")->required()->check(CLI::ExistingFile);
    app->add_option("--marks", c.marks, "marks file (twinlab-marks/1)")->required()->check(CLI::ExistingFile);
    app->add_option("--twin", c.twin, "twin decision file (twinlab-twin/1)")->required()->check(CLI::ExistingFile);
    if (lamellae)
        app->add_option("--lamellae", c.lamellae, "lamellae file (twinlab-lamellae/1)")
            ->required()
            ->check(CLI::ExistingFile);
}

struct Loaded {
    std::shared_ptr<const LaguerreTessellation> tess;
    std::vector<Orientation> marks;
    TwinTable twin;
    LamellaStage lamellae;
    NestedTessellation nested; // clipped to the unit window
};

Loaded load_chain(const Chain& c) {
    Loaded l;
    l.tess = load_tess(c.tess);
    l.marks = load_marks(c.marks, *l.tess);
    l.twin = load_twin(c.twin, *l.tess);
    l.lamellae = load_lamellae(c.lamellae, *l.tess, l.twin);
    const auto states = effective_states(l.twin, l.lamellae);
    l.nested = clip_to_window(build_nested(l.tess, l.marks, states, l.lamellae.systems), Box::unit());
    return l;
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") std::cout << text;
    else write_file(output_path(out), text);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"twinlab: twinned microstructures on Laguerre tessellations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "twinlab 1.0");

    //------------------------------------------------------------------- tess
    auto* tess = app.add_subcommand("tess", "generate generators and fit Laguerre weights to volume targets");
    std::optional<std::size_t> tess_n;
    double tess_lambda0 = 100.0, tess_margin = 0.5, tess_mu = 5.1, tess_sigma = 1.3, tess_tol = 0.01;
    int tess_iter = 500;
    std::uint64_t seed = 1;
    std::string tess_targets = "gaussian", tess_out = "tess.json";
    tess->add_option("--n", tess_n, "fixed number of uniform generators instead of a Poisson count");
    tess->add_option("--lambda0", tess_lambda0, "Poisson intensity per unit volume")->capture_default_str();
    tess->add_option("--margin", tess_margin, "domain is [-margin, 1 + margin]^3")->capture_default_str();
    tess->add_option("--targets", tess_targets, "volume targets")
        ->check(CLI::IsMember({"gaussian", "lognormal"}))
        ->capture_default_str();
    tess->add_option("--mu", tess_mu, "mean volume-equivalent diameter (gaussian targets)")->capture_default_str();
    tess->add_option("--sigma", tess_sigma, "diameter sd, or log-volume sd for lognormal targets")
        ->capture_default_str();
    tess->add_option("--tol", tess_tol, "maximum relative volume error")->capture_default_str();
    tess->add_option("--max-iterations", tess_iter)->capture_default_str();
    tess->add_option("--seed", seed)->capture_default_str();
    tess->add_option("--out", tess_out)->capture_default_str();

    //------------------------------------------------------------------- mark
    auto* mark = app.add_subcommand("mark", "assign mother cell orientations");
    std::string mark_tess, mark_marking = "im", mark_out = "marks.json";
    double mark_kappa = 0.0;
    mark->add_option("--tess", mark_tess)->required()->check(CLI::ExistingFile);
    mark->add_option("--marking", mark_marking)->check(CLI::IsMember({"im", "ma"}))->capture_default_str();
    mark->add_option("--kappa", mark_kappa, "odf concentration (independent marking)")->capture_default_str();
    mark->add_option("--seed", seed)->capture_default_str();
    mark->add_option("--out", mark_out)->capture_default_str();

    //------------------------------------------------------------------- twin
    auto* twin = app.add_subcommand("twin", "twin decisions for cells hitting the unit window and inner cells");
    std::string twin_tess, twin_marks, twin_out = "twin.json";
    double twin_eps = 0.1, psi1 = 0.2, psi2 = 0.4;
    bool literal_orientation = false;
    twin->add_option("--tess", twin_tess)->required()->check(CLI::ExistingFile);
    twin->add_option("--marks", twin_marks)->required()->check(CLI::ExistingFile);
    twin->add_option("--eps", twin_eps, "macroscopic strain eps_m")->capture_default_str();
    twin->add_option("--psi1", psi1)->capture_default_str();
    twin->add_option("--psi2", psi2)->capture_default_str();
    twin->add_flag("--literal-orientation", literal_orientation,
                   "critical propensity psi1 at the smallest cell and psi2 at the largest");
    twin->add_option("--out", twin_out)->capture_default_str();

    //--------------------------------------------------------------- lamellae
    auto* lam = app.add_subcommand("lamellae", "place lamellar systems in twinned cells");
    Chain lam_in;
    std::string lam_method = "growth", lam_label = "cli", lam_out = "lamellae.json";
    add_chain(lam, lam_in, false);
    lam->add_option("--method", lam_method)->check(CLI::IsMember({"growth", "anneal"}))->capture_default_str();
    lam->add_option("--label", lam_label, "random substream label")->capture_default_str();
    lam->add_option("--seed", seed)->capture_default_str();
    lam->add_option("--out", lam_out)->capture_default_str();

    //------------------------------------------------------------------- nest
    auto* nest = app.add_subcommand("nest", "nested tessellation clipped to the unit window");
    Chain nest_in;
    std::string nest_out = "nested.json";
    add_chain(nest, nest_in);
    nest->add_option("--out", nest_out)->capture_default_str();

    //------------------------------------------------------------------ stats
    auto* stats = app.add_subcommand("stats", "counts, lamella geometry and inverse pole figure data");
    Chain stats_in;
    std::string stats_out = "stats";
    add_chain(stats, stats_in);
    stats->add_option("--out", stats_out, "output directory")->capture_default_str();

    //----------------------------------------------------------- energy-synth
    auto* esyn = app.add_subcommand("energy-synth", "synthetic element data with known phase energies");
    Chain esyn_in;
    SynthParams synth{50000.0, 2.0, 1.0, 0.05, 0.01, Vec3::UnitZ()};
    std::string esyn_out = "elements.csv";
    add_chain(esyn, esyn_in);
    esyn->add_option("--density", synth.density, "elements per unit volume")->capture_default_str();
    esyn->add_option("--lamella-scale", synth.lamella_scale)->capture_default_str();
    esyn->add_option("--matrix-scale", synth.matrix_scale)->capture_default_str();
    esyn->add_option("--noise", synth.noise)->capture_default_str();
    esyn->add_option("--strain", synth.strain)->capture_default_str();
    esyn->add_option("--seed", seed)->capture_default_str();
    esyn->add_option("--out", esyn_out)->capture_default_str();

    //-------------------------------------------------------- ingest-elements
    auto* ing = app.add_subcommand("ingest-elements", "phase-resolved strain energy density of element data");
    Chain ing_in;
    std::string ing_input, ing_out, ing_append, ing_marking = "im";
    double ing_kappa = 0.0;
    add_chain(ing, ing_in);
    ing->add_option("--input", ing_input, "element file (twinlab-elem/1)")->required()->check(CLI::ExistingFile);
    ing->add_option("--out", ing_out, "result JSON (default stdout)");
    ing->add_option("--append-tsed", ing_append, "append a row to this twinlab-tsed/1 file");
    ing->add_option("--kappa", ing_kappa)->capture_default_str();
    ing->add_option("--marking", ing_marking)->check(CLI::IsMember({"im", "ma"}))->capture_default_str();

    //---------------------------------------------------------------- regress
    auto* reg = app.add_subcommand("regress", "fit a regression model to a TSED table");
    std::string reg_input, reg_model = "m1", reg_out;
    std::vector<std::string> model_names;
    for (const auto& m : paper_models()) model_names.push_back(m.name);
    reg->add_option("--input", reg_input, "TSED table (twinlab-tsed/1)")->required()->check(CLI::ExistingFile);
    reg->add_option("--model", reg_model)->check(CLI::IsMember(model_names))->capture_default_str();
    reg->add_option("--out", reg_out, "coefficient CSV (default stdout)");

    //--------------------------------------------------------------- pipeline
    auto* pipe = app.add_subcommand("pipeline", "run every stage over the configured grid");
    std::string pipe_config, pipe_output;
    std::optional<std::uint64_t> pipe_seed;
    bool dry_run = false;
    std::optional<bool> reuse;
    pipe->add_option("--config", pipe_config, "configuration (twinlab-config/1)")->required()->check(CLI::ExistingFile);
    pipe->add_option("--seed", pipe_seed, "override the configured seed");
    pipe->add_option("--output", pipe_output, "override the configured output directory");
    pipe->add_flag("--dry-run", dry_run, "validate and print the plan without writing");
    pipe->add_flag("--reuse-tess,!--no-reuse-tess", reuse, "one tessellation for every variant");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    try {
        if (*tess) {
            const Box domain = Box::cube(-tess_margin, 1.0 + tess_margin);
            if (!(tess_margin >= 0.0)) throw Error(Errc::ConfigError, "margin must be nonnegative");
            Rng rng = substream(seed, "tess");
            std::vector<Vec3> pts;
            if (tess_n) {
                for (std::size_t i = 0; i < *tess_n; ++i) {
                    Vec3 x;
                    for (int a = 0; a < 3; ++a) x[a] = uniform(rng, domain.lo[a], domain.hi[a]);
                    pts.push_back(x);
                }
            } else {
                pts = poisson_generators(tess_lambda0, domain, rng);
            }
            const VolumeTargets targets =
                tess_targets == "lognormal"
                    ? lognormal_volume_targets(pts.size(), tess_sigma, domain.volume(), rng)
                    : gaussian_volume_targets(pts.size(), tess_mu, tess_sigma, domain.volume(), rng);
            LaguerreTessellation t;
            FitReport rep;
            fit_weights(pts, targets, domain, tess_tol, FitOptions{tess_iter}, &rep, &t);
            const fs::path out = output_path(tess_out);
            write_json(out, tess_to_json(t));
            const auto back = tess_from_json(read_json(out));
            const double err = max_relative_error(back.volumes, targets.values);
            std::cout << "cells " << back.size() << ", iterations " << rep.iterations
                      << ", max relative volume error " << err << "\n";
            if (err > tess_tol) {
                std::cerr << "exported tessellation exceeds the volume tolerance\n";
                return exit_stage;
            }
        } else if (*mark) {
            const auto t = load_tess(mark_tess);
            RunConfig c;
            c.seed = seed;
            const VariantSpec v{parse_marking(mark_marking), mark_kappa};
            if (v.marking == Marking::MovingAverage && v.kappa != 0.0)
                throw Error(Errc::ConfigError, "moving-average marking requires kappa = 0");
            write_json(output_path(mark_out), marks_to_json(run_mark_stage(c, *t, v), v.marking, v.kappa));
        } else if (*twin) {
            const auto t = load_tess(twin_tess);
            const auto marks = load_marks(twin_marks, *t);
            RunConfig c;
            c.psi1 = psi1;
            c.psi2 = psi2;
            c.hall_petch_orientation = !literal_orientation;
            c.eps_m = {twin_eps};
            c.validate();
            const TessStage s = tess_stage_from(t, c.window());
            const TwinTable table = run_twin_stage(c, s, marks, twin_eps);
            write_json(output_path(twin_out), twin_to_json(table));
            std::size_t n = 0;
            for (std::size_t i : s.hits.cells) n += table.states[i].decision;
            std::cout << "twinned " << n << " of " << s.hits.cells.size() << " cells hitting the window\n";
        } else if (*lam) {
            const auto t = load_tess(lam_in.tess);
            const auto tw = load_twin(lam_in.twin, *t);
            RunConfig c;
            c.seed = seed;
            c.method = lam_method == "growth" ? LamellaMethod::Growth : LamellaMethod::Annealing;
            const LamellaStage s = run_lamella_stage(c, *t, tw, lam_label);
            write_json(output_path(lam_out), lamellae_to_json(s.systems));
            std::cout << s.systems.size() << " lamellar systems";
            if (!s.unresolved.empty()) std::cout << ", " << s.unresolved.size() << " cells unresolved";
            std::cout << "\n";
        } else if (*nest) {
            const Loaded l = load_chain(nest_in);
            write_json(output_path(nest_out), nested_to_json(l.nested));
        } else if (*stats) {
            const Loaded l = load_chain(stats_in);
            RunConfig c;
            const TessStage s = tess_stage_from(l.tess, c.window());
            const VariantStats v = variant_stats(c, s, l.twin, l.lamellae, l.nested);
            const fs::path dir = output_path(stats_out);
            write_json(dir / "stats.json", stats_to_json(v));
            write_file(dir / "geometry.csv", geometry_to_csv(normalized_geometry(l.lamellae.systems)));
            const Vec3 d = unit(l.twin.params.d_l);
            write_file(dir / "ipf_before.csv", ipf_to_csv(ipf_dataset(l.marks, s.hits.cells, d)));
            write_file(dir / "ipf_after.csv", ipf_to_csv(ipf_dataset(l.nested, d)));
        } else if (*esyn) {
            const Loaded l = load_chain(esyn_in);
            Rng rng = substream(seed, "energy/cli");
            const auto el = synthesize_elements(l.nested, synth, rng);
            emit(esyn_out, elements_to_csv(el));
            std::cout << el.size() << " elements, w_total " << phase_tsed(el).w_total << "\n";
        } else if (*ing) {
            const Loaded l = load_chain(ing_in);
            auto el = elements_from_csv(read_file(ing_input));
            for (auto& r : el) r.phase = classify_phase(r, l.nested);
            const TsedResult res = phase_tsed(el);
            const auto opt = [](const std::optional<double>& x) { return x ? Json(*x) : Json(); };
            emit(ing_out, Json{{"eps_m", l.twin.eps_m},
                               {"n_elements", el.size()},
                               {"n_straddling", res.n_straddling},
                               {"w_total", res.w_total},
                               {"w_lamella", opt(res.w_lamella)},
                               {"w_matrix", opt(res.w_matrix)},
                               {"v_l", res.v_l},
                               {"v_m", res.v_m},
                               {"v_straddling", res.v_straddling}}
                              .dump(1) +
                              "\n");
            if (!ing_append.empty()) {
                const fs::path p = output_path(ing_append);
                std::vector<TsedRow> rows;
                if (fs::exists(p)) rows = tsed_from_csv(read_file(p));
                rows.push_back({l.twin.eps_m, ing_kappa, parse_marking(ing_marking), res.w_total,
                                res.w_lamella.value_or(std::nan("")), res.w_matrix.value_or(std::nan(""))});
                write_file(p, tsed_to_csv(rows));
            }
        } else if (*reg) {
            const auto rows = tsed_from_csv(read_file(reg_input));
            const FitResult f = fit_model(model_rows(rows, reg_model), paper_model(reg_model));
            emit(reg_out, coefficients_to_csv(f));
        } else if (*pipe) {
            RunConfig c = load_config(pipe_config);
            if (pipe_seed) c.seed = *pipe_seed;
            if (!pipe_output.empty()) c.output = pipe_output;
            if (reuse) c.reuse_tess = *reuse;
            c.output = output_path(c.output).string();
            c.validate();
            RunOptions opt;
            opt.dry_run = dry_run;
            opt.keep_nested = false;
            const PipelineResult r = run_pipeline(c, opt);
            if (dry_run) {
                std::cout << "configuration valid; " << r.plan.size() << " grid points, output " << c.output << "\n";
                for (const auto& p : r.plan) std::cout << "  " << p << "\n";
                return 0;
            }
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << r.variants.size() << " grid points written to " << c.output << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == Errc::ConfigError || e.code() == Errc::SchemaMismatch ? exit_config : exit_stage;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed input: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_stage;
    }
    return 0;
}
