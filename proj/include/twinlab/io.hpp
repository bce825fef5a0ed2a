// File formats: tessellation, marks, twin states, lamellar systems and
// nested tessellations as versioned JSON; element records, strain energy
// tables and coefficient tables as CSV.
#pragma once

#include "twinlab/energy.hpp"
#include "twinlab/lamellae.hpp"
#include "twinlab/regression.hpp"
#include "twinlab/stats.hpp"
#include "twinlab/tessellation.hpp"
#include "twinlab/twinning.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace twinlab {

using Json = nlohmann::ordered_json;

inline constexpr const char* tess_schema = "twinlab-tess/1";
inline constexpr const char* marks_schema = "twinlab-marks/1";
inline constexpr const char* twin_schema = "twinlab-twin/1";
inline constexpr const char* lamellae_schema = "twinlab-lamellae/1";
inline constexpr const char* nested_schema = "twinlab-nested/1";
inline constexpr const char* elem_schema = "twinlab-elem/1";
inline constexpr const char* tsed_schema = "twinlab-tsed/1";

//---------------------------------------------------------------------------//
// Helpers
//---------------------------------------------------------------------------//

/// Shortest representation that reads back to the same double.
inline std::string fmt_double(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s) {
    double x = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    const auto r = std::from_chars(b, e, x);
    if (r.ec != std::errc() || r.ptr != e) throw Error(Errc::SchemaMismatch, "not a number: '" + s + "'");
    return x;
}

inline Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from(const Json& j) {
    if (!j.is_array() || j.size() != 3) throw Error(Errc::SchemaMismatch, "expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Json to_json(const Orientation& g) {
    const auto c = g.coeffs();
    return Json::array({c[0], c[1], c[2], c[3]});
}

inline Orientation orientation_from(const Json& j) {
    if (!j.is_array() || j.size() != 4) throw Error(Errc::SchemaMismatch, "expected a quaternion (w, x, y, z)");
    return Orientation::from_quaternion(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

inline void check_schema(const Json& j, const char* expected) {
    if (!j.is_object() || !j.contains("schema") || j["schema"] != expected)
        throw Error(Errc::SchemaMismatch, std::string("expected schema ") + expected);
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + p.string());
    out << text;
    if (!out) throw Error(Errc::Io, "write failed for " + p.string());
}

inline Json read_json(const std::filesystem::path& p) {
    try {
        return Json::parse(read_file(p));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::SchemaMismatch, p.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& p, const Json& j) { write_file(p, j.dump(1) + "\n"); }

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

/// Lines of a CSV file whose first line is "# <schema>" and second line the header.
inline std::vector<std::vector<std::string>> read_csv(const std::string& text, const char* schema,
                                                     const std::vector<std::string>& header) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != std::string("# ") + schema)
        throw Error(Errc::SchemaMismatch, std::string("expected CSV schema line '# ") + schema + "'");
    if (!std::getline(in, line) || split_csv(line) != header)
        throw Error(Errc::SchemaMismatch, std::string("unexpected header in ") + schema + " file");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto f = split_csv(line);
        if (f.size() != header.size())
            throw Error(Errc::SchemaMismatch, "row " + std::to_string(rows.size() + 1) + " has " +
                                                  std::to_string(f.size()) + " fields");
        rows.push_back(std::move(f));
    }
    return rows;
}

inline std::string csv_header(const char* schema, const std::vector<std::string>& header) {
    std::string s = std::string("# ") + schema + "\n";
    for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
    return s + "\n";
}

//---------------------------------------------------------------------------//
// Tessellation
//---------------------------------------------------------------------------//

inline Json tess_to_json(const LaguerreTessellation& t) {
    Json j;
    j["schema"] = tess_schema;
    j["domain"] = {{"lo", to_json(t.domain.lo)}, {"hi", to_json(t.domain.hi)}};
    Json gens = Json::array();
    for (std::size_t i = 0; i < t.size(); ++i) {
        Json n = Json::array();
        for (std::size_t k : t.adjacency[i]) n.push_back(k);
        gens.push_back({{"id", i}, {"x", to_json(t.generators[i].x)}, {"w", t.generators[i].w},
                        {"volume", t.volumes[i]}, {"neighbours", n}});
    }
    j["cells"] = gens;
    return j;
}

/// Rebuilds the cells from generators and weights and checks the stored volumes.
inline LaguerreTessellation tess_from_json(const Json& j) {
    check_schema(j, tess_schema);
    const Box domain{vec3_from(j.at("domain").at("lo")), vec3_from(j.at("domain").at("hi"))};
    std::vector<WeightedGenerator> g;
    std::vector<double> vols;
    for (const auto& c : j.at("cells")) {
        if (c.at("id").get<std::size_t>() != g.size()) throw Error(Errc::SchemaMismatch, "cell ids must be 0..n-1 in order");
        g.push_back({vec3_from(c.at("x")), c.at("w").get<double>()});
        vols.push_back(c.at("volume").get<double>());
    }
    LaguerreTessellation t = build_laguerre(g, domain);
    for (std::size_t i = 0; i < vols.size(); ++i)
        if (std::abs(t.volumes[i] - vols[i]) > 1e-9 * domain.volume())
            throw Error(Errc::SchemaMismatch, "stored volume of cell " + std::to_string(i) + " does not match its generators");
    return t;
}

//---------------------------------------------------------------------------//
// Marks and twin states
//---------------------------------------------------------------------------//

inline Json marks_to_json(const std::vector<Orientation>& marks, Marking m, double kappa) {
    Json j;
    j["schema"] = marks_schema;
    j["marking"] = marking_name(m);
    j["kappa"] = kappa;
    Json a = Json::array();
    for (const auto& g : marks) a.push_back(to_json(g));
    j["marks"] = a;
    return j;
}

inline std::vector<Orientation> marks_from_json(const Json& j) {
    check_schema(j, marks_schema);
    std::vector<Orientation> out;
    for (const auto& q : j.at("marks")) out.push_back(orientation_from(q));
    return out;
}

struct TwinTable {
    double eps_m = 0.0;
    TwinDecisionParams params;
    std::vector<std::size_t> ids;
    std::vector<TwinState> states; // one per mother cell; cells not in ids are untwinned
};

inline TwinStatus parse_twin_status(const std::string& s) {
    for (auto t : {TwinStatus::Untwinned, TwinStatus::Twinned, TwinStatus::Overflow})
        if (s == twin_status_name(t)) return t;
    throw Error(Errc::SchemaMismatch, "unknown twin status " + s);
}

inline Json twin_to_json(const TwinTable& t) {
    Json j;
    j["schema"] = twin_schema;
    j["eps_m"] = t.eps_m;
    j["psi1"] = t.params.psi1;
    j["psi2"] = t.params.psi2;
    j["v_min"] = t.params.v_min;
    j["v_max"] = t.params.v_max;
    j["loading"] = to_json(t.params.d_l);
    j["hall_petch_orientation"] = t.params.hall_petch_orientation;
    j["n_cells"] = t.states.size();
    Json a = Json::array();
    for (std::size_t id : t.ids) {
        const TwinState& s = t.states.at(id);
        a.push_back({{"id", id}, {"propensity", s.propensity}, {"r_bar", s.r_bar}, {"n", to_json(s.n_vec)},
                     {"e", s.e_scalar}, {"v_t", s.v_t}, {"psi_crit", s.psi_crit}, {"decision", s.decision},
                     {"status", twin_status_name(s.status)}, {"reoriented", to_json(s.reoriented)}});
    }
    j["cells"] = a;
    return j;
}

inline TwinTable twin_from_json(const Json& j) {
    check_schema(j, twin_schema);
    TwinTable t;
    t.eps_m = j.at("eps_m").get<double>();
    t.params.psi1 = j.at("psi1").get<double>();
    t.params.psi2 = j.at("psi2").get<double>();
    t.params.v_min = j.at("v_min").get<double>();
    t.params.v_max = j.at("v_max").get<double>();
    t.params.d_l = vec3_from(j.at("loading"));
    t.params.hall_petch_orientation = j.at("hall_petch_orientation").get<bool>();
    t.states.resize(j.at("n_cells").get<std::size_t>());
    for (const auto& c : j.at("cells")) {
        const std::size_t id = c.at("id").get<std::size_t>();
        TwinState& s = t.states.at(id);
        s.propensity = c.at("propensity").get<double>();
        s.r_bar = c.at("r_bar").get<std::size_t>();
        s.n_vec = vec3_from(c.at("n"));
        s.e_scalar = c.at("e").get<double>();
        s.v_t = c.at("v_t").get<double>();
        s.psi_crit = c.at("psi_crit").get<double>();
        s.decision = c.at("decision").get<bool>();
        s.status = parse_twin_status(c.at("status").get<std::string>());
        s.reoriented = orientation_from(c.at("reoriented"));
        t.ids.push_back(id);
    }
    return t;
}

//---------------------------------------------------------------------------//
// Lamellar systems
//---------------------------------------------------------------------------//

inline Json lamellae_to_json(const std::map<std::size_t, LamellarSystem>& systems) {
    Json j;
    j["schema"] = lamellae_schema;
    Json a = Json::array();
    for (const auto& [id, s] : systems) {
        Json l = Json::array();
        for (const auto& x : s.lamellae) l.push_back({{"d", x.d}, {"w", x.w}, {"volume", x.volume}});
        a.push_back({{"cell_id", id}, {"method", s.method == LamellaMethod::Growth ? "growth" : "anneal"},
                     {"direction", to_json(s.direction)}, {"alpha", s.feret.alpha}, {"beta", s.feret.beta},
                     {"rho", s.feret.rho}, {"anchor", to_json(s.feret.anchor)}, {"target_fraction", s.target_fraction},
                     {"achieved_fraction", s.achieved_fraction}, {"attempts", s.attempts}, {"lamellae", l}});
    }
    j["systems"] = a;
    return j;
}

/// Lamella polytopes are re-clipped from the mother cells.
inline std::map<std::size_t, LamellarSystem> lamellae_from_json(const Json& j, const LaguerreTessellation& t) {
    check_schema(j, lamellae_schema);
    std::map<std::size_t, LamellarSystem> out;
    for (const auto& c : j.at("systems")) {
        LamellarSystem s;
        s.cell_id = c.at("cell_id").get<std::size_t>();
        if (s.cell_id >= t.size()) throw Error(Errc::SchemaMismatch, "lamellar system refers to a missing cell");
        const std::string m = c.at("method").get<std::string>();
        if (m != "growth" && m != "anneal") throw Error(Errc::SchemaMismatch, "unknown lamella method " + m);
        s.method = m == "growth" ? LamellaMethod::Growth : LamellaMethod::Annealing;
        s.direction = vec3_from(c.at("direction"));
        s.feret.direction = s.direction;
        s.feret.alpha = c.at("alpha").get<double>();
        s.feret.beta = c.at("beta").get<double>();
        s.feret.rho = c.at("rho").get<double>();
        s.feret.anchor = vec3_from(c.at("anchor"));
        s.target_fraction = c.at("target_fraction").get<double>();
        s.achieved_fraction = c.at("achieved_fraction").get<double>();
        s.attempts = c.at("attempts").get<int>();
        for (const auto& l : c.at("lamellae")) {
            Lamella x;
            x.d = l.at("d").get<double>();
            x.w = l.at("w").get<double>();
            x.volume = l.at("volume").get<double>();
            x.polytope = clip_slab(t.cells[s.cell_id], s.feret, x.d - x.w, x.d + x.w);
            s.lamellae.push_back(std::move(x));
        }
        out[s.cell_id] = std::move(s);
    }
    return out;
}

//---------------------------------------------------------------------------//
// Nested tessellation summary
//---------------------------------------------------------------------------//

inline Json nested_to_json(const NestedTessellation& n) {
    Json j;
    j["schema"] = nested_schema;
    j["window"] = {{"lo", to_json(n.window.lo)}, {"hi", to_json(n.window.hi)}};
    j["total_volume"] = n.total_volume();
    Json a = Json::array();
    for (std::size_t k = 0; k < n.subcells.size(); ++k) {
        const Subcell& s = n.subcells[k];
        a.push_back({{"index", k}, {"cell_id", s.cell_id}, {"phase", phase_name(s.phase)},
                     {"lamella_index", s.lamella_index}, {"volume", s.volume}, {"mark", to_json(s.mark)}});
    }
    j["subcells"] = a;
    return j;
}

//---------------------------------------------------------------------------//
// CSV tables
//---------------------------------------------------------------------------//

inline const std::vector<std::string>& elem_header() {
    static const std::vector<std::string> h{"element_id", "cx",  "cy",  "cz",  "volume", "s11", "s22", "s33", "s12",
                                            "s13",        "s23", "e11", "e22", "e33",    "e12", "e13", "e23"};
    return h;
}

inline std::string elements_to_csv(const std::vector<ElementRecord>& recs) {
    std::string s = csv_header(elem_schema, elem_header());
    static const int idx[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
    for (const auto& r : recs) {
        s += std::to_string(r.element_id);
        for (int a = 0; a < 3; ++a) s += "," + fmt_double(r.centroid[a]);
        s += "," + fmt_double(r.volume);
        for (const auto& ij : idx) s += "," + fmt_double(r.stress(ij[0], ij[1]));
        for (const auto& ij : idx) s += "," + fmt_double(r.strain(ij[0], ij[1]));
        s += "\n";
    }
    return s;
}

/// Phases are not part of the file; they are assigned by classify_phase.
inline std::vector<ElementRecord> elements_from_csv(const std::string& text) {
    static const int idx[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
    std::vector<ElementRecord> out;
    for (const auto& f : read_csv(text, elem_schema, elem_header())) {
        ElementRecord r;
        const double id = parse_double(f[0]);
        if (!(id >= 0.0) || id != std::floor(id)) throw Error(Errc::SchemaMismatch, "element_id must be a nonnegative integer");
        r.element_id = std::size_t(id);
        for (int a = 0; a < 3; ++a) r.centroid[a] = parse_double(f[std::size_t(1 + a)]);
        r.volume = parse_double(f[4]);
        for (int k = 0; k < 6; ++k) {
            r.stress(idx[k][0], idx[k][1]) = r.stress(idx[k][1], idx[k][0]) = parse_double(f[std::size_t(5 + k)]);
            r.strain(idx[k][0], idx[k][1]) = r.strain(idx[k][1], idx[k][0]) = parse_double(f[std::size_t(11 + k)]);
        }
        r.validate();
        out.push_back(r);
    }
    return out;
}

inline const std::vector<std::string>& tsed_header() {
    static const std::vector<std::string> h{"epsilon_m", "kappa", "marking", "w_total", "w_lamella", "w_matrix"};
    return h;
}

/// Missing phase energies are written as empty fields and read back as NaN.
inline std::string tsed_to_csv(const std::vector<TsedRow>& rows) {
    std::string s = csv_header(tsed_schema, tsed_header());
    const auto num = [](double x) { return std::isnan(x) ? std::string() : fmt_double(x); };
    for (const auto& r : rows)
        s += fmt_double(r.eps_m) + "," + fmt_double(r.kappa) + "," + marking_name(r.marking) + "," + num(r.w_total) +
             "," + num(r.w_lamella) + "," + num(r.w_matrix) + "\n";
    return s;
}

inline std::vector<TsedRow> tsed_from_csv(const std::string& text) {
    std::vector<TsedRow> out;
    const auto num = [](const std::string& s) { return s.empty() ? std::nan("") : parse_double(s); };
    for (const auto& f : read_csv(text, tsed_schema, tsed_header())) {
        TsedRow r;
        r.eps_m = parse_double(f[0]);
        r.kappa = parse_double(f[1]);
        try {
            r.marking = parse_marking(f[2]);
        } catch (const Error& e) {
            throw Error(Errc::SchemaMismatch, e.what());
        }
        r.w_total = num(f[3]);
        r.w_lamella = num(f[4]);
        r.w_matrix = num(f[5]);
        out.push_back(r);
    }
    return out;
}

/// coefficient, estimate, std_error, t_value, p_value; p to four decimals.
inline std::string coefficients_to_csv(const FitResult& f) {
    std::string s = "coefficient,estimate,std_error,t_value,p_value\n";
    char p[32];
    for (std::size_t j = 0; j < f.names.size(); ++j) {
        const auto k = Eigen::Index(j);
        std::snprintf(p, sizeof p, "%.4f", f.p_values[k]);
        s += f.names[j] + "," + fmt_double(f.estimates[k]) + "," + fmt_double(f.std_errors[k]) + "," +
             fmt_double(f.t_values[k]) + "," + p + "\n";
    }
    return s;
}

inline std::string ipf_to_csv(const std::vector<IpfRecord>& r) {
    std::string s = "id,cell_id,x,y,phase\n";
    for (const auto& p : r)
        s += std::to_string(p.id) + "," + std::to_string(p.cell_id) + "," + fmt_double(p.x) + "," + fmt_double(p.y) +
             "," + phase_name(p.phase) + "\n";
    return s;
}

inline std::string geometry_to_csv(const std::vector<LamellaGeometry>& g) {
    std::string s = "cell_id,k,d_tilde,w_tilde,two_lamellae\n";
    for (const auto& r : g)
        s += std::to_string(r.cell_id) + "," + std::to_string(r.k) + "," + fmt_double(r.d_tilde) + "," +
             fmt_double(r.w_tilde) + "," + (r.two_lamellae ? "1" : "0") + "\n";
    return s;
}

} // namespace twinlab
