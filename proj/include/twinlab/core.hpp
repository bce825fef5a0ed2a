// Shared vocabulary: linear algebra aliases, the axis-aligned box, the error
// type, seeded random substreams and a small deterministic parallel loop.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace twinlab {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double pi = 3.14159265358979323846;

//---------------------------------------------------------------------------//
// Errors
//---------------------------------------------------------------------------//
enum class Errc {
    InvalidArgument,
    InvalidSlab,
    OutOfRange,
    ZeroVector,
    IsolatedCell,
    DegenerateSum,
    DuplicateGenerators,
    NonConvergence,
    FractionOverflow,
    Infeasible,
    Unresolvable,
    VolumeMismatch,
    DegenerateData,
    OutsideDomain,
    EmptyPhase,
    RankDeficient,
    NotNested,
    ConfigError,
    SchemaMismatch,
    Io,
};

inline const char* errc_name(Errc e) {
    switch (e) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidSlab: return "InvalidSlab";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::IsolatedCell: return "IsolatedCell";
    case Errc::DegenerateSum: return "DegenerateSum";
    case Errc::DuplicateGenerators: return "DuplicateGenerators";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::FractionOverflow: return "FractionOverflow";
    case Errc::Infeasible: return "Infeasible";
    case Errc::Unresolvable: return "Unresolvable";
    case Errc::VolumeMismatch: return "VolumeMismatch";
    case Errc::DegenerateData: return "DegenerateData";
    case Errc::OutsideDomain: return "OutsideDomain";
    case Errc::EmptyPhase: return "EmptyPhase";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::NotNested: return "NotNested";
    case Errc::ConfigError: return "ConfigError";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::Io: return "Io";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

  private:
    Errc code_;
};

//---------------------------------------------------------------------------//
// Axis-aligned box
//---------------------------------------------------------------------------//
struct Box {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Ones();

    static Box unit() { return {Vec3::Zero(), Vec3::Ones()}; }
    static Box cube(double lo, double hi) { return {Vec3::Constant(lo), Vec3::Constant(hi)}; }

    bool nonempty() const { return (hi.array() > lo.array()).all(); }
    double volume() const { return nonempty() ? (hi - lo).prod() : 0.0; }
    double diagonal() const { return (hi - lo).norm(); }
    Vec3 center() const { return 0.5 * (lo + hi); }

    bool contains(const Vec3& x, double eps = 0.0) const {
        return (x.array() >= lo.array() - eps).all() && (x.array() <= hi.array() + eps).all();
    }
    bool contains(const Box& b, double eps = 0.0) const {
        return contains(b.lo, eps) && contains(b.hi, eps);
    }
    // Minimum distance from x to the boundary of the box (x assumed inside).
    double boundary_distance(const Vec3& x) const {
        return std::min((x - lo).minCoeff(), (hi - x).minCoeff());
    }
};

//---------------------------------------------------------------------------//
// Random streams
//---------------------------------------------------------------------------//
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_label(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Independent stream keyed by (root seed, stage label, id). Streams for
// different keys do not depend on evaluation order.
inline Rng substream(std::uint64_t root, std::string_view stage, std::uint64_t id = 0) {
    std::uint64_t s = splitmix64(root ^ splitmix64(hash_label(stage)));
    s = splitmix64(s ^ splitmix64(id + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{std::uint32_t(s), std::uint32_t(s >> 32), std::uint32_t(id), std::uint32_t(id >> 32)};
    return Rng(seq);
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double a, double b) { return a + (b - a) * uniform01(rng); }

// Marsaglia polar method, no cached second variate.
inline double standard_normal(Rng& rng) {
    for (;;) {
        const double u = 2.0 * uniform01(rng) - 1.0;
        const double v = 2.0 * uniform01(rng) - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

inline long poisson(Rng& rng, double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<long> dist(mean);
    return dist(rng);
}

//---------------------------------------------------------------------------//
// Deterministic parallel loop: each index is processed exactly once and
// results are written by index, so scheduling never changes the output.
//---------------------------------------------------------------------------//
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(hw, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += workers) body(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline Vec3 unit(const Vec3& v) {
    const double n = v.norm();
    if (!(n > 0.0)) throw Error(Errc::ZeroVector, "cannot normalize a zero vector");
    return std::abs(n - 1.0) <= 1e-15 ? v : Vec3(v / n);
}

// Orthonormal pair (u, v) with u x v = n for a unit vector n.
inline std::pair<Vec3, Vec3> orthonormal_basis(const Vec3& n) {
    const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 u = n.cross(helper).normalized();
    return {u, n.cross(u)};
}

} // namespace twinlab
