#include "twinlab/orientation.hpp"

#include <gtest/gtest.h>

using namespace twinlab;

namespace {

// Two-sample Kolmogorov-Smirnov p-value (asymptotic distribution).
double ks_pvalue(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    const double ne = double(a.size()) * b.size() / double(a.size() + b.size());
    const double lam = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
    return std::clamp(p, 0.0, 1.0);
}

double brute_disorientation(const Orientation& a, const Orientation& b) {
    // Angle of each candidate from its quaternion, independent of the trace route.
    double best = 10.0;
    for (const Quat& r : cubic_group().quaternions) {
        const Quat d = a.quaternion().conjugate() * r * b.quaternion();
        best = std::min(best, 2.0 * std::acos(std::min(1.0, std::abs(d.w()))));
    }
    return best;
}

} // namespace

TEST(CubicGroup, HasTwentyFourElementsIdentityFirst) {
    const auto& g = cubic_group();
    EXPECT_EQ(g.size(), 24u);
    EXPECT_TRUE(g.elements.front().isIdentity());
    for (const Mat3& m : g.elements) {
        EXPECT_NEAR(m.determinant(), 1.0, 1e-15);
        // Signed permutation: every row has a single +-1 entry.
        for (int r = 0; r < 3; ++r) EXPECT_EQ(m.row(r).cwiseAbs().sum(), 1.0);
    }
}

TEST(CubicGroup, ClosedUnderComposition) {
    const auto& g = cubic_group();
    int products = 0;
    for (const Mat3& a : g.elements)
        for (const Mat3& b : g.elements) {
            EXPECT_TRUE(g.find(a * b, 1e-12).has_value());
            ++products;
        }
    EXPECT_EQ(products, 576);
}

TEST(CubicGroup, OrderIsLexicographicAfterIdentity) {
    const auto& g = cubic_group();
    for (std::size_t k = 2; k < g.size(); ++k) {
        const Mat3& a = g.elements[k - 1];
        const Mat3& b = g.elements[k];
        bool less = false;
        Eigen::Matrix<double, 3, 3, Eigen::RowMajor> ra = a, rb = b;
        for (int i = 0; i < 9; ++i)
            if (ra.data()[i] != rb.data()[i]) {
                less = ra.data()[i] < rb.data()[i];
                break;
            }
        EXPECT_TRUE(less) << "elements " << k - 1 << ", " << k;
    }
}

TEST(Orientation, InvariantsAndRoundTrip) {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const Orientation g = sample_uniform(rng);
        const Mat3& m = g.matrix();
        EXPECT_TRUE((m * m.transpose()).isApprox(Mat3::Identity(), 1e-10));
        EXPECT_NEAR(m.determinant(), 1.0, 1e-10);
        EXPECT_NEAR(g.quaternion().norm(), 1.0, 1e-12);
        EXPECT_GE(g.quaternion().w(), 0.0);
        const Orientation back = Orientation::from_matrix(m);
        EXPECT_LT((back.matrix() - m).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((back.coeffs() - g.coeffs()).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Orientation, RejectsImproperMatrix) {
    EXPECT_THROW(Orientation::from_matrix(-Mat3::Identity()), Error);
}

TEST(Disorientation, ZeroForEquivalentOrientations) {
    Rng rng(2);
    const Orientation g = sample_uniform(rng);
    EXPECT_NEAR(disorientation(g, g), 0.0, 1e-7);
    for (const Quat& r : cubic_group().quaternions) EXPECT_NEAR(disorientation(g, r * g), 0.0, 1e-7);
}

TEST(Disorientation, BoundedAndSymmetricAgainstEnumeration) {
    Rng rng(3);
    double max_seen = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Orientation a = sample_uniform(rng), b = sample_uniform(rng);
        const double d = disorientation(a, b);
        EXPECT_NEAR(d, brute_disorientation(a, b), 1e-7);
        EXPECT_NEAR(d, disorientation(b, a), 1e-12);
        max_seen = std::max(max_seen, d);
    }
    EXPECT_LE(max_seen, 1.0969);
    EXPECT_GT(max_seen, 0.8);
}

TEST(Tilt, KnownValues) {
    const Orientation id;
    EXPECT_NEAR(tilt(id, Vec3::UnitZ(), Vec3::UnitZ()), 1.0, 1e-15);
    EXPECT_NEAR(tilt(id, Vec3(1, 1, 1), Vec3::UnitZ()), 1.0 / std::sqrt(3.0), 1e-15);
    EXPECT_THROW(tilt(id, Vec3::Zero(), Vec3::UnitZ()), Error);
}

TEST(Tilt, InvariantUnderGroupAction) {
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const Orientation g = sample_uniform(rng);
        const double t = tilt(g, Vec3(1, 1, 1), Vec3::UnitZ());
        for (const Quat& r : cubic_group().quaternions) EXPECT_NEAR(tilt(r * g, Vec3(1, 1, 1), Vec3::UnitZ()), t, 1e-12);
    }
}

TEST(Sampling, HaarTraceExpectation) {
    Rng rng(5);
    // E[tr] = 0 and E[tr^2] = 1 under the Haar measure (character orthogonality).
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double t = sample_uniform(rng).matrix().trace();
        sum += t;
        sum2 += t * t;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.02);
    EXPECT_NEAR(sum2 / n, 1.0, 0.02);
}

TEST(Sampling, KappaZeroMatchesUniformInDistribution) {
    Rng a(6), b(7);
    std::vector<double> ta, tb;
    const OdfParams p{0.0, Vec3::UnitZ(), Vec3(1, 1, 1)};
    for (int i = 0; i < 5000; ++i) {
        ta.push_back(tilt(sample_uniform(a), p.v, p.u));
        tb.push_back(tilt(sample_odf(p, b), p.v, p.u));
    }
    EXPECT_GT(ks_pvalue(ta, tb), 0.01);
}

TEST(Sampling, TextureRaisesMeanTilt) {
    Rng rng(8);
    const auto mean_tilt = [&](double kappa, int n) {
        const OdfParams p{kappa, Vec3::UnitZ(), Vec3(1, 1, 1)};
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double t = tilt(sample_odf(p, rng), p.v, p.u);
            s += t;
            s2 += t * t;
        }
        const double m = s / n;
        return std::pair{m, std::sqrt((s2 / n - m * m) / n)};
    };
    const auto [m0, se0] = mean_tilt(0.0, 2000);
    const auto [m10, se10] = mean_tilt(10.0, 2000);
    const auto [m30, se30] = mean_tilt(30.0, 2000);
    EXPECT_GT(m30, m0 + 0.1);
    EXPECT_GE(m10 + 2 * std::hypot(se0, se10), m0);
    EXPECT_GE(m30 + 2 * std::hypot(se10, se30), m10);
}

TEST(MovingAverage, ConstantFieldIsFixed) {
    Rng rng(9);
    const Orientation g = sample_uniform(rng);
    std::vector<Orientation> marks;
    for (const Quat& r : cubic_group().quaternions) marks.push_back(r * g); // same class, different matrices
    std::vector<std::vector<std::size_t>> adj(marks.size());
    for (std::size_t i = 0; i < marks.size(); ++i)
        for (std::size_t j = 0; j < marks.size(); ++j)
            if (i != j) adj[i].push_back(j);
    const auto out = moving_average_marks(adj, marks);
    const Quat rep = fundamental_representative(g);
    for (const auto& o : out) {
        EXPECT_LT((o.coeffs() - wxyz(canonical_sign(rep))).norm(), 1e-10);
        EXPECT_LT(disorientation(o, g), 1e-6);
    }
}

TEST(MovingAverage, SingleNeighbourCopiesRepresentative) {
    Rng rng(10);
    const std::vector<Orientation> marks{sample_uniform(rng), sample_uniform(rng)};
    const auto out = moving_average_marks({{1}, {0}}, marks);
    EXPECT_LT((out[0].coeffs() - wxyz(fundamental_representative(marks[1]))).norm(), 1e-12);
    EXPECT_LT((out[1].coeffs() - wxyz(fundamental_representative(marks[0]))).norm(), 1e-12);
}

TEST(MovingAverage, ContractsSmallPerturbations) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 b_axis = Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng)).normalized();
        const Orientation base = Orientation::from_quaternion(Quat(Eigen::AngleAxisd(0.4 * uniform01(rng), b_axis)));
        std::vector<Orientation> marks{base};
        for (int k = 0; k < 3; ++k) {
            const Vec3 axis = Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng)).normalized();
            marks.push_back(Orientation::from_quaternion(
                base.quaternion() * Quat(Eigen::AngleAxisd(0.05 * uniform01(rng), axis))));
        }
        const auto out = moving_average_marks({{1, 2, 3}, {0}, {0}, {0}}, marks);
        double spread = 0.0;
        for (int a = 1; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) spread = std::max(spread, disorientation(marks[a], marks[b]));
        EXPECT_LT(disorientation(out[0], base), spread);
    }
}

TEST(MovingAverage, Errors) {
    const std::vector<Orientation> marks{Orientation{}, Orientation{}};
    try {
        moving_average_marks({{1}, {}}, marks);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::IsolatedCell);
    }
    // Two representatives that cancel exactly.
    const Orientation a = Orientation::from_quaternion(std::sqrt(0.5), 0, 0, std::sqrt(0.5));
    EXPECT_NO_THROW(moving_average_marks({{1}, {0}}, {a, a}));
}

TEST(Ipf, CornersAndFolding) {
    const Orientation id;
    EXPECT_TRUE(ipf_coordinates(id, Vec3::UnitZ()).isApprox(ipf_corner_001()));
    // Rotation carrying (0,0,1) onto (1,1,1)/sqrt(3).
    const Quat q = Quat::FromTwoVectors(Vec3::UnitZ(), Vec3(1, 1, 1).normalized());
    const Orientation g = Orientation::from_quaternion(q);
    EXPECT_LT((ipf_coordinates(g, Vec3::UnitZ()) - ipf_corner_111()).norm(), 1e-12);

    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const Orientation h = sample_uniform(rng);
        const Eigen::Vector2d p = ipf_coordinates(h, Vec3::UnitZ());
        EXPECT_GE(p.x(), p.y() - 1e-15);
        EXPECT_GE(p.y(), -1e-15);
        for (const Quat& r : cubic_group().quaternions)
            EXPECT_LT((ipf_coordinates(r * h, Vec3::UnitZ()) - p).norm(), 1e-10);
    }
}
