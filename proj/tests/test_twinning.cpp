#include "twinlab/twinning.hpp"

#include <gtest/gtest.h>

using namespace twinlab;

namespace {

const TwinningSystem sys = TwinningSystem::paper_114();
const Vec3 dl = Vec3::UnitZ();

// Independent re-implementation via explicit rotation of the loading axis.
double brute_propensity(const Orientation& g) {
    double best = -1.0;
    for (const Mat3& r : cubic_group().elements) {
        // Rotate the loading direction into the frame of the symmetry image instead.
        const Vec3 d = r.transpose() * g.matrix() * dl;
        best = std::max(best, sys.n1.dot(d) * sys.a1.dot(d));
    }
    return best;
}

} // namespace

TEST(TwinningSystem, Constants114) {
    EXPECT_NO_THROW(sys.validate());
    EXPECT_NEAR(sys.beta_tw * 180.0 / pi, 19.4712206, 1e-6);
    EXPECT_NEAR(sys.shear_s, 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(sys.n1.dot(sys.a1), 0.0, 1e-15);
}

TEST(Schmid, ClosedFormCases) {
    // Rotation taking the specimen axis onto n1: loading along the plane normal.
    const auto onto = [](const Vec3& target) {
        return Orientation::from_quaternion(Quat::FromTwoVectors(dl, target));
    };
    EXPECT_NEAR(schmid_factor(onto(sys.n1), sys.a1, sys.n1, dl), 0.0, 1e-15);
    EXPECT_NEAR(schmid_factor(onto((sys.n1 + sys.a1).normalized()), sys.a1, sys.n1, dl), 0.5, 1e-15);
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double c = schmid_factor(sample_uniform(rng), sys.a1, sys.n1, dl);
        EXPECT_GE(c, -0.5);
        EXPECT_LE(c, 0.5);
    }
}

TEST(Propensity, EnumerationAndInvariance) {
    Rng rng(2);
    for (int i = 0; i < 2000; ++i) {
        const Orientation g = sample_uniform(rng);
        const Propensity p = propensity(g, sys, dl);
        EXPECT_DOUBLE_EQ(p.psi, brute_propensity(g));
        EXPECT_GE(p.psi, schmid_factor(g, sys.a1, sys.n1, dl));
        const Mat3& r = cubic_group().elements[p.r_bar];
        EXPECT_NEAR(schmid_factor(g, r * sys.a1, r * sys.n1, dl), p.psi, 1e-15);
        // Closed form with integer vectors.
        const Vec3 gd = g.matrix() * dl;
        EXPECT_NEAR((r * Vec3(-4, 1, 1)).dot(gd) * (r * Vec3(1, 2, 2)).dot(gd) / (3 * std::sqrt(18.0)), p.psi, 1e-14);
        for (const Quat& q : cubic_group().quaternions) EXPECT_NEAR(propensity(q * g, sys, dl).psi, p.psi, 1e-12);
    }
}

TEST(Propensity, RangeAndUniformHistogram) {
    Rng rng(3);
    int above = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const double psi = propensity(sample_uniform(rng), sys, dl).psi;
        EXPECT_GT(psi, 0.0);
        EXPECT_LE(psi, 0.5 + 1e-15);
        above += psi > 0.25;
    }
    EXPECT_GT(double(above) / n, 0.9);
}

TEST(Propensity, TieGoesToSmallestIndex) {
    const Propensity p = propensity(Orientation{}, sys, dl);
    EXPECT_TRUE(p.tie);
    const Vec3 gd = dl;
    for (std::size_t k = 0; k < p.r_bar; ++k) {
        const Mat3& r = cubic_group().elements[k];
        EXPECT_LT((r * sys.n1).dot(gd) * (r * sys.a1).dot(gd), p.psi);
    }
}

TEST(TwinNormal, IdentityAndConsistency) {
    EXPECT_TRUE(twin_normal(Orientation{}, sys, 0).isApprox(Vec3(-4, 1, 1) / std::sqrt(18.0), 1e-15));
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const Orientation g = sample_uniform(rng);
        const auto p = propensity(g, sys, dl);
        const Vec3 n = twin_normal(g, sys, p.r_bar);
        EXPECT_NEAR(n.norm(), 1.0, 1e-12);
        EXPECT_LT((g.matrix() * n - cubic_group().elements[p.r_bar] * sys.n1).norm(), 1e-12);
    }
}

TEST(Reorientation, InvolutionAxisAndConstantDisorientation) {
    Rng rng(5);
    // The misorientation between parent and twin is fixed: compute it once by brute force.
    const Mat3 rt0 = twin_rotation(sys, 0);
    double constant = 10.0;
    for (const Mat3& r : cubic_group().elements)
        constant = std::min(constant, std::acos(std::clamp(0.5 * ((r * rt0).trace() - 1.0), -1.0, 1.0)));
    for (int i = 0; i < 200; ++i) {
        const Orientation g = sample_uniform(rng);
        const auto p = propensity(g, sys, dl);
        const Mat3 rt = twin_rotation(sys, p.r_bar);
        EXPECT_TRUE((rt * rt).isApprox(Mat3::Identity(), 1e-12));
        EXPECT_NEAR(rt.determinant(), 1.0, 1e-12);
        const Vec3 abar = cubic_group().elements[p.r_bar] * sys.a1;
        EXPECT_LT((rt * abar - abar).norm(), 1e-12);
        EXPECT_NEAR(disorientation(g, reorientation(sys, p.r_bar, g)), constant, 1e-7);
    }
}

TEST(TwinStrain, ZeroShearBoundAndEigenvalues) {
    TwinningSystem zero = sys;
    zero.shear_s = 0.0;
    const auto z = twin_strain(Orientation{}, zero, 0, dl);
    EXPECT_EQ(z.e_l, Mat3::Zero());
    EXPECT_EQ(z.e_scalar, 0.0);

    const double s = sys.shear_s;
    const double lam_lo = (s * s - s * std::sqrt(s * s + 4)) / 4, lam_hi = (s * s + s * std::sqrt(s * s + 4)) / 4;
    Rng rng(6);
    double max_e = -1.0;
    for (int i = 0; i < 10000; ++i) {
        const Orientation g = sample_uniform(rng);
        const auto p = propensity(g, sys, dl);
        const auto st = twin_strain(g, sys, p.r_bar, dl);
        EXPECT_LE(st.e_scalar, 0.5 + 1e-12);
        max_e = std::max(max_e, st.e_scalar);
        if (i < 50) {
            EXPECT_TRUE(st.e_l.isApprox(st.e_l.transpose(), 1e-15));
            Eigen::SelfAdjointEigenSolver<Mat3> es(st.e_l);
            EXPECT_NEAR(es.eigenvalues()[0], lam_lo, 1e-12);
            EXPECT_NEAR(es.eigenvalues()[1], 0.0, 1e-12);
            EXPECT_NEAR(es.eigenvalues()[2], lam_hi, 1e-12);
        }
    }
    EXPECT_GT(max_e, 0.45);
}

TEST(VolumeFraction, Arithmetic) {
    EXPECT_NEAR(twin_volume_fraction(0.1, 0.5), 0.2, 1e-15);
    EXPECT_NEAR(twin_volume_fraction(0.2, 0.4), 0.5, 1e-15);
    try {
        twin_volume_fraction(0.1, 0.05);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::FractionOverflow);
    }
}

TEST(CriticalPropensity, EndpointsMidpointMonotone) {
    TwinDecisionParams p;
    p.v_min = 0.001;
    p.v_max = 0.05;
    EXPECT_NEAR(critical_propensity(p.v_min, p), 0.2, 1e-15);
    EXPECT_NEAR(critical_propensity(p.v_max, p), 0.4, 1e-15);
    // Volume whose h lies midway between h(v_max) and h(v_min).
    const double hmid = 0.5 * (size_scale(p.v_min) + size_scale(p.v_max));
    const double vmid = pi / 6.0 * std::pow(hmid, -6.0);
    EXPECT_NEAR(critical_propensity(vmid, p), 0.3, 1e-12);
    double prev = -1.0;
    for (int k = 0; k < 100; ++k) {
        const double v = p.v_min + (p.v_max - p.v_min) * k / 99.0;
        const double c = critical_propensity(v, p);
        EXPECT_GE(c, prev);
        prev = c;
    }
    try {
        critical_propensity(0.06, p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::OutOfRange);
    }
    p.hall_petch_orientation = true;
    EXPECT_NEAR(critical_propensity(p.v_min, p), 0.4, 1e-15);
    EXPECT_NEAR(critical_propensity(p.v_max, p), 0.2, 1e-15);
}

TEST(Decision, Boundary) {
    EXPECT_TRUE(twin_decision(0.45, 0.3));
    EXPECT_TRUE(twin_decision(0.2, 0.2));
    EXPECT_FALSE(twin_decision(0.19, 0.2));
}

TEST(EvaluateTwin, StatusReflectsDecisionAndOverflow) {
    TwinDecisionParams p;
    p.v_min = 0.5;
    p.v_max = 2.0;
    Rng rng(7);
    int twinned = 0, overflow = 0;
    for (int i = 0; i < 500; ++i) {
        const auto s = evaluate_twin(sample_uniform(rng), 1.0, 0.1, sys, p);
        if (s.status == TwinStatus::Twinned) {
            ++twinned;
            EXPECT_TRUE(s.decision);
            EXPECT_GT(s.v_t, 0.0);
            EXPECT_LT(s.v_t, 1.0);
        } else if (s.status == TwinStatus::Overflow) {
            ++overflow;
            EXPECT_TRUE(s.decision);
            EXPECT_LE(s.e_scalar, 0.1);
        } else {
            EXPECT_FALSE(s.decision);
        }
        EXPECT_NEAR(s.n_vec.norm(), 1.0, 1e-10);
    }
    EXPECT_GT(twinned, 0);
}
