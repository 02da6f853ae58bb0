#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "dtrwql/linmodel.hpp"
#include "dtrwql/rng.hpp"
#include "test_helpers.hpp"

using namespace dtrwql;

namespace {

// normal-equation oracle (X' W X)^{-1} X' W y
Eigen::VectorXd wls_normal_eq(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd xtwy = x.transpose() * (w.array() * y.array()).matrix();
    return xtwx.ldlt().solve(xtwy);
}

}  // namespace

TEST_SUITE("linmodel") {

TEST_CASE("wls recovers an exact linear fit") {
    Eigen::MatrixXd x(3, 2);
    x << 1, 0, 1, 1, 1, 2;
    Eigen::VectorXd y(3);
    y << 0, 1, 2;
    Eigen::VectorXd w = Eigen::VectorXd::Ones(3);
    Eigen::VectorXd theta = wls_fit(x, y, w);
    CHECK(theta(0) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(theta(1) == doctest::Approx(1.0).epsilon(1e-12));

    w << 1, 1, 0;  // zero-weight rows allowed
    theta = wls_fit(x, y, w);
    CHECK(theta(0) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(theta(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("wls matches the normal-equation oracle on random problems") {
    RngStream rng(31);
    for (int rep = 0; rep < 25; ++rep) {
        Eigen::MatrixXd x(20, 3);
        Eigen::VectorXd y(20), w(20);
        for (int i = 0; i < 20; ++i) {
            x(i, 0) = 1.0;
            x(i, 1) = rng.normal();
            x(i, 2) = rng.normal();
            y(i) = rng.normal();
            w(i) = rng.uniform() + 0.1;
        }
        const Eigen::VectorXd a = wls_fit(x, y, w);
        const Eigen::VectorXd b = wls_normal_eq(x, y, w);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("wls is equivariant under invertible feature reparameterization") {
    RngStream rng(77);
    Eigen::MatrixXd x(30, 3), t(3, 3);
    Eigen::VectorXd y(30), w = Eigen::VectorXd::Ones(30);
    for (int i = 0; i < 30; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = rng.normal();
        x(i, 2) = rng.normal();
        y(i) = rng.normal();
    }
    t << 2, 0.5, 0, 0, 1, -1, 1, 0, 3;
    const Eigen::MatrixXd xt = x * t;
    const Eigen::VectorXd theta = wls_fit(x, y, w);
    const Eigen::VectorXd theta_t = wls_fit(xt, y, w);
    CHECK((x * theta - xt * theta_t).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((theta - t * theta_t).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("rank-deficient design reports the null-space dimension") {
    Eigen::MatrixXd x(4, 3);
    x << 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10;  // third column is twice the second
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(4);
    CHECK_THROWS_WITH_AS(wls_fit(x, y, w), doctest::Contains("null-space dimension 1"), std::runtime_error);
    CHECK_THROWS(wls_fit(x, y, -w));
}

TEST_CASE("q_value decomposition and the pseudo-outcome two-point max oracle") {
    RngStream rng(13);
    Dataset ds = testing::two_stage_dataset(rng, 200);
    const QSpec spec2 = QSpec::from_strings(2, {"1", "A1", "X2_x21", "X2_x22", "Y1"}, {"1", "A1", "X2_x22"});
    const FeatureEval fe(ds, spec2);

    for (int rep = 0; rep < 1000; ++rep) {
        ThetaHat theta;
        theta.stage = 2;
        theta.beta = Eigen::VectorXd::NullaryExpr(5, [&](Eigen::Index) { return rng.normal(); });
        theta.psi = Eigen::VectorXd::NullaryExpr(3, [&](Eigen::Index) { return rng.normal(); });
        const int i = static_cast<int>(rng.uniform_below(200));

        const double qp = q_value(fe, theta, i, 1);
        const double qm = q_value(fe, theta, i, -1);
        // decomposition identity
        CHECK(qp - qm == doctest::Approx(2.0 * fe.phi1(i).dot(theta.psi)).epsilon(1e-9));

        const PseudoOutcome po = pseudo_outcome(fe, theta, i);
        REQUIRE(po.available);
        CHECK(po.value == doctest::Approx(std::max(qp, qm)).epsilon(1e-12));
        CHECK(po.value >= qp - 1e-12);
        CHECK(po.value >= qm - 1e-12);
        CHECK(po.value == doctest::Approx(q_value(fe, theta, i, opt_action(fe, theta, i))).epsilon(1e-12));
    }
}

TEST_CASE("known stage-2 coefficients reproduce the generative blip") {
    RngStream rng(3);
    Dataset ds = testing::two_stage_dataset(rng, 50);
    const QSpec spec2 = QSpec::from_strings(2, {"1", "A1", "X2_x21", "X2_x22", "Y1"}, {"1", "A1", "X2_x22"});
    const FeatureEval fe(ds, spec2);
    ThetaHat theta;
    theta.stage = 2;
    theta.beta.resize(5);
    theta.beta << 0.0, -1.0, 1.0, -0.5, 1.0;
    theta.psi.resize(3);
    theta.psi << 1.0, -1.0, 1.0;  // blip = 1 - a1 + x22

    for (int i = 0; i < 10; ++i) {
        const double a1 = ds.stages[0].a(i);
        const double x22 = ds.stages[1].x(i, 1);
        CHECK(fe.phi1(i).dot(theta.psi) == doctest::Approx(1.0 - a1 + x22).epsilon(1e-12));
        // pseudo-outcome = q0 + |q1|, and 1 - a1 + x22 >= 0 here
        const PseudoOutcome po = pseudo_outcome(fe, theta, i);
        const double x21 = ds.stages[1].x(i, 0), y1 = ds.stages[0].y(i);
        CHECK(po.value == doctest::Approx(1.0 - 2.0 * a1 + y1 + x21 + 0.5 * x22).epsilon(1e-10));
    }
}

TEST_CASE("opt_action: positive scaling invariance and the tie convention") {
    RngStream rng(21);
    Dataset ds = testing::two_stage_dataset(rng, 60);
    const QSpec spec1 = QSpec::from_strings(1, {"1", "X1_x11", "X1_x12"}, {"1", "X1_x12"});
    const FeatureEval fe(ds, spec1);

    ThetaHat theta;
    theta.stage = 1;
    theta.beta = Eigen::VectorXd::Zero(3);
    theta.psi.resize(2);
    theta.psi << 1.0, -1.0;
    for (int i = 0; i < 60; ++i) {
        const int a = opt_action(fe, theta, i);
        ThetaHat scaled = theta;
        scaled.psi *= 7.3;
        CHECK(opt_action(fe, scaled, i) == a);
        const double x12 = ds.stages[0].x(i, 1);
        CHECK(a == ((1.0 - x12 > 0.0) ? 1 : -1));
    }

    theta.psi.setZero();  // blip identically zero -> -1 by the strict inequality
    CHECK(opt_action(fe, theta, 0) == -1);
    const PseudoOutcome po = pseudo_outcome(fe, theta, 0);
    CHECK(po.value == doctest::Approx(fe.phi0(0).dot(theta.beta)));
}

TEST_CASE("missing features give errors for q_value and availability for pseudo_outcome") {
    RngStream rng(55);
    Dataset ds = testing::two_stage_dataset(rng, 10);
    ds.stages[0].present(3, 1) = 0;  // x12 missing for row 3
    const QSpec spec1 = QSpec::from_strings(1, {"1", "X1_x12"}, {"1", "X1_x12"});
    const FeatureEval fe(ds, spec1);
    ThetaHat theta;
    theta.stage = 1;
    theta.beta = Eigen::VectorXd::Ones(2);
    theta.psi = Eigen::VectorXd::Ones(2);

    CHECK_THROWS(q_value(fe, theta, 3, 1));
    CHECK_THROWS(opt_action(fe, theta, 3));
    CHECK_FALSE(pseudo_outcome(fe, theta, 3).available);
    CHECK(pseudo_outcome(fe, theta, 2).available);
}

TEST_CASE("QSpec rejects references outside the stage history") {
    RngStream rng(1);
    Dataset ds = testing::two_stage_dataset(rng, 5);
    CHECK_THROWS(FeatureEval(ds, QSpec::from_strings(1, {"1", "X2_x21"}, {"1"})));
    CHECK_THROWS(FeatureEval(ds, QSpec::from_strings(1, {"1", "A1"}, {"1"})));
    CHECK_THROWS(FeatureEval(ds, QSpec::from_strings(2, {"1", "Y2"}, {"1"})));
    CHECK_NOTHROW(FeatureEval(ds, QSpec::from_strings(2, {"1", "A1", "Y1", "A1*X2_x22"}, {"1"})));
}

}  // TEST_SUITE
