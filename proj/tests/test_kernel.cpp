#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "dtrwql/kernel.hpp"
#include "dtrwql/rng.hpp"

using namespace dtrwql;

TEST_SUITE("kernel") {

TEST_CASE("rule-of-thumb bandwidth formula and scale proportionality") {
    RngStream rng(8);
    Eigen::MatrixXd col(100, 1);
    for (int i = 0; i < 100; ++i) col(i, 0) = rng.normal();
    const double mu = col.col(0).mean();
    const double sd = std::sqrt((col.col(0).array() - mu).square().sum() / 99.0);
    const Eigen::VectorXd c = bandwidth_rot(col);
    CHECK(c(0) == doctest::Approx(1.06 * sd * std::pow(100.0, -0.2)).epsilon(1e-12));

    Eigen::MatrixXd two(60, 2);
    for (int i = 0; i < 60; ++i) {
        two(i, 0) = rng.normal();
        two(i, 1) = 2.0 * two(i, 0) + 0.0;  // sd exactly doubled
    }
    const Eigen::VectorXd c2 = bandwidth_rot(two);
    CHECK(c2(1) == doctest::Approx(2.0 * c2(0)).epsilon(1e-12));

    Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(10, 1);
    CHECK_THROWS_WITH_AS(bandwidth_rot(constant), doctest::Contains("constant"), std::runtime_error);
}

TEST_CASE("profiled ratio with constant conditioning reduces to the count ratio at gamma 0") {
    const int n = 40;
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    std::vector<std::uint8_t> r(n, 1);
    for (int i = 0; i < 12; ++i) r[static_cast<std::size_t>(i)] = 0;
    // constant u column: bypass bandwidth_rot with an explicit bandwidth
    const Eigen::VectorXd bw = Eigen::VectorXd::Ones(1);
    const SHatTable tab = shat_profile(0.0, u, y, r, bw, u);
    for (int i = 0; i < n; ++i) CHECK(tab.exp_shat(i) == doctest::Approx(12.0 / 28.0).epsilon(1e-12));
}

TEST_CASE("no nonrespondents give exp_shat 0 and pi 1 everywhere") {
    RngStream rng(4);
    Eigen::MatrixXd u(30, 1);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) {
        u(i, 0) = rng.normal();
        y(i) = rng.normal();
    }
    const std::vector<std::uint8_t> r(30, 1);
    const SHatTable tab = shat_profile(0.7, u, y, r, bandwidth_rot(u), u);
    for (int i = 0; i < 30; ++i) {
        CHECK(tab.exp_shat(i) == 0.0);
        CHECK(pi_from_shat(tab.exp_shat(i), 0.7, y(i)) == 1.0);
    }
}

TEST_CASE("well-separated cells approach the per-cell closed form as bandwidth shrinks") {
    // two cells at u = 0 and u = 10
    const int per_cell = 8;
    const int n = 2 * per_cell;
    Eigen::MatrixXd u(n, 1);
    Eigen::VectorXd y(n);
    std::vector<std::uint8_t> r(n, 1);
    RngStream rng(12);
    for (int i = 0; i < n; ++i) {
        u(i, 0) = i < per_cell ? 0.0 : 10.0;
        y(i) = rng.normal();
    }
    r[0] = r[1] = 0;           // two nonrespondents in cell 0
    r[per_cell] = 0;           // one in cell 1
    const double gamma = 0.6;

    Eigen::VectorXd bw(1);
    bw << 0.05;
    const SHatTable tab = shat_profile(gamma, u, y, r, bw, u);

    auto cell_oracle = [&](int lo, int hi) {
        double numer = 0.0, denom = 0.0;
        for (int i = lo; i < hi; ++i) {
            if (r[static_cast<std::size_t>(i)])
                denom += std::exp(gamma * y(i));
            else
                numer += 1.0;
        }
        return numer / denom;
    };
    const double cell0 = cell_oracle(0, per_cell);
    const double cell1 = cell_oracle(per_cell, n);
    for (int i = 0; i < per_cell; ++i) CHECK(tab.exp_shat(i) == doctest::Approx(cell0).epsilon(1e-9));
    for (int i = per_cell; i < n; ++i) CHECK(tab.exp_shat(i) == doctest::Approx(cell1).epsilon(1e-9));
}

TEST_CASE("affine rescale of a conditioning column leaves the profile unchanged") {
    RngStream rng(19);
    const int n = 60;
    Eigen::MatrixXd u(n, 2);
    Eigen::VectorXd y(n);
    std::vector<std::uint8_t> r;
    for (int i = 0; i < n; ++i) {
        u(i, 0) = rng.normal();
        u(i, 1) = rng.normal() * 0.5 + 1.0;
        y(i) = rng.normal();
        r.push_back(rng.uniform() < 0.7 ? 1 : 0);
    }
    const SHatTable base = shat_profile(0.4, u, y, r, bandwidth_rot(u), u);

    Eigen::MatrixXd u10 = u;
    u10.col(1) *= 10.0;
    const SHatTable scaled = shat_profile(0.4, u10, y, r, bandwidth_rot(u10), u10);
    for (int i = 0; i < n; ++i) CHECK(scaled.exp_shat(i) == doctest::Approx(base.exp_shat(i)).epsilon(1e-9));
}

TEST_CASE("pi_from_shat limits") {
    CHECK(pi_from_shat(0.0, 1.3, 2.0) == 1.0);
    CHECK(pi_from_shat(1.0, 0.0, 5.0) == doctest::Approx(0.5));
    RngStream rng(2);
    for (int i = 0; i < 100; ++i) {
        const double p = pi_from_shat(std::exp(3.0 * rng.normal()), rng.normal(), rng.normal());
        CHECK(p > 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("isolated query points trigger the cap policy instead of infinities") {
    Eigen::MatrixXd u(4, 1);
    u << 0.0, 0.1, 0.05, 500.0;  // last point is far from every respondent
    Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
    std::vector<std::uint8_t> r{1, 1, 0, 0};
    Eigen::VectorXd bw(1);
    bw << 0.01;
    const SHatTable tab = shat_profile(0.0, u, y, r, bw, u);
    CHECK(tab.cap_count > 0);
    CHECK(std::isfinite(tab.exp_shat(3)));
    CHECK(tab.exp_shat(3) == doctest::Approx(1e12));
}

TEST_CASE("kde matches the standard normal density and preserves location") {
    RngStream rng(123);
    std::vector<double> values;
    for (int i = 0; i < 20000; ++i) values.push_back(rng.normal());
    const Kde kde = kde_fit(values);
    CHECK(kde.pdf(0.0) == doctest::Approx(0.3989).epsilon(0.075));

    double s = 0.0;
    const int draws = 100000;
    RngStream rs(7);
    for (int i = 0; i < draws; ++i) s += kde.sample(rs);
    double vm = 0.0;
    for (double v : values) vm += v;
    vm /= static_cast<double>(values.size());
    CHECK(s / draws == doctest::Approx(vm).scale(1).epsilon(0.02));

    // normalization by trapezoidal quadrature
    const double lo = -10.0, hi = 10.0;
    const int steps = 4000;
    double integral = 0.0;
    for (int k = 0; k < steps; ++k) {
        const double a = lo + (hi - lo) * k / steps;
        const double b = lo + (hi - lo) * (k + 1) / steps;
        integral += 0.5 * (kde.pdf(a) + kde.pdf(b)) * (b - a);
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));

    CHECK_THROWS(kde_fit(std::vector<double>{1.0}));
    CHECK_THROWS(kde_fit(std::vector<double>{2.0, 2.0, 2.0}));
}

TEST_CASE("nadaraya-watson recovers a smooth conditional mean") {
    RngStream rng(10);
    const int n = 4000;
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 4.0 * rng.uniform() - 2.0;
        y(i) = std::sin(x(i, 0)) + 0.1 * rng.normal();
    }
    Eigen::MatrixXd q(3, 1);
    q << -1.0, 0.0, 1.0;
    const Eigen::VectorXd m = nw_regress(x, y, bandwidth_rot(x), q);
    CHECK(m(0) == doctest::Approx(std::sin(-1.0)).epsilon(0.08));
    CHECK(m(1) == doctest::Approx(0.0).scale(1).epsilon(0.05));
    CHECK(m(2) == doctest::Approx(std::sin(1.0)).epsilon(0.08));
}

TEST_CASE("standardize_respondents uses only respondent rows") {
    Eigen::VectorXd y(4);
    y << 1.0, 3.0, 100.0, -50.0;
    const std::vector<std::uint8_t> r{1, 1, 0, 0};
    const YScale s = standardize_respondents(y, r);
    CHECK(s.mu == doctest::Approx(2.0));
    CHECK(s.sd == doctest::Approx(std::sqrt(2.0)));
    CHECK(s.gamma_to_std(s.gamma_to_orig(1.7)) == doctest::Approx(1.7));
}

}  // TEST_SUITE
