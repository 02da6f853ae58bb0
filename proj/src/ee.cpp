#include "dtrwql/ee.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dtrwql {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// instrument basis l(z) = (1, z_1, ..., z_K)
Eigen::VectorXd basis(const EESlice& slice, int i) {
    Eigen::VectorXd l(1 + slice.z.cols());
    l(0) = 1.0;
    for (Eigen::Index j = 0; j < slice.z.cols(); ++j) l(j + 1) = slice.z(i, j);
    return l;
}

// rows: per-unit moment contributions b(i) = l(z_i) * (r_i/pi_i - 1)
Eigen::MatrixXd moment_contributions(double gamma_std, const EESlice& slice, const ShatProfiler& profiler,
                                     const Eigen::VectorXd& y_std) {
    const SHatTable tab = profiler.eval(gamma_std);
    const int n = slice.n_units();
    Eigen::MatrixXd b(n, 1 + slice.z.cols());
    for (int i = 0; i < n; ++i) {
        double resid = -1.0;
        if (slice.r[static_cast<std::size_t>(i)]) {
            const double pi = pi_from_shat(tab.exp_shat(i), gamma_std, y_std(i));
            resid = 1.0 / pi - 1.0;
        }
        b.row(i) = resid * basis(slice, i).transpose();
    }
    return b;
}

struct GoldenResult {
    double x = 0.0;
    double fx = kInf;
};

// golden-section minimization on [a, b]; f may return +inf
template <typename F>
GoldenResult golden_section(F&& f, double a, double b, double tol) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return fc < fd ? GoldenResult{c, fc} : GoldenResult{d, fd};
}

// 41-point pre-scan to bracket the minimum, then golden-section refinement
template <typename F>
GoldenResult scan_minimize(F&& f, const EESearch& search) {
    const int g = std::max(search.grid, 3);
    std::vector<double> xs(static_cast<std::size_t>(g)), fs(static_cast<std::size_t>(g));
    int best = -1;
    for (int k = 0; k < g; ++k) {
        xs[static_cast<std::size_t>(k)] =
            search.lo + (search.hi - search.lo) * static_cast<double>(k) / static_cast<double>(g - 1);
        fs[static_cast<std::size_t>(k)] = f(xs[static_cast<std::size_t>(k)]);
        if (std::isfinite(fs[static_cast<std::size_t>(k)]) && (best < 0 || fs[static_cast<std::size_t>(k)] < fs[static_cast<std::size_t>(best)]))
            best = k;
    }
    if (best < 0) throw std::runtime_error("fit_gamma_ee: objective non-finite over the whole search interval");
    const double a = xs[static_cast<std::size_t>(std::max(best - 1, 0))];
    const double b = xs[static_cast<std::size_t>(std::min(best + 1, g - 1))];
    GoldenResult res = golden_section(f, a, b, search.tol);
    if (fs[static_cast<std::size_t>(best)] < res.fx)
        res = {xs[static_cast<std::size_t>(best)], fs[static_cast<std::size_t>(best)]};
    return res;
}

}  // namespace

int EESlice::n_respondents() const {
    int c = 0;
    for (auto v : r) c += v;
    return c;
}

Eigen::VectorXd moment_vector(double gamma_std, const EESlice& slice, const ShatProfiler& profiler,
                              const Eigen::VectorXd& y_std) {
    if (slice.z.cols() + 1 < 2)
        throw std::runtime_error("moment_vector: under-identified (instrument basis spans only constants)");
    const Eigen::MatrixXd b = moment_contributions(gamma_std, slice, profiler, y_std);
    return b.colwise().sum() / static_cast<double>(slice.n_total);
}

EEFit fit_gamma_ee(const EESlice& slice, const EESearch& search, KernelConfig cfg) {
    const int n = slice.n_units();
    if (n == 0) throw std::runtime_error("fit_gamma_ee: empty slice");
    if (slice.n_respondents() == 0) throw std::runtime_error("fit_gamma_ee: no respondents");
    if (slice.z.cols() < 1)
        throw std::runtime_error("fit_gamma_ee: under-identified (need at least one instrument, L >= 2)");
    bool any_varying = false;
    for (Eigen::Index j = 0; j < slice.z.cols(); ++j) {
        const double mu = slice.z.col(j).mean();
        if ((slice.z.col(j).array() - mu).abs().maxCoeff() > 0.0) any_varying = true;
    }
    if (!any_varying)
        throw std::runtime_error("fit_gamma_ee: under-identified (all instrument columns constant)");

    EEFit fit;
    fit.yscale = standardize_respondents(slice.y, slice.r);

    if (slice.n_nonrespondents() == 0) {
        // every pseudo-outcome observed: pi = 1, plain complete-case weights
        fit.weight_matrix = Eigen::MatrixXd::Identity(1 + slice.z.cols(), 1 + slice.z.cols());
        fit.pi_hat = Eigen::VectorXd::Ones(n);
        fit.weights = Eigen::VectorXd::Ones(n);
        return fit;
    }

    Eigen::VectorXd y_std(n);
    for (int i = 0; i < n; ++i)
        y_std(i) = slice.r[static_cast<std::size_t>(i)] ? fit.yscale.to_std(slice.y(i)) : 0.0;

    const Eigen::VectorXd bw = bandwidth_rot(slice.u);
    const ShatProfiler profiler(slice.u, slice.r, y_std, bw, slice.u, cfg);

    auto objective1 = [&](double g) -> double {
        try {
            const Eigen::VectorXd b = moment_vector(g, slice, profiler, y_std);
            const double v = b.squaredNorm();
            return std::isfinite(v) ? v : kInf;
        } catch (const std::exception&) {
            return kInf;
        }
    };
    const GoldenResult step1 = scan_minimize(objective1, search);
    fit.gamma_first_std = step1.x;
    fit.obj_first = step1.fx;

    // weight matrix from the averaged outer products at the first-step optimum
    const Eigen::MatrixXd contrib = moment_contributions(step1.x, slice, profiler, y_std);
    const Eigen::Index big_l = contrib.cols();
    Eigen::MatrixXd omega = contrib.transpose() * contrib / static_cast<double>(slice.n_total);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(omega);
    if (lu.isInvertible()) {
        fit.weight_matrix = lu.inverse();
    } else {
        fit.w_pseudo_inverse = true;
        fit.weight_matrix = omega.completeOrthogonalDecomposition().pseudoInverse();
    }
    (void)big_l;

    auto objective2 = [&](double g) -> double {
        try {
            const Eigen::VectorXd b = moment_vector(g, slice, profiler, y_std);
            const double v = b.dot(fit.weight_matrix * b);
            return std::isfinite(v) ? v : kInf;
        } catch (const std::exception&) {
            return kInf;
        }
    };
    GoldenResult step2 = scan_minimize(objective2, search);
    fit.obj_second_at_first = objective2(step1.x);
    if (fit.obj_second_at_first < step2.fx) step2 = {step1.x, fit.obj_second_at_first};
    fit.gamma_hat_std = step2.x;
    fit.obj_second = step2.fx;
    fit.gamma_first = fit.yscale.gamma_to_orig(fit.gamma_first_std);
    fit.gamma_hat = fit.yscale.gamma_to_orig(fit.gamma_hat_std);

    const SHatTable tab = profiler.eval(fit.gamma_hat_std);
    fit.cap_count = tab.cap_count;
    fit.pi_hat.resize(n);
    fit.weights.setZero(n);
    for (int i = 0; i < n; ++i) {
        if (!slice.r[static_cast<std::size_t>(i)]) {
            fit.pi_hat(i) = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const double pi = pi_from_shat(tab.exp_shat(i), fit.gamma_hat_std, y_std(i));
        fit.pi_hat(i) = pi;
        double w = 1.0 / pi;
        if (w > cfg.weight_cap) {
            w = cfg.weight_cap;
            ++fit.clip_count;
        }
        fit.weights(i) = w;
    }
    return fit;
}

Eigen::VectorXd ipw_weights_ee(const EEFit& fit, const EESlice& slice) {
    (void)slice;
    return fit.weights;
}

}  // namespace dtrwql
