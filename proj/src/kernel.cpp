#include "dtrwql/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dtrwql/stats.hpp"

namespace dtrwql {

namespace {

constexpr double kDenomFloor = 1e-300;

// unnormalized product Gaussian weights; normalization cancels in the ratio
Eigen::MatrixXd kernel_weights(const Eigen::MatrixXd& data, const Eigen::MatrixXd& query,
                               const Eigen::VectorXd& bandwidths) {
    const Eigen::Index nq = query.rows(), nd = data.rows(), p = data.cols();
    if (query.cols() != p || bandwidths.size() != p)
        throw std::invalid_argument("kernel_weights: dimension mismatch");
    Eigen::MatrixXd logw = Eigen::MatrixXd::Zero(nq, nd);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double inv_c = 1.0 / bandwidths(j);
        for (Eigen::Index q = 0; q < nq; ++q) {
            const double uq = query(q, j);
            for (Eigen::Index i = 0; i < nd; ++i) {
                const double z = (uq - data(i, j)) * inv_c;
                logw(q, i) -= 0.5 * z * z;
            }
        }
    }
    return logw.array().exp();
}

}  // namespace

Eigen::VectorXd bandwidth_rot(const Eigen::MatrixXd& columns) {
    const Eigen::Index m = columns.rows(), p = columns.cols();
    if (m < 2) throw std::invalid_argument("bandwidth_rot: need at least 2 rows");
    Eigen::VectorXd c(p);
    const double rate = std::pow(static_cast<double>(m), -1.0 / (4.0 + static_cast<double>(p)));
    for (Eigen::Index j = 0; j < p; ++j) {
        const double mu = columns.col(j).mean();
        const double sd = std::sqrt((columns.col(j).array() - mu).square().sum() / static_cast<double>(m - 1));
        if (sd <= 0.0)
            throw std::runtime_error("bandwidth_rot: column " + std::to_string(j) +
                                     " is constant; drop it from the conditioning set");
        c(j) = 1.06 * sd * rate;
    }
    return c;
}

ShatProfiler::ShatProfiler(const Eigen::MatrixXd& u_data, const std::vector<std::uint8_t>& r_pse,
                           const Eigen::VectorXd& y, const Eigen::VectorXd& bandwidths,
                           const Eigen::MatrixXd& u_query, KernelConfig cfg)
    : cfg_(cfg) {
    const Eigen::Index n = u_data.rows();
    if (static_cast<Eigen::Index>(r_pse.size()) != n || y.size() != n)
        throw std::invalid_argument("ShatProfiler: dimension mismatch");

    std::vector<Eigen::Index> resp, nonresp;
    for (Eigen::Index i = 0; i < n; ++i) (r_pse[static_cast<std::size_t>(i)] ? resp : nonresp).push_back(i);
    if (resp.empty()) throw std::runtime_error("ShatProfiler: empty respondent set");
    n_nonresp_ = static_cast<int>(nonresp.size());

    const Eigen::MatrixXd k_all = kernel_weights(u_data, u_query, bandwidths);
    k_resp_.resize(u_query.rows(), static_cast<Eigen::Index>(resp.size()));
    y_resp_.resize(static_cast<Eigen::Index>(resp.size()));
    for (std::size_t k = 0; k < resp.size(); ++k) {
        k_resp_.col(static_cast<Eigen::Index>(k)) = k_all.col(resp[k]);
        y_resp_(static_cast<Eigen::Index>(k)) = y(resp[k]);
    }
    numer_ = Eigen::VectorXd::Zero(u_query.rows());
    for (const Eigen::Index i : nonresp) numer_ += k_all.col(i);
}

SHatTable ShatProfiler::eval(double gamma) const {
    SHatTable out;
    out.gamma = gamma;
    const Eigen::ArrayXd tilt = (gamma * y_resp_.array()).exp();
    if (!tilt.isFinite().all())
        throw std::runtime_error("ShatProfiler: exp(gamma*y) overflow; rescale gamma or standardize y");
    const Eigen::VectorXd denom = k_resp_ * tilt.matrix();
    out.exp_shat.resize(numer_.size());
    for (Eigen::Index q = 0; q < numer_.size(); ++q) {
        if (numer_(q) == 0.0) {
            out.exp_shat(q) = 0.0;
        } else if (denom(q) < kDenomFloor || numer_(q) / denom(q) > cfg_.shat_cap) {
            out.exp_shat(q) = cfg_.shat_cap;
            ++out.cap_count;
        } else {
            out.exp_shat(q) = numer_(q) / denom(q);
        }
    }
    return out;
}

SHatTable shat_profile(double gamma, const Eigen::MatrixXd& u_data, const Eigen::VectorXd& y,
                       const std::vector<std::uint8_t>& r_pse, const Eigen::VectorXd& bandwidths,
                       const Eigen::MatrixXd& u_query, KernelConfig cfg) {
    return ShatProfiler(u_data, r_pse, y, bandwidths, u_query, cfg).eval(gamma);
}

double pi_from_shat(double exp_shat, double gamma, double y) {
    return 1.0 / (1.0 + exp_shat * std::exp(gamma * y));
}

YScale standardize_respondents(const Eigen::VectorXd& y, const std::vector<std::uint8_t>& r) {
    std::vector<double> obs;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (r[static_cast<std::size_t>(i)]) obs.push_back(y(i));
    YScale s;
    s.mu = mean(obs);
    const double sd = sample_sd(obs);
    s.sd = sd > 0.0 ? sd : 1.0;
    return s;
}

double Kde::pdf(double x) const {
    const double inv = 1.0 / bandwidth;
    double s = 0.0;
    for (double v : values) {
        const double z = (x - v) * inv;
        s += std::exp(-0.5 * z * z);
    }
    return s * inv / (std::sqrt(2.0 * M_PI) * static_cast<double>(values.size()));
}

double Kde::sample(RngStream& rng) const {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_below(values.size()));
    return values[j] + bandwidth * rng.normal();
}

Kde kde_fit(std::span<const double> values) {
    if (values.size() < 2) throw std::invalid_argument("kde_fit: need at least 2 values");
    const double sd = sample_sd(values);
    if (sd <= 0.0) throw std::runtime_error("kde_fit: all values identical");

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double q1 = percentile(sorted, 0.25), q3 = percentile(sorted, 0.75);
    const double iqr = q3 - q1;
    // nrd0: 0.9 min(sd, IQR/1.34) n^(-1/5)
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    const double bw = 0.9 * spread * std::pow(static_cast<double>(values.size()), -0.2);

    Kde kde;
    kde.values.assign(values.begin(), values.end());
    kde.bandwidth = bw;
    return kde;
}

Eigen::VectorXd nw_regress(const Eigen::MatrixXd& x_data, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& bandwidths, const Eigen::MatrixXd& x_query) {
    if (x_data.rows() != y.size()) throw std::invalid_argument("nw_regress: dimension mismatch");
    const Eigen::MatrixXd k = kernel_weights(x_data, x_query, bandwidths);
    const double fallback = y.mean();
    Eigen::VectorXd out(x_query.rows());
    for (Eigen::Index q = 0; q < x_query.rows(); ++q) {
        const double denom = k.row(q).sum();
        out(q) = denom < kDenomFloor ? fallback : k.row(q).dot(y) / denom;
    }
    return out;
}

}  // namespace dtrwql
