#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "dtrwql/rng.hpp"

namespace dtrwql {

struct KernelConfig {
    double shat_cap = 1e12;   // cap on exp{s_hat} when the denominator underflows
    double weight_cap = 50.0; // cap on 1/pi inverse-probability weights
};

/// Rule-of-thumb bandwidths, one per column: 1.06 * sd_j * m^(-1/(4+p)).
/// A constant column is an error (it should be dropped from the
/// conditioning set instead).
Eigen::VectorXd bandwidth_rot(const Eigen::MatrixXd& columns);

struct SHatTable {
    Eigen::VectorXd exp_shat;  // one entry per query row
    double gamma = 0.0;        // the (standardized-scale) gamma profiled at
    int cap_count = 0;
};

/// Profiled kernel estimator of the exponential-tilt log odds:
///
///   exp{s_hat(u)} = sum_i (1-r_i) K_c(u - u_i) / sum_i r_i exp(g y_i) K_c(u - u_i)
///
/// over complete-history units, with a product Gaussian kernel. The kernel
/// weights depend only on (data, query, bandwidths), so they are computed
/// once; each gamma evaluation re-weights respondents by exp(g y_i).
class ShatProfiler {
public:
    ShatProfiler(const Eigen::MatrixXd& u_data, const std::vector<std::uint8_t>& r_pse,
                 const Eigen::VectorXd& y, const Eigen::VectorXd& bandwidths,
                 const Eigen::MatrixXd& u_query, KernelConfig cfg = {});

    SHatTable eval(double gamma) const;

    int n_respondents() const { return static_cast<int>(k_resp_.cols()); }
    int n_nonrespondents() const { return n_nonresp_; }

private:
    Eigen::MatrixXd k_resp_;  // n_query x n_resp kernel weights
    Eigen::VectorXd numer_;   // n_query, sum of kernel weights over nonrespondents
    Eigen::VectorXd y_resp_;
    int n_nonresp_ = 0;
    KernelConfig cfg_;
};

/// One-shot wrapper around ShatProfiler.
SHatTable shat_profile(double gamma, const Eigen::MatrixXd& u_data, const Eigen::VectorXd& y,
                       const std::vector<std::uint8_t>& r_pse, const Eigen::VectorXd& bandwidths,
                       const Eigen::MatrixXd& u_query, KernelConfig cfg = {});

/// pi = 1 / (1 + exp{s_hat} * exp(gamma * y)), in (0, 1].
double pi_from_shat(double exp_shat, double gamma, double y);

/// Center/scale transform for pseudo-outcomes entering exp(gamma*y); the
/// tilt parameter maps between scales as gamma_std = gamma * sd.
struct YScale {
    double mu = 0.0;
    double sd = 1.0;
    double to_std(double y) const { return (y - mu) / sd; }
    double gamma_to_orig(double gamma_std) const { return gamma_std / sd; }
    double gamma_to_std(double gamma_orig) const { return gamma_orig * sd; }
};

/// Respondent mean/sd of y (sd falls back to 1 when degenerate).
YScale standardize_respondents(const Eigen::VectorXd& y, const std::vector<std::uint8_t>& r);

/// Gaussian kernel density estimate with the Silverman/nrd0 bandwidth.
struct Kde {
    std::vector<double> values;
    double bandwidth = 1.0;

    double pdf(double x) const;
    double sample(RngStream& rng) const;  // value_j + bandwidth * N(0,1), j uniform
};

Kde kde_fit(std::span<const double> values);

/// Nadaraya-Watson product-kernel regression of y on x, evaluated at the
/// query rows. Empty local neighborhoods fall back to the global mean.
Eigen::VectorXd nw_regress(const Eigen::MatrixXd& x_data, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& bandwidths, const Eigen::MatrixXd& x_query);

}  // namespace dtrwql
