#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dtrwql/dataset.hpp"
#include "dtrwql/features.hpp"
#include "dtrwql/kernel.hpp"
#include "dtrwql/rng.hpp"

namespace dtrwql {

struct SAFit {
    double gamma_prime = 0.0;  // original y scale
    Eigen::VectorXd pi_hat;    // per unit (NaN where the pseudo-outcome is unavailable)
    Eigen::VectorXd weights;   // r/pi, clipped
    int clip_count = 0;
    int cap_count = 0;
    YScale yscale;
};

/// IPW weights for a pre-specified sensitivity parameter. The kernel
/// conditions on the full (h_t, a_t) feature matrix g.
SAFit weights_sa(const Eigen::MatrixXd& g, const Eigen::VectorXd& y, const std::vector<std::uint8_t>& r,
                 double gamma_prime, KernelConfig cfg = {});

/// Sample `count` values from the exponentially tilted respondent density
/// p(y | h, R_pse = 0) proportional to exp(gamma' y) p(y | h, R_pse = 1) via
/// sampling-importance-resampling. The proposal density is cond_mean plus a
/// residual drawn from resid_kde; n_proposals defaults to max(1000, 50*count).
std::vector<double> tilt_sample(double cond_mean, const Kde& resid_kde, double gamma_prime, int count,
                                RngStream& rng, int n_proposals = 0);

struct CalibrationResult {
    std::vector<double> grid;
    std::vector<double> median_p;
    std::vector<std::uint8_t> plausible;  // median_p > threshold
    int mcr = 0;
    double threshold = 0.05;
};

/// Simulation-based calibration of the sensitivity parameter for stage T-1:
/// for each candidate gamma', impute the missing pseudo-outcomes from the
/// tilted respondent density, refit the assumed Q-function, simulate
/// replications of the observed pseudo-outcomes under the working
/// missingness model, and compare them with the observed estimates by
/// Wilcoxon rank-sum; the median p-value over mcr Monte Carlo replicates
/// decides plausibility. Deterministic given (seed, grid, mcr).
CalibrationResult calibrate_gamma(const Dataset& ds, const std::vector<QSpec>& qspecs,
                                  const std::vector<double>& grid, int mcr, double threshold,
                                  std::uint64_t seed, KernelConfig cfg = {});

}  // namespace dtrwql
