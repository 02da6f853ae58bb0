#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dtrwql/kernel.hpp"

namespace dtrwql {

/// Conditioning/instrument split of (H_t, A_t) for the stage-t missingness
/// model: the kernel conditions on u_cols, identification comes from the
/// instrument basis l = (1, z_1, ..., z_K).
struct InstrumentSpec {
    int stage = 1;
    std::vector<std::string> u_cols;
    std::vector<std::string> z_cols;
};

/// Complete-history units entering a stage-t missingness fit.
struct EESlice {
    Eigen::VectorXd y;               // pseudo-outcome estimates (meaningful where r = 1)
    std::vector<std::uint8_t> r;     // availability of the pseudo-outcome
    Eigen::MatrixXd u;               // kernel conditioning columns
    Eigen::MatrixXd z;               // instrument columns
    int n_total = 0;                 // full-sample size for empirical means

    int n_units() const { return static_cast<int>(y.size()); }
    int n_respondents() const;
    int n_nonrespondents() const { return n_units() - n_respondents(); }
};

struct EESearch {
    double lo = -5.0;   // on the standardized-y scale
    double hi = 5.0;
    int grid = 41;
    double tol = 1e-4;
};

struct EEFit {
    double gamma_hat = 0.0;        // original y scale
    double gamma_first = 0.0;
    double gamma_hat_std = 0.0;
    double gamma_first_std = 0.0;
    Eigen::MatrixXd weight_matrix;
    double obj_first = 0.0;        // B B^T at gamma_first
    double obj_second = 0.0;       // B W B^T at gamma_hat
    double obj_second_at_first = 0.0;
    Eigen::VectorXd pi_hat;        // per slice unit
    Eigen::VectorXd weights;       // r/pi * I(complete), clipped
    int clip_count = 0;
    int cap_count = 0;
    bool w_pseudo_inverse = false;
    YScale yscale;
};

/// Moment vector B(gamma) = empirical mean of l(z) * (r/pi_hat(gamma) - 1)
/// over the full sample (incomplete rows contribute zero); gamma and y on
/// the standardized scale.
Eigen::VectorXd moment_vector(double gamma_std, const EESlice& slice, const ShatProfiler& profiler,
                              const Eigen::VectorXd& y_std);

/// Two-step GMM for the tilt parameter: step one minimizes B B^T over a grid
/// plus golden-section refinement, step two re-minimizes B W B^T with W the
/// inverse of the averaged outer products of the moment contributions at the
/// first-step optimum.
EEFit fit_gamma_ee(const EESlice& slice, const EESearch& search = {}, KernelConfig cfg = {});

/// IPW weights r/pi, clipped at cfg.weight_cap; zero where the
/// pseudo-outcome is unavailable. Aligned with the slice units.
Eigen::VectorXd ipw_weights_ee(const EEFit& fit, const EESlice& slice);

}  // namespace dtrwql
