#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dtrwql/dataset.hpp"
#include "dtrwql/qlearn.hpp"
#include "dtrwql/rng.hpp"

namespace dtrwql {

struct BootPlan {
    int B = 500;                      // replications for inference
    std::vector<double> alpha_grid;   // ascending candidates in [0, 1]
    int B1 = 200;                     // first-level double-bootstrap replications
    int B2 = 200;                     // nested replications
    double nu = 0.001;
    int c_stage = 1;                  // stage of the double-bootstrap contrast
    Eigen::VectorXd c;                // contrast over that stage's blip coefficients
    double nominal = 0.95;
};

/// Indicator core of the non-regularity measure: the fraction of rows whose
/// squared blip is dominated by its estimated sampling noise,
///   p_hat = mean_i I[ n * (phi1_i . psi)^2 <= phi1_i' Sigma21 phi1_i * chi2_{1,1-nu} ],
/// with Sigma21 an estimate of n * Cov(psi_hat).
double p_nonregu_from(const Eigen::VectorXd& psi, const Eigen::MatrixXd& sigma21,
                      const Eigen::MatrixXd& phi1_rows, double n, double nu);

/// Plug-in non-regularity measure from the stage-2 fit of the full pipeline
/// (HC0 sandwich covariance, evaluated over complete-upto-2 rows).
double p_nonregu_hat(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg,
                     double nu, RngStream rng);

/// m = ceil(n^((1 + alpha (1 - p_hat)) / (1 + alpha))).
int m_from_alpha(int n, double alpha, double p_hat);

/// Double-bootstrap selection of alpha (ascending grid; first value whose
/// estimated coverage of c'psi_1 reaches the nominal level, else the grid
/// maximum).
double select_alpha(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg,
                    const BootPlan& plan, RngStream rng, int threads = 1);

struct TargetSel {
    int stage = 1;
    int psi_index = 0;
    std::string name;
};

struct TargetResult {
    TargetSel sel;
    double estimate = 0.0;
    double sd = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    int m = 0;  // resample size used for this target
};

struct BootResult {
    int B = 0;
    std::vector<TargetResult> targets;
    int failed = 0;
};

/// Percentile bootstrap over whole-patient resamples. Final-stage targets
/// use n-out-of-n resampling (non-regularity is not an issue there);
/// earlier-stage targets use the given m. Aborts when more than 20% of the
/// resamples fail.
BootResult bootstrap_ci(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg, int B,
                        int m, const std::vector<TargetSel>& targets, RngStream rng, int threads = 1);

void write_bootstrap_csv(const std::string& path, const BootResult& result);

}  // namespace dtrwql
