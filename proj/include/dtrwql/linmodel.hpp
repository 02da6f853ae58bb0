#pragma once

#include <Eigen/Dense>

#include "dtrwql/features.hpp"

namespace dtrwql {

/// Fitted Q-function coefficients for one stage.
struct ThetaHat {
    int stage = 1;
    Eigen::VectorXd beta;  // treatment-free coefficients
    Eigen::VectorXd psi;   // blip coefficients

    static ThetaHat from_stacked(int stage, const Eigen::VectorXd& theta, int d0);
    Eigen::VectorXd stacked() const;
};

/// Weighted least squares via column-pivoted QR on the sqrt(w)-scaled
/// design. Rows with zero weight are allowed; negative weights are not.
/// Throws on rank deficiency, naming the null-space dimension.
Eigen::VectorXd wls_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w);

/// HC0 sandwich covariance of the WLS coefficients.
Eigen::MatrixXd wls_sandwich(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& theta);

/// Q_t(h_i, a) = phi0(h_i).beta + a * phi1(h_i).psi. Throws if a referenced
/// feature is missing for the row.
double q_value(const FeatureEval& fe, const ThetaHat& theta, int row, int action);

struct PseudoOutcome {
    double value = 0.0;
    bool available = false;  // defines R_pse for the previous stage
};

/// max_a Q(h_i, a) = phi0.beta + |phi1.psi|; unavailable (not an error) when
/// a referenced feature of the row is missing.
PseudoOutcome pseudo_outcome(const FeatureEval& fe, const ThetaHat& theta, int row);

/// +1 if phi1(h_i).psi > 0 else -1 (a tie at exactly zero gives -1).
int opt_action(const FeatureEval& fe, const ThetaHat& theta, int row);

}  // namespace dtrwql
