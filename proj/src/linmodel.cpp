#include "dtrwql/linmodel.hpp"

#include <cmath>
#include <stdexcept>

namespace dtrwql {

ThetaHat ThetaHat::from_stacked(int stage, const Eigen::VectorXd& theta, int d0) {
    ThetaHat t;
    t.stage = stage;
    t.beta = theta.head(d0);
    t.psi = theta.tail(theta.size() - d0);
    return t;
}

Eigen::VectorXd ThetaHat::stacked() const {
    Eigen::VectorXd v(beta.size() + psi.size());
    v << beta, psi;
    return v;
}

Eigen::VectorXd wls_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    if (x.rows() != y.size() || x.rows() != w.size())
        throw std::invalid_argument("wls_fit: dimension mismatch");
    if ((w.array() < 0.0).any()) throw std::invalid_argument("wls_fit: negative weight");

    const Eigen::VectorXd sw = w.array().sqrt();
    const Eigen::MatrixXd xs = sw.asDiagonal() * x;
    const Eigen::VectorXd ys = sw.array() * y.array();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
    qr.setThreshold(1e-10);
    const auto rank = qr.rank();
    if (rank < x.cols())
        throw std::runtime_error("wls_fit: singular weighted design (null-space dimension " +
                                 std::to_string(x.cols() - rank) + ")");
    return qr.solve(ys);
}

Eigen::MatrixXd wls_sandwich(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& theta) {
    const Eigen::Index d = x.cols();
    Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (w(i) == 0.0) continue;
        const Eigen::VectorXd xi = x.row(i).transpose();
        const double e = y(i) - x.row(i).dot(theta);
        bread.noalias() += w(i) * xi * xi.transpose();
        meat.noalias() += w(i) * w(i) * e * e * xi * xi.transpose();
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(bread);
    if (!lu.isInvertible()) throw std::runtime_error("wls_sandwich: singular bread matrix");
    const Eigen::MatrixXd binv = lu.inverse();
    return binv * meat * binv;
}

double q_value(const FeatureEval& fe, const ThetaHat& theta, int row, int action) {
    if (!fe.row_available(row))
        throw std::runtime_error("q_value: missing feature for row " + std::to_string(row));
    return fe.phi0(row).dot(theta.beta) + static_cast<double>(action) * fe.phi1(row).dot(theta.psi);
}

PseudoOutcome pseudo_outcome(const FeatureEval& fe, const ThetaHat& theta, int row) {
    if (!fe.row_available(row)) return {0.0, false};
    return {fe.phi0(row).dot(theta.beta) + std::fabs(fe.phi1(row).dot(theta.psi)), true};
}

int opt_action(const FeatureEval& fe, const ThetaHat& theta, int row) {
    if (!fe.row_available(row))
        throw std::runtime_error("opt_action: missing feature for row " + std::to_string(row));
    return fe.phi1(row).dot(theta.psi) > 0.0 ? 1 : -1;
}

}  // namespace dtrwql
