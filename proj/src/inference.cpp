#include "dtrwql/inference.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dtrwql/stats.hpp"
#include "dtrwql/util.hpp"

namespace dtrwql {

namespace {

std::vector<int> resample_rows(int n, int m, RngStream& rng) {
    std::vector<int> rows(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
        rows[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n)));
    return rows;
}

double c_value(const DtrFit& fit, const TargetSel& t) { return fit.stage(t.stage).theta.psi(t.psi_index); }

// stage-2 blip rows over complete-upto-2 units
Eigen::MatrixXd stage2_phi1_rows(const Dataset& ds, const QSpec& spec2) {
    const FeatureEval fe(ds, spec2);
    const CompleteMask cm = ds.complete_upto(2);
    std::vector<int> rows;
    for (int i = 0; i < ds.n(); ++i)
        if (cm.mask[static_cast<std::size_t>(i)]) rows.push_back(i);
    Eigen::MatrixXd phi1(static_cast<Eigen::Index>(rows.size()), fe.d1());
    for (std::size_t k = 0; k < rows.size(); ++k) phi1.row(static_cast<Eigen::Index>(k)) = fe.phi1(rows[k]).transpose();
    return phi1;
}

}  // namespace

double p_nonregu_from(const Eigen::VectorXd& psi, const Eigen::MatrixXd& sigma21,
                      const Eigen::MatrixXd& phi1_rows, double n, double nu) {
    if (phi1_rows.rows() == 0) throw std::invalid_argument("p_nonregu_from: no rows");
    const double chi2 = chi2_quantile_df1(1.0 - nu);
    int count = 0;
    for (Eigen::Index i = 0; i < phi1_rows.rows(); ++i) {
        const Eigen::VectorXd h = phi1_rows.row(i).transpose();
        const double blip = h.dot(psi);
        const double noise = h.dot(sigma21 * h);
        if (n * blip * blip <= noise * chi2) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(phi1_rows.rows());
}

double p_nonregu_hat(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg,
                     double nu, RngStream rng) {
    if (ds.n_stages() < 2) throw std::runtime_error("p_nonregu_hat: needs a stage-2 fit");
    MethodConfig sub = cfg;
    sub.fit_down_to = 2;  // only the stage-2 fit is needed
    const DtrFit fit = fit_dtr(ds, qspecs, sub, rng);
    const StageFit& s2 = fit.stage(2);
    if (s2.cov_psi.size() == 0) throw std::runtime_error("p_nonregu_hat: stage-2 covariance unavailable");
    const double n = static_cast<double>(ds.n());
    const Eigen::MatrixXd sigma21 = n * s2.cov_psi;
    const Eigen::MatrixXd phi1 = stage2_phi1_rows(ds, s2.spec_used);
    return p_nonregu_from(s2.theta.psi, sigma21, phi1, n, nu);
}

int m_from_alpha(int n, double alpha, double p_hat) {
    if (n < 1) throw std::invalid_argument("m_from_alpha: n must be positive");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("m_from_alpha: alpha must be in [0,1]");
    if (p_hat < 0.0 || p_hat > 1.0) throw std::invalid_argument("m_from_alpha: p_hat must be in [0,1]");
    const double exponent = (1.0 + alpha * (1.0 - p_hat)) / (1.0 + alpha);
    const double raw = std::pow(static_cast<double>(n), exponent);
    const int m = static_cast<int>(std::ceil(raw));
    return std::min(m, n);
}

double select_alpha(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg,
                    const BootPlan& plan, RngStream rng, int threads) {
    if (plan.alpha_grid.empty()) throw std::invalid_argument("select_alpha: empty alpha grid");
    const int n = ds.n();

    const DtrFit fit0 = fit_dtr(ds, qspecs, cfg, rng.child("fit0"));
    const Eigen::VectorXd c = plan.c.size() > 0
                                  ? plan.c
                                  : Eigen::VectorXd::Unit(fit0.stage(plan.c_stage).theta.psi.size(), 0);
    const double target0 = c.dot(fit0.stage(plan.c_stage).theta.psi);

    // first-level resamples and their p_hat are alpha-independent
    std::vector<std::vector<int>> level1(static_cast<std::size_t>(plan.B1));
    std::vector<double> p_hats(static_cast<std::size_t>(plan.B1));
    std::vector<std::uint8_t> level1_ok(static_cast<std::size_t>(plan.B1), 1);
    parallel_for(plan.B1, threads, [&](int b1) {
        RngStream rs = rng.child("alpha_level1", static_cast<std::uint64_t>(b1));
        level1[static_cast<std::size_t>(b1)] = resample_rows(n, n, rs);
        try {
            const Dataset dsb = ds.subset(level1[static_cast<std::size_t>(b1)]);
            p_hats[static_cast<std::size_t>(b1)] = p_nonregu_hat(dsb, qspecs, cfg, plan.nu, rs.child("phat"));
        } catch (const std::exception&) {
            level1_ok[static_cast<std::size_t>(b1)] = 0;
        }
    });

    for (std::size_t ai = 0; ai < plan.alpha_grid.size(); ++ai) {
        const double alpha = plan.alpha_grid[ai];
        int covered = 0, usable = 0;
        std::vector<std::uint8_t> covers(static_cast<std::size_t>(plan.B1), 0);
        std::vector<std::uint8_t> used(static_cast<std::size_t>(plan.B1), 0);
        parallel_for(plan.B1, threads, [&](int b1) {
            if (!level1_ok[static_cast<std::size_t>(b1)]) return;
            const Dataset dsb = ds.subset(level1[static_cast<std::size_t>(b1)]);
            const int m_b1 = m_from_alpha(n, alpha, p_hats[static_cast<std::size_t>(b1)]);
            std::vector<double> draws;
            draws.reserve(static_cast<std::size_t>(plan.B2));
            for (int b2 = 0; b2 < plan.B2; ++b2) {
                RngStream rs = rng.child("alpha_level2", ai).child("b1", static_cast<std::uint64_t>(b1))
                                   .child("b2", static_cast<std::uint64_t>(b2));
                try {
                    const std::vector<int> rows = resample_rows(dsb.n(), m_b1, rs);
                    const DtrFit f = fit_dtr(dsb.subset(rows), qspecs, cfg, rs.child("fit"));
                    draws.push_back(c.dot(f.stage(plan.c_stage).theta.psi));
                } catch (const std::exception&) {
                }
            }
            if (draws.size() < 2) return;
            const double lo = percentile(draws, 0.025);
            const double hi = percentile(draws, 0.975);
            used[static_cast<std::size_t>(b1)] = 1;
            covers[static_cast<std::size_t>(b1)] = (lo <= target0 && target0 <= hi) ? 1 : 0;
        });
        for (int b1 = 0; b1 < plan.B1; ++b1) {
            usable += used[static_cast<std::size_t>(b1)];
            covered += covers[static_cast<std::size_t>(b1)];
        }
        if (usable > 0 && static_cast<double>(covered) / static_cast<double>(usable) >= plan.nominal)
            return alpha;
    }
    return plan.alpha_grid.back();
}

BootResult bootstrap_ci(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg, int B,
                        int m, const std::vector<TargetSel>& targets, RngStream rng, int threads) {
    if (B < 2) throw std::invalid_argument("bootstrap_ci: B must be at least 2");
    const int n = ds.n();
    if (m > n || m < 1) throw std::invalid_argument("bootstrap_ci: m must be in [1, n]");
    const int t_max = ds.n_stages();

    const DtrFit fit0 = fit_dtr(ds, qspecs, cfg, rng.child("fit0"));

    bool need_m = false, need_n = false;
    for (const auto& t : targets) (t.stage == t_max ? need_n : need_m) = true;
    if (m == n) need_n = need_n || need_m;

    // per-replicate estimates per target
    std::vector<std::vector<double>> draws(targets.size());
    for (auto& d : draws) d.reserve(static_cast<std::size_t>(B));
    std::vector<std::vector<double>> rep_vals(static_cast<std::size_t>(B),
                                              std::vector<double>(targets.size(),
                                                                  std::numeric_limits<double>::quiet_NaN()));
    std::vector<std::uint8_t> ok_m(static_cast<std::size_t>(B), 1), ok_n(static_cast<std::size_t>(B), 1);

    parallel_for(B, threads, [&](int b) {
        RngStream rs = rng.child("boot", static_cast<std::uint64_t>(b));
        DtrFit fit_m, fit_n;
        bool have_m = false, have_n = false;
        if (need_m || m == n) {
            try {
                RngStream ms = rs.child("m_sample");
                const std::vector<int> rows = resample_rows(n, m, ms);
                fit_m = fit_dtr(ds.subset(rows), qspecs, cfg, ms.child("fit"));
                have_m = true;
            } catch (const std::exception&) {
                ok_m[static_cast<std::size_t>(b)] = 0;
            }
        }
        if (need_n && m != n) {
            try {
                RngStream ns = rs.child("n_sample");
                const std::vector<int> rows = resample_rows(n, n, ns);
                MethodConfig sub = cfg;
                sub.fit_down_to = t_max;  // only final-stage targets read this pass
                fit_n = fit_dtr(ds.subset(rows), qspecs, sub, ns.child("fit"));
                have_n = true;
            } catch (const std::exception&) {
                ok_n[static_cast<std::size_t>(b)] = 0;
            }
        }
        for (std::size_t ti = 0; ti < targets.size(); ++ti) {
            const bool final_stage = targets[ti].stage == t_max;
            const DtrFit* f = nullptr;
            if (final_stage && m != n && have_n) f = &fit_n;
            if ((!final_stage || m == n) && have_m) f = &fit_m;
            if (f) rep_vals[static_cast<std::size_t>(b)][ti] = c_value(*f, targets[ti]);
        }
    });

    BootResult result;
    result.B = B;
    int failed = 0;
    for (int b = 0; b < B; ++b)
        if (!ok_m[static_cast<std::size_t>(b)] || !ok_n[static_cast<std::size_t>(b)]) ++failed;
    result.failed = failed;
    if (failed > B / 5)
        throw std::runtime_error("bootstrap_ci: more than 20% of resamples failed (" + std::to_string(failed) +
                                 "/" + std::to_string(B) + ")");

    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        std::vector<double> d;
        d.reserve(static_cast<std::size_t>(B));
        for (int b = 0; b < B; ++b) {
            const double v = rep_vals[static_cast<std::size_t>(b)][ti];
            if (std::isfinite(v)) d.push_back(v);
        }
        if (d.size() < 2) throw std::runtime_error("bootstrap_ci: too few successful replicates");
        TargetResult tr;
        tr.sel = targets[ti];
        tr.estimate = c_value(fit0, targets[ti]);
        tr.sd = sample_sd(d);
        tr.lo = percentile(d, 0.025);
        tr.hi = percentile(d, 0.975);
        tr.m = targets[ti].stage == t_max ? n : m;
        result.targets.push_back(tr);
    }
    return result;
}

void write_bootstrap_csv(const std::string& path, const BootResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "parameter,estimate,sd,lo,hi,m,B\n";
    for (const auto& t : result.targets)
        out << t.sel.name << "," << t.estimate << "," << t.sd << "," << t.lo << "," << t.hi << "," << t.m
            << "," << result.B << "\n";
}

}  // namespace dtrwql
