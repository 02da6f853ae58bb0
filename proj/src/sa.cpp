#include "dtrwql/sa.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dtrwql/linmodel.hpp"
#include "dtrwql/stats.hpp"

namespace dtrwql {

SAFit weights_sa(const Eigen::MatrixXd& g, const Eigen::VectorXd& y, const std::vector<std::uint8_t>& r,
                 double gamma_prime, KernelConfig cfg) {
    const int n = static_cast<int>(y.size());
    if (n == 0) throw std::runtime_error("weights_sa: empty slice");
    if (!std::isfinite(gamma_prime)) throw std::invalid_argument("weights_sa: gamma_prime must be finite");

    SAFit fit;
    fit.gamma_prime = gamma_prime;
    fit.yscale = standardize_respondents(y, r);

    int n_nonresp = 0;
    for (auto v : r) n_nonresp += v ? 0 : 1;
    if (n_nonresp == 0) {
        fit.pi_hat = Eigen::VectorXd::Ones(n);
        fit.weights = Eigen::VectorXd::Ones(n);
        return fit;
    }

    Eigen::VectorXd y_std(n);
    for (int i = 0; i < n; ++i)
        y_std(i) = r[static_cast<std::size_t>(i)] ? fit.yscale.to_std(y(i)) : 0.0;
    const double gamma_std = fit.yscale.gamma_to_std(gamma_prime);

    const Eigen::VectorXd bw = bandwidth_rot(g);
    const SHatTable tab = shat_profile(gamma_std, g, y_std, r, bw, g, cfg);
    fit.cap_count = tab.cap_count;

    fit.pi_hat.resize(n);
    fit.weights.setZero(n);
    for (int i = 0; i < n; ++i) {
        if (!r[static_cast<std::size_t>(i)]) {
            fit.pi_hat(i) = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const double pi = pi_from_shat(tab.exp_shat(i), gamma_std, y_std(i));
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

std::vector<double> tilt_sample(double cond_mean, const Kde& resid_kde, double gamma_prime, int count,
                                RngStream& rng, int n_proposals) {
    if (count < 1) throw std::invalid_argument("tilt_sample: count must be positive");
    const int m = n_proposals > 0 ? n_proposals : std::max(1000, 50 * count);

    std::vector<double> proposals(static_cast<std::size_t>(m));
    std::vector<double> logw(static_cast<std::size_t>(m));
    double max_logw = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
        const double y = cond_mean + resid_kde.sample(rng);
        proposals[static_cast<std::size_t>(j)] = y;
        logw[static_cast<std::size_t>(j)] = gamma_prime * y;
        max_logw = std::max(max_logw, logw[static_cast<std::size_t>(j)]);
    }
    if (!std::isfinite(max_logw))
        throw std::runtime_error("tilt_sample: importance weights degenerate; review gamma_prime or the y scale");

    std::vector<double> cum(static_cast<std::size_t>(m));
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
        total += std::exp(logw[static_cast<std::size_t>(j)] - max_logw);
        cum[static_cast<std::size_t>(j)] = total;
    }
    if (!(total > 0.0))
        throw std::runtime_error("tilt_sample: importance weights underflow; review gamma_prime or the y scale");

    std::vector<double> out(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        const double u = rng.uniform() * total;
        const auto it = std::lower_bound(cum.begin(), cum.end(), u);
        const std::size_t j = std::min(static_cast<std::size_t>(it - cum.begin()), static_cast<std::size_t>(m - 1));
        out[static_cast<std::size_t>(k)] = proposals[j];
    }
    return out;
}

namespace {

// complete-case backward fit of stages T..from_stage (final-stage responses
// are fully observed; earlier responses are restricted to available rows)
std::vector<ThetaHat> cc_backward(const Dataset& ds, const std::vector<QSpec>& qspecs, int from_stage) {
    const int t_max = ds.n_stages();
    std::vector<ThetaHat> thetas(static_cast<std::size_t>(t_max));
    for (int t = t_max; t >= from_stage; --t) {
        const FeatureEval fe(ds, qspecs[static_cast<std::size_t>(t - 1)]);
        const CompleteMask cm = ds.complete_upto(t);
        std::vector<int> rows;
        Eigen::VectorXd y(ds.n());
        if (t == t_max) {
            for (int i = 0; i < ds.n(); ++i)
                if (cm.mask[static_cast<std::size_t>(i)]) {
                    y(static_cast<Eigen::Index>(rows.size())) = ds.total_outcome(i);
                    rows.push_back(i);
                }
        } else {
            const FeatureEval fe_next(ds, qspecs[static_cast<std::size_t>(t)]);
            for (int i = 0; i < ds.n(); ++i) {
                if (!cm.mask[static_cast<std::size_t>(i)]) continue;
                const PseudoOutcome po = pseudo_outcome(fe_next, thetas[static_cast<std::size_t>(t)], i);
                if (!po.available) continue;
                y(static_cast<Eigen::Index>(rows.size())) = po.value;
                rows.push_back(i);
            }
        }
        if (rows.empty()) throw std::runtime_error("calibrate_gamma: empty complete-case set at stage " + std::to_string(t));
        const Eigen::MatrixXd x = fe.design(rows);
        const Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rows.size()));
        const Eigen::VectorXd theta = wls_fit(x, y.head(static_cast<Eigen::Index>(rows.size())), w);
        thetas[static_cast<std::size_t>(t - 1)] = ThetaHat::from_stacked(t, theta, fe.d0());
    }
    return thetas;
}

}  // namespace

CalibrationResult calibrate_gamma(const Dataset& ds, const std::vector<QSpec>& qspecs,
                                  const std::vector<double>& grid, int mcr, double threshold,
                                  std::uint64_t seed, KernelConfig cfg) {
    if (grid.empty()) throw std::invalid_argument("calibrate_gamma: empty grid");
    if (mcr < 1) throw std::invalid_argument("calibrate_gamma: mcr must be positive");
    const int t_max = ds.n_stages();
    if (t_max < 2) throw std::runtime_error("calibrate_gamma: needs at least two stages");
    const int t = t_max - 1;

    const std::vector<ThetaHat> thetas = cc_backward(ds, qspecs, t + 1);

    // complete-upto-t slice with pseudo-outcome estimates
    const CompleteMask cm = ds.complete_upto(t);
    const FeatureEval fe_next(ds, qspecs[static_cast<std::size_t>(t)]);
    const FeatureEval fe_t(ds, qspecs[static_cast<std::size_t>(t - 1)]);
    std::vector<int> rows;
    std::vector<std::uint8_t> r;
    std::vector<double> y_all;
    for (int i = 0; i < ds.n(); ++i) {
        if (!cm.mask[static_cast<std::size_t>(i)]) continue;
        const PseudoOutcome po = pseudo_outcome(fe_next, thetas[static_cast<std::size_t>(t)], i);
        rows.push_back(i);
        r.push_back(po.available ? 1 : 0);
        y_all.push_back(po.available ? po.value : 0.0);
    }
    const int n_units = static_cast<int>(rows.size());
    std::vector<double> y_obs;
    std::vector<int> nonresp_units;
    for (int k = 0; k < n_units; ++k)
        (r[static_cast<std::size_t>(k)] ? static_cast<void>(y_obs.push_back(y_all[static_cast<std::size_t>(k)]))
                                        : static_cast<void>(nonresp_units.push_back(k)));
    if (static_cast<int>(y_obs.size()) < 5)
        throw std::runtime_error("calibrate_gamma: respondent set too small for density estimation");

    // conditioning matrix g = (h_t, a_t) over the slice
    std::vector<std::string> g_cols = history_columns(ds, t);
    g_cols.push_back("A" + std::to_string(t));
    Eigen::MatrixXd g(n_units, static_cast<Eigen::Index>(g_cols.size()));
    for (std::size_t j = 0; j < g_cols.size(); ++j) {
        const ColumnRef ref = resolve_column(ds, g_cols[j]);
        for (int k = 0; k < n_units; ++k) g(k, static_cast<Eigen::Index>(j)) = column_value(ds, ref, rows[static_cast<std::size_t>(k)]);
    }

    Eigen::Map<const Eigen::VectorXd> y_vec(y_all.data(), n_units);
    const YScale yscale = standardize_respondents(y_vec, r);
    Eigen::VectorXd y_std(n_units);
    for (int k = 0; k < n_units; ++k)
        y_std(k) = r[static_cast<std::size_t>(k)] ? yscale.to_std(y_all[static_cast<std::size_t>(k)]) : 0.0;

    const Eigen::VectorXd bw = bandwidth_rot(g);
    const ShatProfiler profiler(g, r, y_std, bw, g, cfg);

    // respondent conditional mean by kernel regression, plus residual density
    Eigen::MatrixXd g_resp(static_cast<Eigen::Index>(y_obs.size()), g.cols());
    Eigen::VectorXd y_resp(static_cast<Eigen::Index>(y_obs.size()));
    {
        Eigen::Index q = 0;
        for (int k = 0; k < n_units; ++k) {
            if (!r[static_cast<std::size_t>(k)]) continue;
            g_resp.row(q) = g.row(k);
            y_resp(q) = y_all[static_cast<std::size_t>(k)];
            ++q;
        }
    }
    const Eigen::VectorXd bw_resp = bandwidth_rot(g_resp);
    const Eigen::VectorXd cond_mean = nw_regress(g_resp, y_resp, bw_resp, g);
    std::vector<double> resid;
    {
        Eigen::Index q = 0;
        for (int k = 0; k < n_units; ++k) {
            if (!r[static_cast<std::size_t>(k)]) continue;
            resid.push_back(y_resp(q) - cond_mean(k));
            ++q;
        }
    }
    const Kde resid_kde = kde_fit(resid);

    // the assumed Q-function design over the slice
    const Eigen::MatrixXd design = fe_t.design(rows);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n_units);

    CalibrationResult result;
    result.grid = grid;
    result.mcr = mcr;
    result.threshold = threshold;

    const RngStream root = RngStream(seed).child("calibrate");
    const int pool_size = 1000;

    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const double gp = grid[gi];
        const double gp_std = yscale.gamma_to_std(gp);
        const SHatTable tab = profiler.eval(gp_std);
        const RngStream g_stream = root.child("gamma", gi);

        std::vector<double> pvals(static_cast<std::size_t>(mcr));
        for (int rep = 0; rep < mcr; ++rep) {
            RngStream rs = g_stream.child("rep", static_cast<std::uint64_t>(rep));

            // impute the missing pseudo-outcomes from the tilted density;
            // the tilt weight exp(gp*(m+eps)) reduces to exp(gp*eps), so one
            // proposal pool serves every nonrespondent unit
            Eigen::VectorXd y_star(n_units);
            for (int k = 0; k < n_units; ++k) y_star(k) = y_all[static_cast<std::size_t>(k)];
            if (!nonresp_units.empty()) {
                std::vector<double> pool(static_cast<std::size_t>(pool_size));
                std::vector<double> cum(static_cast<std::size_t>(pool_size));
                double max_lw = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < pool_size; ++j) {
                    pool[static_cast<std::size_t>(j)] = resid_kde.sample(rs);
                    max_lw = std::max(max_lw, gp * pool[static_cast<std::size_t>(j)]);
                }
                double total = 0.0;
                for (int j = 0; j < pool_size; ++j) {
                    total += std::exp(gp * pool[static_cast<std::size_t>(j)] - max_lw);
                    cum[static_cast<std::size_t>(j)] = total;
                }
                for (int k : nonresp_units) {
                    const double u = rs.uniform() * total;
                    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
                    const std::size_t j = std::min(static_cast<std::size_t>(it - cum.begin()),
                                                   static_cast<std::size_t>(pool_size - 1));
                    y_star(k) = cond_mean(k) + pool[j];
                }
            }

            // refit the assumed Q-function on the completed data
            const Eigen::VectorXd theta_star = wls_fit(design, y_star, ones);
            const Eigen::VectorXd fitted = design * theta_star;
            std::vector<double> resid_star(static_cast<std::size_t>(n_units));
            for (int k = 0; k < n_units; ++k) resid_star[static_cast<std::size_t>(k)] = y_star(k) - fitted(k);
            const Kde kde_star = kde_fit(resid_star);

            // replicate observed pseudo-outcomes under the working model
            std::vector<double> rep_obs;
            for (int k = 0; k < n_units; ++k) {
                const double y2 = fitted(k) + kde_star.sample(rs);
                const double pi = pi_from_shat(tab.exp_shat(k), gp_std, yscale.to_std(y2));
                if (rs.bernoulli(pi)) rep_obs.push_back(y2);
            }
            pvals[static_cast<std::size_t>(rep)] =
                rep_obs.empty() ? 0.0 : wilcoxon_rank_sum(rep_obs, y_obs);
        }
        result.median_p.push_back(percentile(pvals, 0.5));
        result.plausible.push_back(result.median_p.back() > threshold ? 1 : 0);
    }
    return result;
}

}  // namespace dtrwql
