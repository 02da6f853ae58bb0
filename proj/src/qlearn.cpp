#include "dtrwql/qlearn.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dtrwql/sa.hpp"
#include "dtrwql/stats.hpp"

#include "json.hpp"

namespace dtrwql {

std::string method_name(Method m) {
    switch (m) {
        case Method::all: return "all";
        case Method::naive: return "naive";
        case Method::cc: return "cc";
        case Method::mi: return "mi";
        case Method::wq_ee: return "wq_ee";
        case Method::wq_sa: return "wq_sa";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    for (Method m : {Method::all, Method::naive, Method::cc, Method::mi, Method::wq_ee, Method::wq_sa})
        if (method_name(m) == s) return m;
    throw std::runtime_error("unknown method '" + s + "'");
}

const InstrumentSpec* MethodConfig::instruments_for(int stage) const {
    for (const auto& inst : instruments)
        if (inst.stage == stage) return &inst;
    return nullptr;
}

double MethodConfig::gamma_prime_for(int stage) const {
    const auto idx = static_cast<std::size_t>(stage - 1);
    if (idx >= gamma_prime.size())
        throw std::runtime_error("wq_sa: no gamma_prime configured for stage " + std::to_string(stage));
    return gamma_prime[idx];
}

namespace {

bool has_missing_cells(const Dataset& ds) {
    for (const auto& st : ds.stages)
        for (int i = 0; i < st.present.rows(); ++i)
            for (int j = 0; j < st.present.cols(); ++j)
                if (!st.present(i, j)) return true;
    return false;
}

Eigen::MatrixXd columns_matrix(const Dataset& ds, const std::vector<std::string>& names,
                               const std::vector<int>& rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        const ColumnRef ref = resolve_column(ds, names[j]);
        for (std::size_t k = 0; k < rows.size(); ++k)
            m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = column_value(ds, ref, rows[k]);
    }
    return m;
}

// validate that (u, z) stay inside (H_t, A_t) and do not overlap
void check_instrument_spec(const Dataset& ds, const InstrumentSpec& inst, int stage) {
    std::set<std::string> allowed;
    for (const auto& c : history_columns(ds, stage)) allowed.insert(c);
    allowed.insert("A" + std::to_string(stage));
    std::set<std::string> seen;
    for (const auto* group : {&inst.u_cols, &inst.z_cols})
        for (const auto& c : *group) {
            if (!allowed.count(c))
                throw std::runtime_error("instrument spec: column '" + c + "' is not in (H_" +
                                         std::to_string(stage) + ", A_" + std::to_string(stage) + ")");
            if (!seen.insert(c).second)
                throw std::runtime_error("instrument spec: column '" + c + "' appears twice");
        }
}

struct StageResponse {
    std::vector<int> complete_rows;  // complete-upto-t rows
    Eigen::VectorXd y;               // per complete row (0 where unavailable)
    std::vector<std::uint8_t> r;     // availability per complete row
};

StageResponse stage_response(const Dataset& ds, int t, int t_max, const FeatureEval* fe_next,
                             const ThetaHat* theta_next, bool restrict_complete) {
    StageResponse sr;
    for (int i = 0; i < ds.n(); ++i) sr.complete_rows.push_back(i);
    if (restrict_complete) {
        const CompleteMask cm = ds.complete_upto(t);
        sr.complete_rows.clear();
        for (int i = 0; i < ds.n(); ++i)
            if (cm.mask[static_cast<std::size_t>(i)]) sr.complete_rows.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(sr.complete_rows.size());
    sr.y.setZero(m);
    sr.r.assign(sr.complete_rows.size(), 1);
    for (Eigen::Index k = 0; k < m; ++k) {
        const int i = sr.complete_rows[static_cast<std::size_t>(k)];
        if (t == t_max) {
            sr.y(k) = ds.total_outcome(i);
        } else {
            const PseudoOutcome po = pseudo_outcome(*fe_next, *theta_next, i);
            sr.y(k) = po.available ? po.value : 0.0;
            sr.r[static_cast<std::size_t>(k)] = po.available ? 1 : 0;
        }
    }
    return sr;
}

// backward induction over one dataset; `prune` selects the naive variant,
// `weighted` turns on the missingness weighting for wq_ee / wq_sa
DtrFit fit_backward(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg) {
    const int t_max = ds.n_stages();
    if (static_cast<int>(qspecs.size()) != t_max)
        throw std::runtime_error("fit_dtr: expected one QSpec per stage");

    const bool prune = cfg.method == Method::naive;
    const bool restrict_complete =
        cfg.method == Method::cc || cfg.method == Method::wq_ee || cfg.method == Method::wq_sa;

    DtrFit fit;
    fit.method = cfg.method;
    fit.stages.resize(static_cast<std::size_t>(t_max));

    std::vector<FeatureEval> evals;
    evals.reserve(static_cast<std::size_t>(t_max));
    for (int t = 1; t <= t_max; ++t) {
        const QSpec& spec = qspecs[static_cast<std::size_t>(t - 1)];
        fit.stages[static_cast<std::size_t>(t - 1)].spec_used = prune ? prune_partially_observed(ds, spec) : spec;
        evals.emplace_back(ds, fit.stages[static_cast<std::size_t>(t - 1)].spec_used);
    }

    for (int t = t_max; t >= std::max(1, cfg.fit_down_to); --t) {
        StageFit& sf = fit.stages[static_cast<std::size_t>(t - 1)];
        const FeatureEval& fe = evals[static_cast<std::size_t>(t - 1)];
        const FeatureEval* fe_next = t < t_max ? &evals[static_cast<std::size_t>(t)] : nullptr;
        const ThetaHat* theta_next = t < t_max ? &fit.stages[static_cast<std::size_t>(t)].theta : nullptr;

        const StageResponse sr = stage_response(ds, t, t_max, fe_next, theta_next, restrict_complete);
        const int n_units = static_cast<int>(sr.complete_rows.size());
        sf.n_complete = n_units;
        sf.n_respondents = 0;
        for (auto v : sr.r) sf.n_respondents += v;
        if (sf.n_respondents == 0)
            throw std::runtime_error("fit_dtr: no usable responses at stage " + std::to_string(t));

        Eigen::VectorXd unit_weights = Eigen::VectorXd::Ones(n_units);
        const bool weighted = (cfg.method == Method::wq_ee || cfg.method == Method::wq_sa) && t < t_max &&
                              sf.n_respondents < n_units;
        if (weighted && cfg.method == Method::wq_ee) {
            const InstrumentSpec* inst = cfg.instruments_for(t);
            if (!inst)
                throw std::runtime_error("wq_ee: no instruments configured for stage " + std::to_string(t));
            check_instrument_spec(ds, *inst, t);
            try {
                EESlice slice;
                slice.y = sr.y;
                slice.r = sr.r;
                slice.u = columns_matrix(ds, inst->u_cols, sr.complete_rows);
                slice.z = columns_matrix(ds, inst->z_cols, sr.complete_rows);
                slice.n_total = ds.n();
                const EEFit ee = fit_gamma_ee(slice, cfg.search, cfg.kernel);
                unit_weights = ee.weights;
                sf.gamma = ee.gamma_hat;
                sf.gamma_first = ee.gamma_first;
                sf.clip_count = ee.clip_count;
                sf.cap_count = ee.cap_count;
            } catch (const std::exception&) {
                if (!cfg.ee_fallback_cc) throw;
                sf.ee_fell_back = true;
                for (int k = 0; k < n_units; ++k)
                    unit_weights(k) = sr.r[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
            }
        } else if (weighted && cfg.method == Method::wq_sa) {
            std::vector<std::string> g_cols = history_columns(ds, t);
            g_cols.push_back("A" + std::to_string(t));
            const Eigen::MatrixXd g = columns_matrix(ds, g_cols, sr.complete_rows);
            const SAFit sa = weights_sa(g, sr.y, sr.r, cfg.gamma_prime_for(t), cfg.kernel);
            unit_weights = sa.weights;
            sf.gamma = sa.gamma_prime;
            sf.clip_count = sa.clip_count;
            sf.cap_count = sa.cap_count;
        } else if (cfg.method == Method::wq_sa && t < t_max) {
            sf.gamma = cfg.gamma_prime_for(t);  // recorded even when no nonresponse
        }

        // assemble the WLS problem over units with available responses
        std::vector<int> rows;
        std::vector<double> yv, wv;
        for (int k = 0; k < n_units; ++k) {
            if (!sr.r[static_cast<std::size_t>(k)]) continue;
            const double w = unit_weights(k);
            if (w <= 0.0) continue;
            rows.push_back(sr.complete_rows[static_cast<std::size_t>(k)]);
            yv.push_back(sr.y(k));
            wv.push_back(w);
        }
        const Eigen::MatrixXd x = fe.design(rows);
        const Eigen::Map<const Eigen::VectorXd> y(yv.data(), static_cast<Eigen::Index>(yv.size()));
        const Eigen::Map<const Eigen::VectorXd> w(wv.data(), static_cast<Eigen::Index>(wv.size()));
        const Eigen::VectorXd theta = wls_fit(x, y, w);
        sf.theta = ThetaHat::from_stacked(t, theta, fe.d0());
        const Eigen::MatrixXd cov = wls_sandwich(x, y, w, theta);
        sf.cov_psi = cov.bottomRightCorner(fe.d1(), fe.d1());
    }
    return fit;
}

}  // namespace

DtrFit fit_dtr(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg, RngStream rng) {
    switch (cfg.method) {
        case Method::all:
            if (has_missing_cells(ds))
                throw std::runtime_error("method 'all' requires a fully observed dataset");
            return fit_backward(ds, qspecs, cfg);
        case Method::naive:
        case Method::cc:
        case Method::wq_ee:
        case Method::wq_sa:
            return fit_backward(ds, qspecs, cfg);
        case Method::mi: {
            if (!has_missing_cells(ds)) {
                // imputation is a no-op; keep the estimates bit-identical to
                // the other methods in the degenerate case
                DtrFit f = fit_backward(ds, qspecs, cfg);
                f.method = Method::mi;
                return f;
            }
            const std::vector<Dataset> completed =
                pmm_impute(ds, cfg.mi_m, cfg.mi_k, cfg.mi_cycles, rng.child("pmm"), cfg.mi_predictors);
            MethodConfig sub = cfg;
            sub.method = Method::all;
            DtrFit avg;
            for (std::size_t j = 0; j < completed.size(); ++j) {
                DtrFit f = fit_backward(completed[j], qspecs, sub);
                if (j == 0) {
                    avg = std::move(f);
                } else {
                    for (std::size_t s = 0; s < avg.stages.size(); ++s) {
                        avg.stages[s].theta.beta += f.stages[s].theta.beta;
                        avg.stages[s].theta.psi += f.stages[s].theta.psi;
                        avg.stages[s].cov_psi += f.stages[s].cov_psi;
                    }
                }
            }
            const double inv_m = 1.0 / static_cast<double>(completed.size());
            for (auto& s : avg.stages) {
                s.theta.beta *= inv_m;
                s.theta.psi *= inv_m;
                s.cov_psi *= inv_m;
            }
            avg.method = Method::mi;
            return avg;
        }
    }
    throw std::logic_error("fit_dtr: unreachable");
}

int recommend(const DtrFit& fit, const Dataset& ds, int row, int t) {
    const FeatureEval fe(ds, fit.stage(t).spec_used);
    return opt_action(fe, fit.stage(t).theta, row);
}

std::vector<Dataset> pmm_impute(const Dataset& ds, int m, int k, int cycles, RngStream rng,
                                PmmPredictors predictors, int* rank_warnings) {
    if (m < 1 || k < 1 || cycles < 1) throw std::invalid_argument("pmm_impute: bad parameters");

    // all modeled columns, missing ones flagged
    struct Col {
        ColumnRef ref;
        std::vector<int> observed_rows;
        bool incomplete = false;
    };
    std::vector<Col> cols;
    for (int t = 1; t <= ds.n_stages(); ++t) {
        const auto& st = ds.stages[static_cast<std::size_t>(t - 1)];
        for (int j = 0; j < st.x.cols(); ++j) {
            Col c;
            c.ref = {ColumnRef::Kind::covariate, t, j};
            for (int i = 0; i < ds.n(); ++i)
                if (st.present(i, j)) c.observed_rows.push_back(i);
            c.incomplete = static_cast<int>(c.observed_rows.size()) < ds.n();
            cols.push_back(c);
        }
        if (predictors != PmmPredictors::covariates_only)
            cols.push_back({{ColumnRef::Kind::treatment, t, 0}, {}, false});
        if (predictors == PmmPredictors::all_columns)
            cols.push_back({{ColumnRef::Kind::outcome, t, 0}, {}, false});
    }
    std::vector<std::size_t> incomplete_idx;
    for (std::size_t c = 0; c < cols.size(); ++c)
        if (cols[c].incomplete) {
            if (static_cast<int>(cols[c].observed_rows.size()) < k)
                throw std::runtime_error("pmm_impute: fewer than k complete donors for column " +
                                         column_name(ds, cols[c].ref));
            incomplete_idx.push_back(c);
        }

    int warnings = 0;
    std::vector<Dataset> out;
    out.reserve(static_cast<std::size_t>(m));
    for (int imp = 0; imp < m; ++imp) {
        RngStream rs = rng.child("imputation", static_cast<std::uint64_t>(imp));
        Dataset work = ds;

        // start from random observed donors
        for (const std::size_t ci : incomplete_idx) {
            const Col& c = cols[ci];
            auto& st = work.stages[static_cast<std::size_t>(c.ref.stage - 1)];
            for (int i = 0; i < ds.n(); ++i) {
                if (st.present(i, c.ref.column)) continue;
                const int donor = c.observed_rows[static_cast<std::size_t>(rs.uniform_below(c.observed_rows.size()))];
                st.x(i, c.ref.column) = ds.stages[static_cast<std::size_t>(c.ref.stage - 1)].x(donor, c.ref.column);
            }
        }

        for (int cycle = 0; cycle < cycles; ++cycle) {
            for (const std::size_t ci : incomplete_idx) {
                const Col& c = cols[ci];
                auto& st = work.stages[static_cast<std::size_t>(c.ref.stage - 1)];

                // regress the column on every other column over its donors
                const Eigen::Index d = static_cast<Eigen::Index>(cols.size());  // intercept replaces self
                Eigen::MatrixXd x(ds.n(), d);
                for (int i = 0; i < ds.n(); ++i) {
                    Eigen::Index jj = 0;
                    x(i, jj++) = 1.0;
                    for (std::size_t cj = 0; cj < cols.size(); ++cj) {
                        if (cj == ci) continue;
                        x(i, jj++) = column_value(work, cols[cj].ref, i);
                    }
                }
                Eigen::VectorXd y(static_cast<Eigen::Index>(c.observed_rows.size()));
                Eigen::MatrixXd xd(static_cast<Eigen::Index>(c.observed_rows.size()), d);
                for (std::size_t q = 0; q < c.observed_rows.size(); ++q) {
                    const int i = c.observed_rows[q];
                    y(static_cast<Eigen::Index>(q)) = ds.stages[static_cast<std::size_t>(c.ref.stage - 1)].x(i, c.ref.column);
                    xd.row(static_cast<Eigen::Index>(q)) = x.row(i);
                }
                Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xd);
                qr.setThreshold(1e-10);
                if (qr.rank() < d) ++warnings;  // collinear predictors effectively dropped
                const Eigen::VectorXd coef = qr.solve(y);
                const Eigen::VectorXd pred = x * coef;

                // donors sorted by predicted value; k nearest by |pred diff|
                std::vector<std::pair<double, int>> donor_pred;
                donor_pred.reserve(c.observed_rows.size());
                for (const int i : c.observed_rows) donor_pred.emplace_back(pred(i), i);
                std::sort(donor_pred.begin(), donor_pred.end());

                for (int i = 0; i < ds.n(); ++i) {
                    if (st.present(i, c.ref.column)) continue;
                    const double target = pred(i);
                    auto it = std::lower_bound(donor_pred.begin(), donor_pred.end(), std::make_pair(target, -1));
                    // gather the k closest around the insertion point
                    auto lo = it, hi = it;
                    std::vector<int> candidates;
                    while (static_cast<int>(candidates.size()) < k) {
                        const bool can_lo = lo != donor_pred.begin();
                        const bool can_hi = hi != donor_pred.end();
                        if (!can_lo && !can_hi) break;
                        double d_lo = can_lo ? std::fabs(std::prev(lo)->first - target)
                                             : std::numeric_limits<double>::infinity();
                        double d_hi = can_hi ? std::fabs(hi->first - target)
                                             : std::numeric_limits<double>::infinity();
                        if (d_lo <= d_hi) {
                            --lo;
                            candidates.push_back(lo->second);
                        } else {
                            candidates.push_back(hi->second);
                            ++hi;
                        }
                    }
                    const int donor = candidates[static_cast<std::size_t>(rs.uniform_below(candidates.size()))];
                    st.x(i, c.ref.column) =
                        ds.stages[static_cast<std::size_t>(c.ref.stage - 1)].x(donor, c.ref.column);
                }
            }
        }

        // completed output has no missing cells
        for (auto& st : work.stages) st.present.setOnes();
        out.push_back(std::move(work));
    }
    if (rank_warnings) *rank_warnings = warnings;
    return out;
}

CvResult cross_validate_value(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg,
                              int splits, double train_frac, RngStream rng) {
    if (splits < 1) throw std::invalid_argument("cross_validate_value: splits must be positive");
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw std::invalid_argument("cross_validate_value: train_frac must be in (0,1)");
    const int n = ds.n();
    const int n_train = std::clamp(static_cast<int>(std::lround(train_frac * n)), 1, n - 1);

    CvResult res;
    for (int s = 0; s < splits; ++s) {
        RngStream rs = rng.child("split", static_cast<std::uint64_t>(s));
        std::vector<int> perm(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
        for (int i = n - 1; i > 0; --i)
            std::swap(perm[static_cast<std::size_t>(i)],
                      perm[static_cast<std::size_t>(rs.uniform_below(static_cast<std::uint64_t>(i + 1)))]);
        const std::vector<int> train_rows(perm.begin(), perm.begin() + n_train);
        const std::vector<int> test_rows(perm.begin() + n_train, perm.end());

        try {
            const Dataset train = ds.subset(train_rows);
            const Dataset test = ds.subset(test_rows);
            const DtrFit fit = fit_dtr(train, qspecs, cfg, rs.child("fit"));

            // regime value on the test rows: fitted stage-1 Q at the
            // recommended action, over rows with the needed features observed
            const FeatureEval fe1(test, fit.stage(1).spec_used);
            double v_sum = 0.0, obs_sum = 0.0;
            int used = 0;
            for (int i = 0; i < test.n(); ++i) {
                if (!fe1.row_available(i)) continue;
                const int a = opt_action(fe1, fit.stage(1).theta, i);
                v_sum += q_value(fe1, fit.stage(1).theta, i, a);
                obs_sum += test.total_outcome(i);
                ++used;
            }
            if (used == 0) throw std::runtime_error("no evaluable test rows");
            res.per_split.push_back((v_sum - obs_sum) / static_cast<double>(used));
        } catch (const std::exception&) {
            ++res.skipped;
        }
    }
    if (res.per_split.empty()) throw std::runtime_error("cross_validate_value: every split failed");
    res.mean_improvement = mean(res.per_split);
    return res;
}

std::string DtrFit::report_json() const {
    nlohmann::json j;
    j["method"] = method_name(method);
    nlohmann::json stages_json = nlohmann::json::array();
    for (const auto& s : stages) {
        nlohmann::json sj;
        sj["stage"] = s.theta.stage;
        sj["beta"] = std::vector<double>(s.theta.beta.data(), s.theta.beta.data() + s.theta.beta.size());
        sj["psi"] = std::vector<double>(s.theta.psi.data(), s.theta.psi.data() + s.theta.psi.size());
        std::vector<std::string> phi0, phi1;
        for (const auto& term : s.spec_used.treatment_free) phi0.push_back(term.to_string());
        for (const auto& term : s.spec_used.blip) phi1.push_back(term.to_string());
        sj["treatment_free"] = phi0;
        sj["blip"] = phi1;
        sj["n_complete"] = s.n_complete;
        sj["n_respondents"] = s.n_respondents;
        if (std::isfinite(s.gamma)) sj["gamma"] = s.gamma;
        if (std::isfinite(s.gamma_first)) sj["gamma_first_step"] = s.gamma_first;
        sj["weight_clip_count"] = s.clip_count;
        sj["denominator_cap_count"] = s.cap_count;
        sj["ee_fell_back_to_cc"] = s.ee_fell_back;
        stages_json.push_back(sj);
    }
    j["stages"] = stages_json;
    return j.dump(2);
}

}  // namespace dtrwql
