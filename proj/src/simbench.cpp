#include "dtrwql/simbench.hpp"

#include <cmath>
#include <fstream>
#include <mutex>
#include <stdexcept>

#include "dtrwql/stats.hpp"
#include "dtrwql/util.hpp"

namespace dtrwql {

namespace {

double expit(double b) { return 1.0 / (1.0 + std::exp(-b)); }

// exogenous draws shared by the generator and the rollout evaluator
struct Exogenous {
    Eigen::VectorXd x11, x21, x12, x22, eps1, eps2;
    Eigen::VectorXd x31, x32, eps3;  // sim4 only
    Eigen::VectorXd u_r1, u_r2, u_a1, u_a2, u_r3, u_a3;
};

Exogenous draw_exogenous(const SimDesign& design, int n, const RngStream& rng, bool with_missingness) {
    Exogenous e;
    auto draw = [&](const char* label, auto&& gen) {
        RngStream s = rng.child(label);
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = gen(s);
        return v;
    };
    // correlated pair (x11, x21), rho = 0.5
    {
        RngStream s = rng.child("x11_x21");
        e.x11.resize(n);
        e.x21.resize(n);
        const double rho = 0.5;
        for (int i = 0; i < n; ++i) {
            const double z1 = s.normal(), z2 = s.normal();
            e.x11(i) = z1;
            e.x21(i) = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
        }
    }
    e.x12 = draw("x12", [](RngStream& s) { return 2.0 * s.uniform(); });
    e.x22 = draw("x22", [](RngStream& s) { return 2.0 * s.uniform(); });
    e.eps1 = draw("eps1", [](RngStream& s) { return std::sqrt(3.0) * s.normal(); });
    e.eps2 = draw("eps2", [](RngStream& s) { return s.normal(); });
    e.u_a1 = draw("a1", [](RngStream& s) { return s.uniform(); });
    e.u_a2 = draw("a2", [](RngStream& s) { return s.uniform(); });
    if (with_missingness) {
        e.u_r1 = draw("r1", [](RngStream& s) { return s.uniform(); });
        e.u_r2 = draw("r2", [](RngStream& s) { return s.uniform(); });
    }
    if (design.tag == Design::sim4) {
        e.x31 = draw("x31", [](RngStream& s) { return s.normal(); });
        e.x32 = draw("x32", [](RngStream& s) { return 2.0 * s.uniform(); });
        e.eps3 = draw("eps3", [](RngStream& s) { return s.normal(); });
        e.u_a3 = draw("a3", [](RngStream& s) { return s.uniform(); });
        if (with_missingness) e.u_r3 = draw("r3", [](RngStream& s) { return s.uniform(); });
    }
    return e;
}

bool is_sim3(const SimDesign& d) { return d.tag == Design::sim3; }

double stage1_outcome(const SimDesign& d, double x11, double x12, double a1, double eps1) {
    if (is_sim3(d))  // theta_1' = (-1, 1, -2, -0.5, -1)
        return a1 * (1.0 + x12) - 2.0 - 0.5 * x11 - x12 + eps1;
    // theta_1 = (1, -1, 1.5, 0.5, -0.5)
    return a1 * (3.0 - x12) + 1.5 + 0.5 * x11 - 0.5 * x12 + eps1;
}

// theta_2 = (1, -1, 1, -1, 1, -0.5) in every design
double stage2_outcome(double a1, double x21, double x22, double a2, double eps2) {
    return a2 * (1.0 - a1 + x22) - a1 + x21 - 0.5 * x22 + eps2;
}

// theta_3 = (-1, 1, -0.5, 0.5)
double stage3_outcome(double x31, double x32, double a3, double eps3) {
    return -0.5 + a3 * (-1.0 + x32) + 0.5 * x31 + eps3;
}

int true_opt1(const SimDesign& d, double x12) {
    return (is_sim3(d) ? (-1.0 + x12 >= 0.0) : (1.0 - x12 >= 0.0)) ? 1 : -1;
}

}  // namespace

std::string SimDesign::name() const {
    switch (tag) {
        case Design::sim1: return "sim1";
        case Design::sim2_gz: return "sim2_gz";
        case Design::sim2_int: return "sim2_int";
        case Design::sim3: return "sim3";
        case Design::sim4: return "sim4";
    }
    return "?";
}

std::vector<Eigen::VectorXd> SimDesign::true_psi() const {
    std::vector<Eigen::VectorXd> psi;
    Eigen::VectorXd psi1(2);
    psi1 << (tag == Design::sim3 ? -1.0 : 1.0), (tag == Design::sim3 ? 1.0 : -1.0);
    Eigen::VectorXd psi2(3);
    psi2 << 1.0, -1.0, 1.0;
    psi.push_back(psi1);
    psi.push_back(psi2);
    if (tag == Design::sim4) {
        Eigen::VectorXd psi3(2);
        psi3 << -1.0, 1.0;
        psi.push_back(psi3);
    }
    return psi;
}

SimDesign SimDesign::parse(const std::string& name, double param) {
    for (Design d : {Design::sim1, Design::sim2_gz, Design::sim2_int, Design::sim3, Design::sim4}) {
        SimDesign sd{d, param};
        if (sd.name() == name) {
            if (d == Design::sim2_gz || d == Design::sim2_int) {
                if (param == 0.0) throw std::runtime_error(name + " requires a nonzero parameter");
            } else {
                sd.param = 0.0;
            }
            return sd;
        }
    }
    throw std::runtime_error("unknown design '" + name + "'");
}

GenResult generate(const SimDesign& design, int n, RngStream rng) {
    const Exogenous e = draw_exogenous(design, n, rng, true);
    const int t_count = design.n_stages();

    GenResult out;
    out.true_opt.resize(n, t_count);

    Eigen::VectorXd a1(n), y1(n), a2(n), y2(n), a3, y3;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1> r1(n), r2(n), r3;
    if (t_count == 3) {
        a3.resize(n);
        y3.resize(n);
        r3.resize(n);
    }

    for (int i = 0; i < n; ++i) {
        const double x11 = e.x11(i), x12 = e.x12(i), x21 = e.x21(i), x22 = e.x22(i);

        double p_r1;
        if (is_sim3(design))
            p_r1 = 1.0 / (1.0 + std::exp(-1.0 - x12));
        else
            p_r1 = 1.0 / (1.0 + std::exp(-3.0 + x12));
        r1(i) = e.u_r1(i) < p_r1 ? 1 : 0;

        double p_a1;
        if (is_sim3(design))
            p_a1 = expit(1.0 - x11 - x12 + r1(i));
        else
            p_a1 = expit(-1.0 + x11 + x12 - r1(i));
        a1(i) = e.u_a1(i) < p_a1 ? 1.0 : -1.0;

        y1(i) = stage1_outcome(design, x11, x12, a1(i), e.eps1(i));

        double p_r2;
        switch (design.tag) {
            case Design::sim2_gz: {
                const double y_pse1 = 1.0 - 2.0 * a1(i) + y1(i) + x21 + 0.5 * x22;
                p_r2 = 1.0 / (1.0 + std::exp(design.param * x11 + 0.5 * x12 - 2.0 * a1(i) - y_pse1));
                break;
            }
            case Design::sim2_int: {
                const double y_pse1 = 1.0 - 2.0 * a1(i) + y1(i) + x21 + 0.5 * x22;
                p_r2 = 1.0 / (1.0 + std::exp(0.5 * x12 - 2.0 * a1(i) - y_pse1 + design.param * (x12 - 1.0) * y_pse1));
                break;
            }
            case Design::sim3:
                p_r2 = 1.0 / (1.0 + std::exp(2.5 - std::exp(2.0 * x11) - 0.5 * x12 + a1(i) + y1(i) + x21 + 0.5 * x22));
                break;
            default:
                p_r2 = 1.0 / (1.0 + std::exp(-1.0 + 0.5 * x12 - y1(i) - x21 - 0.5 * x22));
        }
        r2(i) = e.u_r2(i) < p_r2 ? 1 : 0;

        double p_a2;
        if (is_sim3(design))
            p_a2 = expit(-1.0 + x11 - 2.0 * a1(i) + x21);
        else
            p_a2 = expit(-1.0 - x11 - x12 + y1(i) + x21 - r2(i));
        a2(i) = e.u_a2(i) < p_a2 ? 1.0 : -1.0;

        y2(i) = stage2_outcome(a1(i), x21, x22, a2(i), e.eps2(i));

        out.true_opt(i, 0) = true_opt1(design, x12);
        out.true_opt(i, 1) = 1;  // 1 - a1 + x22 >= 0 always

        if (t_count == 3) {
            const double x31 = e.x31(i), x32 = e.x32(i);
            const double p_r3 = 1.0 / (1.0 + std::exp(-y1(i) - y2(i) - 0.5 * x31 - std::fabs(x32 - 1.0)));
            r3(i) = e.u_r3(i) < p_r3 ? 1 : 0;
            const double p_a3 = expit(-1.0 + x31 + x32);
            a3(i) = e.u_a3(i) < p_a3 ? 1.0 : -1.0;
            y3(i) = stage3_outcome(x31, x32, a3(i), e.eps3(i));
            out.true_opt(i, 2) = (-1.0 + x32 >= 0.0) ? 1 : -1;
        }
    }

    auto build = [&](bool masked) {
        Dataset ds;
        ds.ids.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) ds.ids.push_back(std::to_string(i + 1));
        ds.stages.resize(static_cast<std::size_t>(t_count));

        auto& s1 = ds.stages[0];
        s1.covariate_names = {"x11", "x12"};
        s1.x.resize(n, 2);
        s1.present.setOnes(n, 2);
        s1.x.col(0) = e.x11;
        s1.x.col(1) = e.x12;
        s1.a = a1;
        s1.y = y1;

        auto& s2 = ds.stages[1];
        s2.covariate_names = {"x21", "x22"};
        s2.x.resize(n, 2);
        s2.present.setOnes(n, 2);
        s2.x.col(0) = e.x21;
        s2.x.col(1) = e.x22;
        s2.a = a2;
        s2.y = y2;

        if (t_count == 3) {
            auto& s3 = ds.stages[2];
            s3.covariate_names = {"x31", "x32"};
            s3.x.resize(n, 2);
            s3.present.setOnes(n, 2);
            s3.x.col(0) = e.x31;
            s3.x.col(1) = e.x32;
            s3.a = a3;
            s3.y = y3;
        }

        if (masked) {
            for (int i = 0; i < n; ++i) {
                if (!r1(i)) ds.stages[0].present(i, 1) = 0;
                if (!r2(i)) ds.stages[1].present(i, 1) = 0;
                if (t_count == 3 && !r3(i)) ds.stages[2].present(i, 1) = 0;
            }
        }
        return ds;
    };
    out.full = build(false);
    out.masked = build(true);
    return out;
}

std::vector<QSpec> default_qspecs(const SimDesign& design) {
    std::vector<QSpec> specs;
    specs.push_back(QSpec::from_strings(1, {"1", "X1_x11", "X1_x12"}, {"1", "X1_x12"}));
    specs.push_back(QSpec::from_strings(2, {"1", "A1", "X2_x21", "X2_x22", "Y1"}, {"1", "A1", "X2_x22"}));
    if (design.tag == Design::sim4)
        specs.push_back(QSpec::from_strings(3, {"1", "X3_x31", "Y1", "Y2"}, {"1", "X3_x32"}));
    return specs;
}

MethodConfig default_method_config(const SimDesign& design, Method method, double gamma_prime) {
    MethodConfig cfg;
    cfg.method = method;
    if (method == Method::wq_ee) {
        InstrumentSpec s1;
        s1.stage = 1;
        s1.u_cols = {"X1_x12", "A1"};
        s1.z_cols = {"X1_x11"};
        cfg.instruments.push_back(s1);
        if (design.tag == Design::sim4) {
            InstrumentSpec s2;
            s2.stage = 2;
            s2.u_cols = {"X1_x11", "X1_x12", "A1", "Y1", "A2"};
            s2.z_cols = {"X2_x21", "X2_x22"};
            cfg.instruments.push_back(s2);
        }
    } else if (method == Method::wq_sa) {
        cfg.gamma_prime.assign(static_cast<std::size_t>(design.n_stages() - 1), gamma_prime);
    }
    return cfg;
}

EvalResult evaluate_regime(const SimDesign& design, const DtrFit& fit, int n_eval, RngStream rng) {
    const int t_count = design.n_stages();
    if (static_cast<int>(fit.stages.size()) != t_count)
        throw std::invalid_argument("evaluate_regime: fit and design stage counts differ");
    const Exogenous e = draw_exogenous(design, n_eval, rng, false);

    // fully observed rollout cohort, filled stage by stage
    Dataset ds;
    ds.ids.reserve(static_cast<std::size_t>(n_eval));
    for (int i = 0; i < n_eval; ++i) ds.ids.push_back(std::to_string(i + 1));
    ds.stages.resize(static_cast<std::size_t>(t_count));
    ds.stages[0].covariate_names = {"x11", "x12"};
    ds.stages[0].x.resize(n_eval, 2);
    ds.stages[0].present.setOnes(n_eval, 2);
    ds.stages[0].x.col(0) = e.x11;
    ds.stages[0].x.col(1) = e.x12;
    ds.stages[0].a.setZero(n_eval);
    ds.stages[0].y.setZero(n_eval);
    ds.stages[1].covariate_names = {"x21", "x22"};
    ds.stages[1].x.resize(n_eval, 2);
    ds.stages[1].present.setOnes(n_eval, 2);
    ds.stages[1].x.col(0) = e.x21;
    ds.stages[1].x.col(1) = e.x22;
    ds.stages[1].a.setZero(n_eval);
    ds.stages[1].y.setZero(n_eval);
    if (t_count == 3) {
        ds.stages[2].covariate_names = {"x31", "x32"};
        ds.stages[2].x.resize(n_eval, 2);
        ds.stages[2].present.setOnes(n_eval, 2);
        ds.stages[2].x.col(0) = e.x31;
        ds.stages[2].x.col(1) = e.x32;
        ds.stages[2].a.setZero(n_eval);
        ds.stages[2].y.setZero(n_eval);
    }

    std::vector<int> opt_matches(static_cast<std::size_t>(t_count), 0);
    int all_match = 0;
    std::vector<bool> row_all(static_cast<std::size_t>(n_eval), true);

    for (int t = 1; t <= t_count; ++t) {
        const FeatureEval fe(ds, fit.stage(t).spec_used);
        auto& st = ds.stages[static_cast<std::size_t>(t - 1)];
        for (int i = 0; i < n_eval; ++i) {
            const int a = opt_action(fe, fit.stage(t).theta, i);
            st.a(i) = a;
            int true_a;
            if (t == 1)
                true_a = true_opt1(design, e.x12(i));
            else if (t == 2)
                true_a = 1;
            else
                true_a = (-1.0 + e.x32(i) >= 0.0) ? 1 : -1;
            if (a == true_a)
                ++opt_matches[static_cast<std::size_t>(t - 1)];
            else
                row_all[static_cast<std::size_t>(i)] = false;
            // outcome under the forced action
            if (t == 1)
                st.y(i) = stage1_outcome(design, e.x11(i), e.x12(i), st.a(i), e.eps1(i));
            else if (t == 2)
                st.y(i) = stage2_outcome(ds.stages[0].a(i), e.x21(i), e.x22(i), st.a(i), e.eps2(i));
            else
                st.y(i) = stage3_outcome(e.x31(i), e.x32(i), st.a(i), e.eps3(i));
        }
    }

    EvalResult res;
    double total = 0.0;
    for (int i = 0; i < n_eval; ++i) {
        total += ds.total_outcome(i);
        if (row_all[static_cast<std::size_t>(i)]) ++all_match;
    }
    res.value = total / static_cast<double>(n_eval);
    res.opt_pct = static_cast<double>(all_match) / static_cast<double>(n_eval);
    for (int t = 0; t < t_count; ++t)
        res.stage_opt.push_back(static_cast<double>(opt_matches[static_cast<std::size_t>(t)]) /
                                static_cast<double>(n_eval));
    return res;
}

std::vector<StudyRow> run_study(const SimDesign& design, int n, int reps,
                                const std::vector<MethodConfig>& methods, int n_eval, RngStream rng,
                                int threads) {
    if (reps < 1) throw std::invalid_argument("run_study: reps must be positive");
    const std::vector<QSpec> qspecs = default_qspecs(design);
    const std::vector<Eigen::VectorXd> psi_true = design.true_psi();

    struct RepRecord {
        bool ok = false;
        double value = 0.0, opt = 0.0;
        std::vector<double> stage_opt;
        std::vector<Eigen::VectorXd> psi;  // per stage; empty vector if not estimable
    };
    std::vector<std::vector<RepRecord>> records(methods.size(),
                                                std::vector<RepRecord>(static_cast<std::size_t>(reps)));

    parallel_for(reps, threads, [&](int rep) {
        const RngStream rs = rng.child("rep", static_cast<std::uint64_t>(rep));
        const GenResult gen = generate(design, n, rs.child("gen"));
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            const MethodConfig& cfg = methods[mi];
            RepRecord& rec = records[mi][static_cast<std::size_t>(rep)];
            try {
                const Dataset& data = cfg.method == Method::all ? gen.full : gen.masked;
                const DtrFit fit = fit_dtr(data, qspecs, cfg, rs.child("fit", mi));
                const EvalResult ev = evaluate_regime(design, fit, n_eval, rs.child("eval"));
                rec.value = ev.value;
                rec.opt = ev.opt_pct;
                rec.stage_opt = ev.stage_opt;
                for (int t = 1; t <= design.n_stages(); ++t) {
                    // align fitted blip coefficients with the full spec; pruned
                    // terms are reported as not estimable
                    const StageFit& sf = fit.stage(t);
                    const auto& full_blip = qspecs[static_cast<std::size_t>(t - 1)].blip;
                    Eigen::VectorXd psi =
                        Eigen::VectorXd::Constant(static_cast<Eigen::Index>(full_blip.size()),
                                                  std::numeric_limits<double>::quiet_NaN());
                    for (std::size_t j = 0; j < full_blip.size(); ++j) {
                        for (std::size_t q = 0; q < sf.spec_used.blip.size(); ++q)
                            if (sf.spec_used.blip[q].to_string() == full_blip[j].to_string())
                                psi(static_cast<Eigen::Index>(j)) = sf.theta.psi(static_cast<Eigen::Index>(q));
                    }
                    rec.psi.push_back(psi);
                }
                rec.ok = true;
            } catch (const std::exception&) {
                rec.ok = false;
            }
        }
    });

    std::vector<StudyRow> rows;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        StudyRow row;
        row.method = method_name(methods[mi].method);
        if (methods[mi].method == Method::wq_sa)
            row.method += "(gamma_prime=" + std::to_string(methods[mi].gamma_prime.empty() ? 0.0 : methods[mi].gamma_prime[0]) + ")";
        std::vector<double> values, opts;
        std::vector<std::vector<double>> stage_opts(static_cast<std::size_t>(design.n_stages()));
        std::vector<std::vector<std::vector<double>>> psi_draws(psi_true.size());
        for (std::size_t s = 0; s < psi_true.size(); ++s)
            psi_draws[s].resize(static_cast<std::size_t>(psi_true[s].size()));
        for (const auto& rec : records[mi]) {
            if (!rec.ok) {
                ++row.failures;
                continue;
            }
            values.push_back(rec.value);
            opts.push_back(rec.opt);
            for (std::size_t t = 0; t < rec.stage_opt.size(); ++t) stage_opts[t].push_back(rec.stage_opt[t]);
            for (std::size_t s = 0; s < rec.psi.size(); ++s)
                for (Eigen::Index j = 0; j < rec.psi[s].size(); ++j)
                    if (std::isfinite(rec.psi[s](j)))
                        psi_draws[s][static_cast<std::size_t>(j)].push_back(rec.psi[s](j));
        }
        row.value = {mean(values), sample_sd(values)};
        row.opt = {mean(opts), sample_sd(opts)};
        for (const auto& so : stage_opts) row.stage_opt.push_back({mean(so), sample_sd(so)});
        for (std::size_t s = 0; s < psi_true.size(); ++s) {
            const std::vector<QSpec> qs = default_qspecs(design);
            for (Eigen::Index j = 0; j < psi_true[s].size(); ++j) {
                row.psi_names.push_back("psi" + std::to_string(s + 1) + "_" +
                                        qs[s].blip[static_cast<std::size_t>(j)].to_string());
                const auto& draws = psi_draws[s][static_cast<std::size_t>(j)];
                if (draws.empty())
                    row.psi_bias.push_back({std::numeric_limits<double>::quiet_NaN(),
                                            std::numeric_limits<double>::quiet_NaN()});
                else
                    row.psi_bias.push_back({mean(draws) - psi_true[s](j), sample_sd(draws)});
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_study_csv(const std::string& path, const std::vector<StudyRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "method,metric,mean,sd\n";
    for (const auto& row : rows) {
        out << row.method << ",value," << row.value.mean << "," << row.value.sd << "\n";
        out << row.method << ",opt_pct," << row.opt.mean << "," << row.opt.sd << "\n";
        for (std::size_t t = 0; t < row.stage_opt.size(); ++t)
            out << row.method << ",opt_pct_stage" << t + 1 << "," << row.stage_opt[t].mean << ","
                << row.stage_opt[t].sd << "\n";
        for (std::size_t j = 0; j < row.psi_bias.size(); ++j)
            out << row.method << ",bias_" << row.psi_names[j] << "," << row.psi_bias[j].mean << ","
                << row.psi_bias[j].sd << "\n";
        out << row.method << ",failures," << row.failures << ",0\n";
    }
}

}  // namespace dtrwql
