#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dtrwql/dataset.hpp"
#include "dtrwql/qlearn.hpp"
#include "dtrwql/rng.hpp"

namespace dtrwql {

enum class Design { sim1, sim2_gz, sim2_int, sim3, sim4 };

struct SimDesign {
    Design tag = Design::sim1;
    double param = 0.0;  // gamma_z for sim2_gz, gamma_uy for sim2_int

    int n_stages() const { return tag == Design::sim4 ? 3 : 2; }
    std::string name() const;
    /// True blip coefficients per stage.
    std::vector<Eigen::VectorXd> true_psi() const;

    static SimDesign parse(const std::string& name, double param = 0.0);
};

struct GenResult {
    Dataset masked;            // covariate cells hidden where missing
    Dataset full;              // same cohort, fully observed
    Eigen::MatrixXi true_opt;  // n x T true optimal actions
};

/// Transcription of the generative equations, deterministic per (design, n,
/// seed). Designs sharing a generative prefix (sim1 / sim2 / sim4) draw the
/// shared variables from identically labelled substreams.
GenResult generate(const SimDesign& design, int n, RngStream rng);

std::vector<QSpec> default_qspecs(const SimDesign& design);

/// Method configuration with the design's canonical instruments (wq_ee) or
/// a sensitivity parameter (wq_sa).
MethodConfig default_method_config(const SimDesign& design, Method method, double gamma_prime = 1.0);

struct EvalResult {
    double value = 0.0;    // mean final outcome under the fitted regime
    double opt_pct = 0.0;  // all-stage correct classification rate
    std::vector<double> stage_opt;
};

/// Counterfactual rollout on a fresh fully observed cohort: treatments are
/// forced to the fitted regime's recommendations at every stage.
EvalResult evaluate_regime(const SimDesign& design, const DtrFit& fit, int n_eval, RngStream rng);

struct StudyCell {
    double mean = 0.0;
    double sd = 0.0;
};

struct StudyRow {
    std::string method;
    StudyCell value, opt;
    std::vector<StudyCell> stage_opt;
    std::vector<std::string> psi_names;
    std::vector<StudyCell> psi_bias;  // NaN mean for coefficients a method cannot estimate
    int failures = 0;
};

/// Monte Carlo study over `reps` generated datasets; failures are excluded
/// and counted (a valid study requires < 1% failures).
std::vector<StudyRow> run_study(const SimDesign& design, int n, int reps,
                                const std::vector<MethodConfig>& methods, int n_eval, RngStream rng,
                                int threads);

void write_study_csv(const std::string& path, const std::vector<StudyRow>& rows);

}  // namespace dtrwql
