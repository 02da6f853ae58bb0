#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dtrwql/dataset.hpp"
#include "dtrwql/ee.hpp"
#include "dtrwql/features.hpp"
#include "dtrwql/linmodel.hpp"
#include "dtrwql/rng.hpp"

namespace dtrwql {

enum class Method { all, naive, cc, mi, wq_ee, wq_sa };

std::string method_name(Method m);
Method method_from_string(const std::string& s);

/// Predictor set for the chained-equation imputation regressions.
enum class PmmPredictors { covariates_treatments, all_columns, covariates_only };

struct MethodConfig {
    Method method = Method::cc;
    std::vector<InstrumentSpec> instruments;  // wq_ee, one entry per non-final stage
    std::vector<double> gamma_prime;          // wq_sa, indexed by stage-1 for t < T
    int mi_m = 25;
    int mi_k = 5;
    int mi_cycles = 10;
    PmmPredictors mi_predictors = PmmPredictors::covariates_treatments;
    KernelConfig kernel;
    EESearch search;
    bool ee_fallback_cc = true;  // fall back to complete-case weights if a stage EE fit fails
    int fit_down_to = 1;         // fit stages T..fit_down_to only (bootstrap shortcut)

    const InstrumentSpec* instruments_for(int stage) const;
    double gamma_prime_for(int stage) const;
};

struct StageFit {
    ThetaHat theta;
    QSpec spec_used;
    int n_complete = 0;     // complete-upto-t rows
    int n_respondents = 0;  // with an available pseudo-outcome
    double gamma = std::numeric_limits<double>::quiet_NaN();        // EE estimate / SA parameter
    double gamma_first = std::numeric_limits<double>::quiet_NaN();  // first-step GMM estimate
    int clip_count = 0;
    int cap_count = 0;
    bool ee_fell_back = false;
    Eigen::MatrixXd cov_psi;  // HC0 sandwich block for the blip coefficients
};

struct DtrFit {
    Method method = Method::cc;
    std::vector<StageFit> stages;  // index t-1

    const StageFit& stage(int t) const { return stages.at(static_cast<std::size_t>(t - 1)); }
    std::string report_json() const;
};

/// Backward-induction fit of the full regime. Stage T is fit by weighted
/// least squares on complete-history rows; earlier stages regress the
/// estimated pseudo-outcomes with weights chosen by the method.
DtrFit fit_dtr(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg, RngStream rng);

/// Recommended action for one patient row at stage t under the fitted regime.
int recommend(const DtrFit& fit, const Dataset& ds, int row, int t);

/// Predictive-mean-matching multiple imputation by chained equations:
/// m completed copies of the dataset, k donors, `cycles` sweeps. The
/// `predictors` choice controls which columns enter each imputation
/// regression alongside the other covariates.
std::vector<Dataset> pmm_impute(const Dataset& ds, int m, int k, int cycles, RngStream rng,
                                PmmPredictors predictors = PmmPredictors::covariates_treatments,
                                int* rank_warnings = nullptr);

struct CvResult {
    double mean_improvement = 0.0;
    std::vector<double> per_split;
    int skipped = 0;
};

/// Repeated random train/test splits: fit on the training fraction, then
/// estimate the regime value on the test rows as the fitted stage-1 Q-value
/// at the recommended action, minus the observed mean outcome.
CvResult cross_validate_value(const Dataset& ds, const std::vector<QSpec>& qspecs, const MethodConfig& cfg,
                              int splits, double train_frac, RngStream rng);

}  // namespace dtrwql
