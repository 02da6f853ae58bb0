#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dtrwql/dataset.hpp"

namespace dtrwql {

/// One term of a linear feature map: an intercept (no factors) or a product
/// of named columns, e.g. "1", "X1_x12", "A1*X2_x22".
struct FeatureTerm {
    std::vector<std::string> factors;

    static FeatureTerm parse(const std::string& text);
    std::string to_string() const;
    bool is_intercept() const { return factors.empty(); }
};

/// Per-stage Q-function specification: Q_t(h,a) = phi0(h).beta + a * phi1(h).psi.
/// Feature terms may reference only H_t (stage <= t covariates, earlier
/// treatments and outcomes); intercepts live inside the maps.
struct QSpec {
    int stage = 1;
    std::vector<FeatureTerm> treatment_free;  // phi0
    std::vector<FeatureTerm> blip;            // phi1

    static QSpec from_strings(int stage, const std::vector<std::string>& phi0,
                              const std::vector<std::string>& phi1);
};

/// QSpec resolved against a dataset for row-wise evaluation.
class FeatureEval {
public:
    FeatureEval(const Dataset& ds, const QSpec& spec);

    int d0() const { return static_cast<int>(phi0_refs_.size()); }
    int d1() const { return static_cast<int>(phi1_refs_.size()); }
    int stage() const { return spec_.stage; }
    const Dataset& dataset() const { return *ds_; }
    const QSpec& spec() const { return spec_; }

    /// True iff every column referenced by the spec is observed for row i.
    bool row_available(int i) const;

    Eigen::VectorXd phi0(int i) const;
    Eigen::VectorXd phi1(int i) const;

    /// Stacked design matrix [phi0 | a*phi1] over the given rows.
    Eigen::MatrixXd design(const std::vector<int>& rows) const;

private:
    const Dataset* ds_;
    QSpec spec_;
    std::vector<std::vector<ColumnRef>> phi0_refs_, phi1_refs_;
    std::vector<ColumnRef> all_refs_;  // deduplicated, for availability
};

/// Drop every term that references a covariate column with at least one
/// missing cell in the dataset (the "ignore partially observed covariates"
/// baseline). Intercept-only maps are kept.
QSpec prune_partially_observed(const Dataset& ds, const QSpec& spec);

}  // namespace dtrwql
