#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace dtrwql {

/// One stage of a rectangular longitudinal cohort. Covariate cells may be
/// missing; missingness is tracked in a parallel mask, never by sentinel
/// values. Treatments and outcomes are expected to be fully observed
/// (validate() reports violations).
struct StageData {
    Eigen::MatrixXd x;  // n x p_t covariates, undefined where present == 0
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present;
    Eigen::VectorXd a;  // treatments in {-1, +1}
    Eigen::VectorXd y;  // stage outcomes (NaN marks an invalid missing cell)
    std::vector<std::string> covariate_names;
};

/// Indicator of complete covariate history up to a stage.
struct CompleteMask {
    int stage = 1;
    std::vector<std::uint8_t> mask;  // entry i = I(all X_s observed for s <= stage)
    int count() const;
};

class Dataset {
public:
    std::vector<std::string> ids;
    std::vector<StageData> stages;

    int n() const { return static_cast<int>(ids.size()); }
    int n_stages() const { return static_cast<int>(stages.size()); }

    /// True iff every covariate cell of stage t (1-based) is observed for row i.
    bool stage_complete(int t, int i) const;

    CompleteMask complete_upto(int t) const;

    /// Final outcome: sum of the stage outcomes for patient i.
    double total_outcome(int i) const;

    /// New dataset with the given rows (repeats allowed; used by bootstrap).
    Dataset subset(const std::vector<int>& rows) const;
};

struct LoadReport {
    int recoded_treatments = 0;  // count of 0/1 cells recoded to -1/+1
};

struct ValidationReport {
    std::vector<std::string> violations;
    std::vector<double> missing_covariate_prop;  // per stage
    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

/// Load a wide-format CSV: header row with columns `id`, `X<t>_<name>`,
/// `A<t>`, `Y<t>`. Empty cells and the literal "NA" are missing. Treatments
/// coded 0/1 are recoded to -1/+1. Malformed numbers, missing treatment or
/// outcome cells, duplicate ids and unknown columns are errors.
Dataset load_csv(const std::string& path, LoadReport* report = nullptr);

void save_csv(const Dataset& ds, const std::string& path);

ValidationReport validate(const Dataset& ds);

// --- canonical column access -------------------------------------------

/// Canonical column names: "X<t>_<name>", "A<t>", "Y<t>".
struct ColumnRef {
    enum class Kind { covariate, treatment, outcome };
    Kind kind = Kind::covariate;
    int stage = 1;   // 1-based
    int column = 0;  // covariate index within the stage
};

ColumnRef resolve_column(const Dataset& ds, const std::string& name);
std::string column_name(const Dataset& ds, const ColumnRef& ref);
double column_value(const Dataset& ds, const ColumnRef& ref, int row);
bool column_present(const Dataset& ds, const ColumnRef& ref, int row);

/// Names of all columns observable before the stage-t treatment decision,
/// i.e. H_t: X_1..X_t, A_1..A_{t-1}, Y_1..Y_{t-1}.
std::vector<std::string> history_columns(const Dataset& ds, int t);

}  // namespace dtrwql
