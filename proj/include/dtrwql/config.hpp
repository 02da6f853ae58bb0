#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dtrwql/features.hpp"
#include "dtrwql/inference.hpp"
#include "dtrwql/qlearn.hpp"

namespace dtrwql {

/// Per-stage block of a run configuration file.
struct StageConfig {
    int stage = 1;
    std::vector<std::string> treatment_free;
    std::vector<std::string> blip;
    std::vector<std::string> u_cols;
    std::vector<std::string> instruments;
    std::optional<double> gamma_prime;
};

/// Flat key-value run configuration with [stage N] sections. Unknown keys
/// are rejected with the offending line number; the DTRWQL_SEED environment
/// variable overrides the configured seed.
struct RunConfig {
    std::string data_path;
    std::string design;      // alternative to data_path
    double design_param = 0.0;
    int n = 500;
    int reps = 1;
    std::string method = "cc";
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    int threads = 0;  // 0 = default

    double weight_cap = 50.0;
    double gamma_search_lo = -5.0;
    double gamma_search_hi = 5.0;
    int mi_m = 25;
    int mi_k = 5;
    int mi_cycles = 10;

    int boot_B = 500;
    std::string boot_m = "auto";
    std::optional<double> boot_alpha;  // fixed-alpha shortcut
    std::vector<double> alpha_grid;
    int boot_B1 = 200;
    int boot_B2 = 200;
    double boot_nu = 0.001;
    std::vector<std::string> boot_targets;

    std::vector<double> calib_grid;
    int calib_mcr = 1000;
    double calib_threshold = 0.05;

    int cv_splits = 100;
    double cv_train_frac = 0.8;
    int n_eval = 100000;

    std::vector<StageConfig> stage_sections;

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text);

    /// QSpecs from the stage sections (must cover stages 1..T contiguously).
    std::vector<QSpec> qspecs() const;
    MethodConfig method_config() const;
    BootPlan boot_plan() const;
};

/// "lo:step:hi" or a comma-separated list.
std::vector<double> parse_grid(const std::string& text);

}  // namespace dtrwql
