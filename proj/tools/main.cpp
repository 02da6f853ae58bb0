#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dtrwql/config.hpp"
#include "dtrwql/inference.hpp"
#include "dtrwql/sa.hpp"
#include "dtrwql/simbench.hpp"
#include "dtrwql/stats.hpp"
#include "dtrwql/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t effective_seed(std::uint64_t seed) {
    if (const char* env = std::getenv("DTRWQL_SEED")) return std::stoull(env);
    return seed;
}

void write_manifest(const fs::path& dir, const json& j) {
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << "\n";
}

// data + specs + method from a config file; generated designs fall back to
// their canonical specs when no stage sections are present
struct LoadedRun {
    dtrwql::Dataset data;
    std::vector<dtrwql::QSpec> qspecs;
    dtrwql::MethodConfig method;
    dtrwql::RunConfig raw;
};

LoadedRun load_run(const std::string& config_path) {
    LoadedRun run;
    run.raw = dtrwql::RunConfig::parse_file(config_path);
    const auto& cfg = run.raw;
    if (!cfg.data_path.empty()) {
        run.data = dtrwql::load_csv(cfg.data_path);
    } else if (!cfg.design.empty()) {
        const auto design = dtrwql::SimDesign::parse(cfg.design, cfg.design_param);
        run.data = dtrwql::generate(design, cfg.n, dtrwql::RngStream(effective_seed(cfg.seed)).child("data")).masked;
        if (cfg.stage_sections.empty()) {
            run.qspecs = dtrwql::default_qspecs(design);
            run.method = dtrwql::default_method_config(design, dtrwql::method_from_string(cfg.method));
            run.method.kernel.weight_cap = cfg.weight_cap;
            run.method.mi_m = cfg.mi_m;
            run.method.mi_k = cfg.mi_k;
            run.method.mi_cycles = cfg.mi_cycles;
            return run;
        }
    } else {
        throw std::runtime_error("config: either data or design is required");
    }
    run.qspecs = cfg.qspecs();
    run.method = cfg.method_config();
    return run;
}

int cmd_simulate(const std::string& design_name, double param, int n, int reps, std::uint64_t seed,
                 const std::string& out) {
    const auto design = dtrwql::SimDesign::parse(design_name, param);
    const fs::path dir(out);
    fs::create_directories(dir);
    const dtrwql::RngStream root(seed);
    json manifest;
    manifest["design"] = design.name();
    if (design.tag == dtrwql::Design::sim2_gz) manifest["gamma_z"] = param;
    if (design.tag == dtrwql::Design::sim2_int) manifest["gamma_uy"] = param;
    manifest["n"] = n;
    manifest["reps"] = reps;
    manifest["seed"] = seed;
    json files = json::array();
    for (int rep = 0; rep < reps; ++rep) {
        const auto gen = dtrwql::generate(design, n, root.child("rep", static_cast<std::uint64_t>(rep)).child("gen"));
        const std::string name = "rep" + std::to_string(rep + 1) + ".csv";
        dtrwql::save_csv(gen.masked, (dir / name).string());
        files.push_back(name);
    }
    manifest["files"] = files;
    write_manifest(dir, manifest);
    std::cout << "wrote " << reps << " replicate file(s) to " << dir.string() << "\n";
    return 0;
}

int cmd_validate(const std::string& data_path) {
    const dtrwql::Dataset ds = dtrwql::load_csv(data_path);
    const dtrwql::ValidationReport rep = dtrwql::validate(ds);
    std::cout << rep.to_string();
    return rep.ok() ? 0 : 1;
}

int cmd_fit(const std::string& config_path) {
    LoadedRun run = load_run(config_path);
    const fs::path dir(run.raw.out_dir);
    fs::create_directories(dir);
    const auto fit = dtrwql::fit_dtr(run.data, run.qspecs, run.method,
                                     dtrwql::RngStream(effective_seed(run.raw.seed)).child("fit"));
    {
        std::ofstream out(dir / "fit.json");
        out << fit.report_json() << "\n";
    }
    {
        std::ofstream out(dir / "coefficients.csv");
        out << "stage,component,term,estimate\n";
        for (const auto& s : fit.stages) {
            for (Eigen::Index j = 0; j < s.theta.beta.size(); ++j)
                out << s.theta.stage << ",treatment_free," << s.spec_used.treatment_free[static_cast<std::size_t>(j)].to_string()
                    << "," << s.theta.beta(j) << "\n";
            for (Eigen::Index j = 0; j < s.theta.psi.size(); ++j)
                out << s.theta.stage << ",blip," << s.spec_used.blip[static_cast<std::size_t>(j)].to_string() << ","
                    << s.theta.psi(j) << "\n";
        }
    }
    std::cout << "fit written to " << dir.string() << "\n";
    return 0;
}

int cmd_calibrate(const std::string& config_path, const std::string& grid_override) {
    LoadedRun run = load_run(config_path);
    const auto& cfg = run.raw;
    std::vector<double> grid = cfg.calib_grid;
    if (!grid_override.empty()) grid = dtrwql::parse_grid(grid_override);
    if (grid.empty()) throw std::runtime_error("calibrate: calib_grid is required");

    const auto result = dtrwql::calibrate_gamma(run.data, run.qspecs, grid, cfg.calib_mcr, cfg.calib_threshold,
                                                effective_seed(cfg.seed));
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    std::ofstream out(dir / "calibration.csv");
    out << "gamma_prime,median_p,plausible\n";
    for (std::size_t i = 0; i < result.grid.size(); ++i)
        out << result.grid[i] << "," << result.median_p[i] << "," << int(result.plausible[i]) << "\n";
    std::cout << "calibration written to " << (dir / "calibration.csv").string() << "\n";
    return 0;
}

int cmd_bootstrap(const std::string& config_path) {
    LoadedRun run = load_run(config_path);
    const auto& cfg = run.raw;
    const int threads = cfg.threads > 0 ? cfg.threads : dtrwql::default_threads();
    const dtrwql::RngStream root(effective_seed(cfg.seed));
    const int t_max = run.data.n_stages();

    // targets: all blip coefficients, or the configured psi<stage>_<index> list
    std::vector<dtrwql::TargetSel> targets;
    if (cfg.boot_targets.empty()) {
        for (int t = 1; t <= t_max; ++t)
            for (std::size_t j = 0; j < run.qspecs[static_cast<std::size_t>(t - 1)].blip.size(); ++j)
                targets.push_back({t, static_cast<int>(j),
                                   "psi" + std::to_string(t) + "_" + std::to_string(j)});
    } else {
        for (const auto& name : cfg.boot_targets) {
            if (name.rfind("psi", 0) != 0) throw std::runtime_error("bad target '" + name + "'");
            const auto us = name.find('_');
            targets.push_back({std::stoi(name.substr(3, us - 3)), std::stoi(name.substr(us + 1)), name});
        }
    }

    int m = 0;
    double alpha = cfg.boot_alpha.value_or(-1.0);
    double p_hat = -1.0;
    if (cfg.boot_m == "auto") {
        p_hat = dtrwql::p_nonregu_hat(run.data, run.qspecs, run.method, cfg.boot_nu, root.child("phat"));
        if (alpha < 0.0) {
            dtrwql::BootPlan plan = cfg.boot_plan();
            alpha = dtrwql::select_alpha(run.data, run.qspecs, run.method, plan, root.child("alpha"), threads);
        }
        m = dtrwql::m_from_alpha(run.data.n(), alpha, p_hat);
    } else {
        m = std::stoi(cfg.boot_m);
    }

    const auto result = dtrwql::bootstrap_ci(run.data, run.qspecs, run.method, cfg.boot_B, m, targets,
                                             root.child("boot"), threads);
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    dtrwql::write_bootstrap_csv((dir / "bootstrap.csv").string(), result);
    json manifest;
    manifest["B"] = result.B;
    manifest["m"] = m;
    if (alpha >= 0.0) manifest["alpha"] = alpha;
    if (p_hat >= 0.0) manifest["p_nonregu"] = p_hat;
    manifest["failed_resamples"] = result.failed;
    manifest["seed"] = effective_seed(cfg.seed);
    write_manifest(dir, manifest);
    std::cout << "bootstrap written to " << (dir / "bootstrap.csv").string() << " (m=" << m << ")\n";
    return 0;
}

int cmd_bench(const std::string& design_name, double param, int n, int reps, int n_eval,
              const std::string& methods_csv, double gamma_prime, std::uint64_t seed, int threads,
              const std::string& out) {
    const auto design = dtrwql::SimDesign::parse(design_name, param);
    std::vector<dtrwql::MethodConfig> methods;
    {
        std::istringstream ss(methods_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto m = dtrwql::method_from_string(item);
            methods.push_back(dtrwql::default_method_config(design, m, gamma_prime));
        }
    }
    if (methods.empty()) throw std::runtime_error("bench: no methods given");
    const auto rows = dtrwql::run_study(design, n, reps, methods, n_eval, dtrwql::RngStream(seed).child("study"),
                                        threads > 0 ? threads : dtrwql::default_threads());
    const fs::path dir(out);
    fs::create_directories(dir);
    dtrwql::write_study_csv((dir / "study.csv").string(), rows);
    json manifest;
    manifest["design"] = design.name();
    manifest["n"] = n;
    manifest["reps"] = reps;
    manifest["n_eval"] = n_eval;
    manifest["seed"] = seed;
    write_manifest(dir, manifest);

    int failures = 0;
    for (const auto& r : rows) failures += r.failures;
    std::printf("%-24s %12s %12s\n", "method", "value", "opt_pct");
    for (const auto& r : rows)
        std::printf("%-24s %6.3f (%.3f) %5.3f (%.3f)\n", r.method.c_str(), r.value.mean, r.value.sd,
                    r.opt.mean, r.opt.sd);
    const double fail_rate = static_cast<double>(failures) / (static_cast<double>(reps) * methods.size());
    if (fail_rate >= 0.01) {
        std::cerr << "warning: failure rate " << fail_rate << " exceeds 1%\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weighted Q-learning for dynamic treatment regimes with nonignorably missing covariates"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate replicate cohorts from a built-in design");
    std::string design = "sim1", out = "sim_out";
    double gz = 0.0, guy = 0.0;
    int n = 500, reps = 1;
    std::uint64_t seed = 1;
    sim->add_option("--design", design, "sim1|sim2_gz|sim2_int|sim3|sim4")->required();
    sim->add_option("--n", n, "cohort size");
    sim->add_option("--reps", reps, "number of replicate files");
    sim->add_option("--seed", seed, "root seed");
    sim->add_option("--gz", gz, "gamma_z for sim2_gz");
    sim->add_option("--guy", guy, "gamma_uy for sim2_int");
    sim->add_option("--out", out, "output directory");

    // validate
    auto* val = app.add_subcommand("validate", "Check a cohort CSV");
    std::string data_path;
    val->add_option("data", data_path, "CSV file")->required();

    // fit / calibrate / bootstrap
    std::string config_path, grid_override;
    auto* fit = app.add_subcommand("fit", "Fit a regime from a run config");
    fit->add_option("--config", config_path, "run configuration file")->required();
    auto* cal = app.add_subcommand("calibrate", "Calibrate the sensitivity parameter");
    cal->add_option("--config", config_path, "run configuration file")->required();
    cal->add_option("--grid", grid_override, "override calib_grid (lo:step:hi or list)");
    auto* boot = app.add_subcommand("bootstrap", "Bootstrap confidence intervals");
    boot->add_option("--config", config_path, "run configuration file")->required();

    // bench
    auto* bench = app.add_subcommand("bench", "Monte Carlo study over a design");
    std::string methods = "all,naive,cc,mi,wq_ee";
    double gamma_prime = 1.0;
    int n_eval = 100000, threads = 0;
    bench->add_option("--design", design, "sim1|sim2_gz|sim2_int|sim3|sim4")->required();
    bench->add_option("--n", n, "cohort size");
    bench->add_option("--reps", reps, "Monte Carlo replicates");
    bench->add_option("--n-eval", n_eval, "rollout cohort size");
    bench->add_option("--methods", methods, "comma list of methods");
    bench->add_option("--gamma-prime", gamma_prime, "sensitivity parameter for wq_sa");
    bench->add_option("--gz", gz, "gamma_z for sim2_gz");
    bench->add_option("--guy", guy, "gamma_uy for sim2_int");
    bench->add_option("--seed", seed, "root seed");
    bench->add_option("--threads", threads, "worker threads");
    bench->add_option("--out", out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            const double param = design == "sim2_gz" ? gz : (design == "sim2_int" ? guy : 0.0);
            return cmd_simulate(design, param, n, reps, effective_seed(seed), out);
        }
        if (val->parsed()) return cmd_validate(data_path);
        if (fit->parsed()) return cmd_fit(config_path);
        if (cal->parsed()) return cmd_calibrate(config_path, grid_override);
        if (boot->parsed()) return cmd_bootstrap(config_path);
        if (bench->parsed()) {
            const double param = design == "sim2_gz" ? gz : (design == "sim2_int" ? guy : 0.0);
            return cmd_bench(design, param, n, reps, n_eval, methods, gamma_prime, effective_seed(seed),
                             threads, out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
