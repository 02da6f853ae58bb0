#include "dtrwql/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dtrwql {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            const std::string t = trim(cur);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    const std::string t = trim(cur);
    if (!t.empty()) out.push_back(t);
    return out;
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw std::runtime_error("config line " + std::to_string(line) + ": " + msg);
}

double to_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        fail(line, "expected a number, got '" + v + "'");
    }
}

int to_int(const std::string& v, int line) {
    const double d = to_double(v, line);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d) fail(line, "expected an integer, got '" + v + "'");
    return i;
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
    const auto c1 = text.find(':');
    if (c1 != std::string::npos) {
        const auto c2 = text.find(':', c1 + 1);
        if (c2 == std::string::npos) throw std::runtime_error("grid '" + text + "' must be lo:step:hi");
        const double lo = std::stod(text.substr(0, c1));
        const double step = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
        const double hi = std::stod(text.substr(c2 + 1));
        if (step <= 0.0) throw std::runtime_error("grid step must be positive");
        std::vector<double> out;
        for (double v = lo; v <= hi + 1e-12; v += step) out.push_back(v);
        return out;
    }
    std::vector<double> out;
    for (const auto& item : split_list(text)) out.push_back(std::stod(item));
    return out;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    StageConfig* section = nullptr;

    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') fail(lineno, "unterminated section header");
            std::string name = trim(line.substr(1, line.size() - 2));
            if (name.rfind("stage", 0) != 0) fail(lineno, "unknown section '" + name + "'");
            const std::string num = trim(name.substr(5));
            int stage = 0;
            try {
                stage = std::stoi(num);
            } catch (...) {
                fail(lineno, "bad stage number '" + num + "'");
            }
            cfg.stage_sections.push_back(StageConfig{});
            section = &cfg.stage_sections.back();
            section->stage = stage;
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(lineno, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) fail(lineno, "empty key or value");

        if (section) {
            if (key == "treatment_free")
                section->treatment_free = split_list(value);
            else if (key == "blip")
                section->blip = split_list(value);
            else if (key == "u")
                section->u_cols = split_list(value);
            else if (key == "instruments")
                section->instruments = split_list(value);
            else if (key == "gamma_prime")
                section->gamma_prime = to_double(value, lineno);
            else
                fail(lineno, "unknown stage key '" + key + "'");
            continue;
        }

        if (key == "data") cfg.data_path = value;
        else if (key == "design") cfg.design = value;
        else if (key == "gz" || key == "guy" || key == "design_param") cfg.design_param = to_double(value, lineno);
        else if (key == "n") cfg.n = to_int(value, lineno);
        else if (key == "reps") cfg.reps = to_int(value, lineno);
        else if (key == "method") cfg.method = value;
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
        else if (key == "out") cfg.out_dir = value;
        else if (key == "threads") cfg.threads = to_int(value, lineno);
        else if (key == "weight_cap") cfg.weight_cap = to_double(value, lineno);
        else if (key == "gamma_search_lo") cfg.gamma_search_lo = to_double(value, lineno);
        else if (key == "gamma_search_hi") cfg.gamma_search_hi = to_double(value, lineno);
        else if (key == "mi_m") cfg.mi_m = to_int(value, lineno);
        else if (key == "mi_k") cfg.mi_k = to_int(value, lineno);
        else if (key == "mi_cycles") cfg.mi_cycles = to_int(value, lineno);
        else if (key == "boot_B") cfg.boot_B = to_int(value, lineno);
        else if (key == "boot_m") cfg.boot_m = value;
        else if (key == "boot_alpha") cfg.boot_alpha = to_double(value, lineno);
        else if (key == "alpha_grid") cfg.alpha_grid = parse_grid(value);
        else if (key == "boot_B1") cfg.boot_B1 = to_int(value, lineno);
        else if (key == "boot_B2") cfg.boot_B2 = to_int(value, lineno);
        else if (key == "boot_nu") cfg.boot_nu = to_double(value, lineno);
        else if (key == "boot_targets") cfg.boot_targets = split_list(value);
        else if (key == "calib_grid") cfg.calib_grid = parse_grid(value);
        else if (key == "calib_mcr") cfg.calib_mcr = to_int(value, lineno);
        else if (key == "calib_threshold") cfg.calib_threshold = to_double(value, lineno);
        else if (key == "cv_splits") cfg.cv_splits = to_int(value, lineno);
        else if (key == "cv_train_frac") cfg.cv_train_frac = to_double(value, lineno);
        else if (key == "n_eval") cfg.n_eval = to_int(value, lineno);
        else fail(lineno, "unknown key '" + key + "'");
    }

    if (const char* env = std::getenv("DTRWQL_SEED")) cfg.seed = static_cast<std::uint64_t>(std::stoull(env));
    method_from_string(cfg.method);  // validate early
    return cfg;
}

std::vector<QSpec> RunConfig::qspecs() const {
    if (stage_sections.empty()) throw std::runtime_error("config: no [stage N] sections");
    std::vector<StageConfig> sections = stage_sections;
    std::sort(sections.begin(), sections.end(),
              [](const StageConfig& a, const StageConfig& b) { return a.stage < b.stage; });
    std::vector<QSpec> specs;
    for (std::size_t i = 0; i < sections.size(); ++i) {
        if (sections[i].stage != static_cast<int>(i) + 1)
            throw std::runtime_error("config: stage sections must cover 1..T contiguously");
        if (sections[i].treatment_free.empty() || sections[i].blip.empty())
            throw std::runtime_error("config: stage " + std::to_string(sections[i].stage) +
                                     " needs treatment_free and blip terms");
        specs.push_back(QSpec::from_strings(sections[i].stage, sections[i].treatment_free, sections[i].blip));
    }
    return specs;
}

MethodConfig RunConfig::method_config() const {
    MethodConfig cfg;
    cfg.method = method_from_string(method);
    cfg.kernel.weight_cap = weight_cap;
    cfg.search.lo = gamma_search_lo;
    cfg.search.hi = gamma_search_hi;
    cfg.mi_m = mi_m;
    cfg.mi_k = mi_k;
    cfg.mi_cycles = mi_cycles;

    std::vector<StageConfig> sections = stage_sections;
    std::sort(sections.begin(), sections.end(),
              [](const StageConfig& a, const StageConfig& b) { return a.stage < b.stage; });
    if (cfg.method == Method::wq_sa) {
        for (const auto& s : sections) {
            if (s.stage == static_cast<int>(sections.size())) continue;  // final stage needs none
            if (!s.gamma_prime)
                throw std::runtime_error("config: wq_sa requires gamma_prime in [stage " +
                                         std::to_string(s.stage) + "]");
            cfg.gamma_prime.resize(std::max(cfg.gamma_prime.size(), static_cast<std::size_t>(s.stage)), 0.0);
            cfg.gamma_prime[static_cast<std::size_t>(s.stage - 1)] = *s.gamma_prime;
        }
    }
    if (cfg.method == Method::wq_ee) {
        for (const auto& s : sections) {
            if (s.instruments.empty()) continue;
            InstrumentSpec inst;
            inst.stage = s.stage;
            inst.u_cols = s.u_cols;
            inst.z_cols = s.instruments;
            cfg.instruments.push_back(inst);
        }
    }
    return cfg;
}

BootPlan RunConfig::boot_plan() const {
    BootPlan plan;
    plan.B = boot_B;
    plan.alpha_grid = alpha_grid;
    if (plan.alpha_grid.empty()) plan.alpha_grid = parse_grid("0:0.1:1");
    plan.B1 = boot_B1;
    plan.B2 = boot_B2;
    plan.nu = boot_nu;
    return plan;
}

}  // namespace dtrwql
