#include "dtrwql/features.hpp"

#include <algorithm>
#include <stdexcept>

namespace dtrwql {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

// reject features on the current treatment/outcome or later stages
void check_in_history(const Dataset& ds, const ColumnRef& ref, int stage, const std::string& name) {
    const bool ok = (ref.kind == ColumnRef::Kind::covariate && ref.stage <= stage) ||
                    (ref.kind != ColumnRef::Kind::covariate && ref.stage < stage);
    if (!ok)
        throw std::runtime_error("feature '" + name + "' is not part of the stage-" + std::to_string(stage) +
                                 " history");
    (void)ds;
}

}  // namespace

FeatureTerm FeatureTerm::parse(const std::string& text) {
    FeatureTerm term;
    const std::string t = trim(text);
    if (t.empty()) throw std::runtime_error("empty feature term");
    if (t == "1") return term;
    std::size_t start = 0;
    while (start <= t.size()) {
        const auto star = t.find('*', start);
        const std::string factor = trim(t.substr(start, star == std::string::npos ? std::string::npos : star - start));
        if (factor.empty() || factor == "1")
            throw std::runtime_error("bad feature term '" + text + "'");
        term.factors.push_back(factor);
        if (star == std::string::npos) break;
        start = star + 1;
    }
    return term;
}

std::string FeatureTerm::to_string() const {
    if (factors.empty()) return "1";
    std::string s = factors[0];
    for (std::size_t i = 1; i < factors.size(); ++i) s += "*" + factors[i];
    return s;
}

QSpec QSpec::from_strings(int stage, const std::vector<std::string>& phi0,
                          const std::vector<std::string>& phi1) {
    QSpec spec;
    spec.stage = stage;
    for (const auto& s : phi0) spec.treatment_free.push_back(FeatureTerm::parse(s));
    for (const auto& s : phi1) spec.blip.push_back(FeatureTerm::parse(s));
    return spec;
}

FeatureEval::FeatureEval(const Dataset& ds, const QSpec& spec) : ds_(&ds), spec_(spec) {
    if (spec.treatment_free.empty() || spec.blip.empty())
        throw std::runtime_error("QSpec needs at least one term in each component");
    auto resolve_terms = [&](const std::vector<FeatureTerm>& terms) {
        std::vector<std::vector<ColumnRef>> out;
        for (const auto& term : terms) {
            std::vector<ColumnRef> refs;
            for (const auto& f : term.factors) {
                ColumnRef ref = resolve_column(ds, f);
                check_in_history(ds, ref, spec.stage, f);
                refs.push_back(ref);
            }
            out.push_back(std::move(refs));
        }
        return out;
    };
    phi0_refs_ = resolve_terms(spec.treatment_free);
    phi1_refs_ = resolve_terms(spec.blip);
    for (const auto* group : {&phi0_refs_, &phi1_refs_})
        for (const auto& refs : *group)
            for (const auto& r : refs)
                if (r.kind == ColumnRef::Kind::covariate) all_refs_.push_back(r);
}

bool FeatureEval::row_available(int i) const {
    for (const auto& r : all_refs_)
        if (!column_present(*ds_, r, i)) return false;
    return true;
}

namespace {
double eval_term(const Dataset& ds, const std::vector<ColumnRef>& refs, int i) {
    double v = 1.0;
    for (const auto& r : refs) v *= column_value(ds, r, i);
    return v;
}
}  // namespace

Eigen::VectorXd FeatureEval::phi0(int i) const {
    Eigen::VectorXd v(d0());
    for (int k = 0; k < d0(); ++k) v(k) = eval_term(*ds_, phi0_refs_[static_cast<std::size_t>(k)], i);
    return v;
}

Eigen::VectorXd FeatureEval::phi1(int i) const {
    Eigen::VectorXd v(d1());
    for (int k = 0; k < d1(); ++k) v(k) = eval_term(*ds_, phi1_refs_[static_cast<std::size_t>(k)], i);
    return v;
}

Eigen::MatrixXd FeatureEval::design(const std::vector<int>& rows) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), d0() + d1());
    const auto& st = ds_->stages[static_cast<std::size_t>(spec_.stage - 1)];
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const int i = rows[k];
        m.row(static_cast<Eigen::Index>(k)).head(d0()) = phi0(i).transpose();
        m.row(static_cast<Eigen::Index>(k)).tail(d1()) = st.a(i) * phi1(i).transpose();
    }
    return m;
}

QSpec prune_partially_observed(const Dataset& ds, const QSpec& spec) {
    auto column_has_missing = [&](const std::string& name) {
        const ColumnRef ref = resolve_column(ds, name);
        if (ref.kind != ColumnRef::Kind::covariate) return false;
        const auto& st = ds.stages[static_cast<std::size_t>(ref.stage - 1)];
        for (int i = 0; i < ds.n(); ++i)
            if (!st.present(i, ref.column)) return true;
        return false;
    };
    auto prune = [&](const std::vector<FeatureTerm>& terms) {
        std::vector<FeatureTerm> kept;
        for (const auto& term : terms) {
            const bool touched = std::any_of(term.factors.begin(), term.factors.end(), column_has_missing);
            if (!touched) kept.push_back(term);
        }
        if (kept.empty()) kept.push_back(FeatureTerm{});  // keep at least the intercept
        return kept;
    };
    QSpec out;
    out.stage = spec.stage;
    out.treatment_free = prune(spec.treatment_free);
    out.blip = prune(spec.blip);
    return out;
}

}  // namespace dtrwql
