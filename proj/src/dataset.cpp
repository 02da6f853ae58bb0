#include "dtrwql/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
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

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

double parse_number(const std::string& s, int row, const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("malformed numeric cell '" + s + "' at row " + std::to_string(row) +
                                 ", column " + col);
    }
}

struct ColumnRole {
    enum class Kind { id, covariate, treatment, outcome } kind;
    int stage = 0;  // 1-based
    std::string cov_name;
};

ColumnRole classify_header(const std::string& name) {
    if (name == "id") return {ColumnRole::Kind::id, 0, ""};
    auto parse_stage = [&](std::size_t start, std::size_t end) {
        int stage = 0;
        const auto res = std::from_chars(name.data() + start, name.data() + end, stage);
        if (res.ec != std::errc{} || res.ptr != name.data() + end || stage < 1) return 0;
        return stage;
    };
    if (name.size() >= 2 && (name[0] == 'A' || name[0] == 'Y')) {
        const int stage = parse_stage(1, name.size());
        if (stage > 0)
            return {name[0] == 'A' ? ColumnRole::Kind::treatment : ColumnRole::Kind::outcome, stage, ""};
    }
    if (name.size() >= 4 && name[0] == 'X') {
        const auto us = name.find('_');
        if (us != std::string::npos && us > 1 && us + 1 < name.size()) {
            const int stage = parse_stage(1, us);
            if (stage > 0) return {ColumnRole::Kind::covariate, stage, name.substr(us + 1)};
        }
    }
    throw std::runtime_error("unrecognized column name '" + name +
                             "' (expected id, X<t>_<name>, A<t> or Y<t>)");
}

void format_cell(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

int CompleteMask::count() const {
    int c = 0;
    for (auto m : mask) c += m;
    return c;
}

bool Dataset::stage_complete(int t, int i) const {
    const auto& st = stages.at(static_cast<std::size_t>(t - 1));
    for (int j = 0; j < st.present.cols(); ++j)
        if (!st.present(i, j)) return false;
    return true;
}

CompleteMask Dataset::complete_upto(int t) const {
    if (t < 1 || t > n_stages()) throw std::out_of_range("complete_upto: stage out of range");
    CompleteMask cm;
    cm.stage = t;
    cm.mask.assign(static_cast<std::size_t>(n()), 1);
    for (int s = 1; s <= t; ++s)
        for (int i = 0; i < n(); ++i)
            if (cm.mask[static_cast<std::size_t>(i)] && !stage_complete(s, i)) cm.mask[static_cast<std::size_t>(i)] = 0;
    return cm;
}

double Dataset::total_outcome(int i) const {
    double s = 0.0;
    for (const auto& st : stages) s += st.y(i);
    return s;
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
    Dataset out;
    out.ids.reserve(rows.size());
    for (int r : rows) out.ids.push_back(ids.at(static_cast<std::size_t>(r)));
    out.stages.reserve(stages.size());
    const auto m = static_cast<Eigen::Index>(rows.size());
    for (const auto& st : stages) {
        StageData ns;
        ns.covariate_names = st.covariate_names;
        ns.x.resize(m, st.x.cols());
        ns.present.resize(m, st.present.cols());
        ns.a.resize(m);
        ns.y.resize(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            const int r = rows[static_cast<std::size_t>(k)];
            ns.x.row(k) = st.x.row(r);
            ns.present.row(k) = st.present.row(r);
            ns.a(k) = st.a(r);
            ns.y(k) = st.y(r);
        }
        out.stages.push_back(std::move(ns));
    }
    return out;
}

Dataset load_csv(const std::string& path, LoadReport* report) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty file '" + path + "'");
    const auto headers = split_csv_line(line);

    std::vector<ColumnRole> roles;
    roles.reserve(headers.size());
    int max_stage = 0;
    for (const auto& h : headers) {
        roles.push_back(classify_header(h));
        max_stage = std::max(max_stage, roles.back().stage);
    }
    if (max_stage == 0) throw std::runtime_error("no stage columns found in '" + path + "'");

    // stable layout per stage
    std::vector<std::vector<std::string>> cov_names(static_cast<std::size_t>(max_stage));
    std::vector<int> a_col(static_cast<std::size_t>(max_stage), -1), y_col(static_cast<std::size_t>(max_stage), -1);
    int id_col = -1;
    std::vector<std::pair<int, int>> cov_slot(headers.size(), {-1, -1});  // (stage-1, col)
    for (std::size_t c = 0; c < roles.size(); ++c) {
        const auto& r = roles[c];
        switch (r.kind) {
            case ColumnRole::Kind::id:
                if (id_col >= 0) throw std::runtime_error("duplicate id column");
                id_col = static_cast<int>(c);
                break;
            case ColumnRole::Kind::treatment:
                a_col[static_cast<std::size_t>(r.stage - 1)] = static_cast<int>(c);
                break;
            case ColumnRole::Kind::outcome:
                y_col[static_cast<std::size_t>(r.stage - 1)] = static_cast<int>(c);
                break;
            case ColumnRole::Kind::covariate: {
                auto& names = cov_names[static_cast<std::size_t>(r.stage - 1)];
                cov_slot[c] = {r.stage - 1, static_cast<int>(names.size())};
                names.push_back(r.cov_name);
                break;
            }
        }
    }
    for (int t = 0; t < max_stage; ++t) {
        if (a_col[static_cast<std::size_t>(t)] < 0 || y_col[static_cast<std::size_t>(t)] < 0)
            throw std::runtime_error("stage " + std::to_string(t + 1) + " lacks a treatment or outcome column");
    }

    std::vector<std::vector<std::string>> raw_rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != headers.size())
            throw std::runtime_error("row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                     " cells, expected " + std::to_string(headers.size()));
        raw_rows.push_back(std::move(cells));
    }

    const auto n = static_cast<Eigen::Index>(raw_rows.size());
    Dataset ds;
    ds.ids.reserve(raw_rows.size());
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < raw_rows.size(); ++i) {
        std::string id = id_col >= 0 ? raw_rows[i][static_cast<std::size_t>(id_col)] : std::to_string(i + 1);
        if (!seen_ids.insert(id).second) throw std::runtime_error("duplicate patient id '" + id + "'");
        ds.ids.push_back(std::move(id));
    }

    ds.stages.resize(static_cast<std::size_t>(max_stage));
    for (int t = 0; t < max_stage; ++t) {
        auto& st = ds.stages[static_cast<std::size_t>(t)];
        st.covariate_names = cov_names[static_cast<std::size_t>(t)];
        const auto p = static_cast<Eigen::Index>(st.covariate_names.size());
        st.x.setZero(n, p);
        st.present.setOnes(n, p);
        st.a.resize(n);
        st.y.resize(n);
    }

    LoadReport rep;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& cells = raw_rows[static_cast<std::size_t>(i)];
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto& role = roles[c];
            const auto& cell = cells[c];
            const int row_for_msg = static_cast<int>(i) + 2;  // 1-based incl. header
            switch (role.kind) {
                case ColumnRole::Kind::id:
                    break;
                case ColumnRole::Kind::covariate: {
                    auto [ts, cc] = cov_slot[c];
                    auto& st = ds.stages[static_cast<std::size_t>(ts)];
                    if (is_missing_token(cell)) {
                        st.present(i, cc) = 0;
                        st.x(i, cc) = 0.0;
                    } else {
                        st.x(i, cc) = parse_number(cell, row_for_msg, headers[c]);
                    }
                    break;
                }
                case ColumnRole::Kind::treatment: {
                    if (is_missing_token(cell))
                        throw std::runtime_error("treatment column " + headers[c] +
                                                 " must be fully observed (row " + std::to_string(row_for_msg) + ")");
                    ds.stages[static_cast<std::size_t>(role.stage - 1)].a(i) = parse_number(cell, row_for_msg, headers[c]);
                    break;
                }
                case ColumnRole::Kind::outcome: {
                    if (is_missing_token(cell))
                        throw std::runtime_error("outcome column " + headers[c] +
                                                 " must be fully observed (row " + std::to_string(row_for_msg) + ")");
                    ds.stages[static_cast<std::size_t>(role.stage - 1)].y(i) = parse_number(cell, row_for_msg, headers[c]);
                    break;
                }
            }
        }
    }

    // 0/1 treatments are recoded to -1/+1; -1/+1 is kept verbatim
    for (auto& st : ds.stages) {
        bool all_pm = true, all_01 = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double a = st.a(i);
            if (a != -1.0 && a != 1.0) all_pm = false;
            if (a != 0.0 && a != 1.0) all_01 = false;
        }
        if (!all_pm && all_01) {
            for (Eigen::Index i = 0; i < n; ++i) {
                st.a(i) = 2.0 * st.a(i) - 1.0;
                ++rep.recoded_treatments;
            }
        }
    }
    if (report) *report = rep;
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    std::string buf = "id";
    for (int t = 0; t < ds.n_stages(); ++t) {
        const auto& st = ds.stages[static_cast<std::size_t>(t)];
        for (const auto& nm : st.covariate_names) buf += ",X" + std::to_string(t + 1) + "_" + nm;
        buf += ",A" + std::to_string(t + 1) + ",Y" + std::to_string(t + 1);
    }
    buf += "\n";
    out << buf;
    for (int i = 0; i < ds.n(); ++i) {
        buf = ds.ids[static_cast<std::size_t>(i)];
        for (const auto& st : ds.stages) {
            for (int j = 0; j < st.x.cols(); ++j) {
                buf += ',';
                if (st.present(i, j))
                    format_cell(buf, st.x(i, j));
                else
                    buf += "NA";
            }
            buf += ',';
            format_cell(buf, st.a(i));
            buf += ',';
            format_cell(buf, st.y(i));
        }
        buf += "\n";
        out << buf;
    }
}

ValidationReport validate(const Dataset& ds) {
    ValidationReport rep;
    for (int t = 0; t < ds.n_stages(); ++t) {
        const auto& st = ds.stages[static_cast<std::size_t>(t)];
        long missing = 0;
        for (int i = 0; i < ds.n(); ++i) {
            const double a = st.a(i);
            if (a != -1.0 && a != 1.0)
                rep.violations.push_back("treatment not in {-1,+1}: A" + std::to_string(t + 1) + " row " +
                                         std::to_string(i + 1) + " = " + std::to_string(a));
            if (std::isnan(st.y(i)))
                rep.violations.push_back("outcome must be fully observed: Y" + std::to_string(t + 1) + " row " +
                                         std::to_string(i + 1));
            for (int j = 0; j < st.present.cols(); ++j) missing += st.present(i, j) ? 0 : 1;
        }
        const double cells = static_cast<double>(ds.n()) * static_cast<double>(std::max<Eigen::Index>(st.x.cols(), 1));
        rep.missing_covariate_prop.push_back(st.x.cols() == 0 ? 0.0 : static_cast<double>(missing) / cells);
    }
    return rep;
}

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    os << (ok() ? "ok" : "invalid") << "\n";
    for (std::size_t t = 0; t < missing_covariate_prop.size(); ++t)
        os << "stage " << t + 1 << " missing covariate proportion: " << missing_covariate_prop[t] << "\n";
    for (const auto& v : violations) os << "violation: " << v << "\n";
    return os.str();
}

ColumnRef resolve_column(const Dataset& ds, const std::string& name) {
    if (name.size() >= 2 && (name[0] == 'A' || name[0] == 'Y') && name.find('_') == std::string::npos) {
        const int stage = std::stoi(name.substr(1));
        if (stage < 1 || stage > ds.n_stages()) throw std::runtime_error("unknown column '" + name + "'");
        return {name[0] == 'A' ? ColumnRef::Kind::treatment : ColumnRef::Kind::outcome, stage, 0};
    }
    if (name.size() >= 4 && name[0] == 'X') {
        const auto us = name.find('_');
        if (us != std::string::npos) {
            const int stage = std::stoi(name.substr(1, us - 1));
            if (stage >= 1 && stage <= ds.n_stages()) {
                const auto& names = ds.stages[static_cast<std::size_t>(stage - 1)].covariate_names;
                const auto it = std::find(names.begin(), names.end(), name.substr(us + 1));
                if (it != names.end())
                    return {ColumnRef::Kind::covariate, stage, static_cast<int>(it - names.begin())};
            }
        }
    }
    throw std::runtime_error("unknown column '" + name + "'");
}

std::string column_name(const Dataset& ds, const ColumnRef& ref) {
    switch (ref.kind) {
        case ColumnRef::Kind::treatment:
            return "A" + std::to_string(ref.stage);
        case ColumnRef::Kind::outcome:
            return "Y" + std::to_string(ref.stage);
        case ColumnRef::Kind::covariate:
        default:
            return "X" + std::to_string(ref.stage) + "_" +
                   ds.stages[static_cast<std::size_t>(ref.stage - 1)].covariate_names[static_cast<std::size_t>(ref.column)];
    }
}

double column_value(const Dataset& ds, const ColumnRef& ref, int row) {
    const auto& st = ds.stages[static_cast<std::size_t>(ref.stage - 1)];
    switch (ref.kind) {
        case ColumnRef::Kind::treatment:
            return st.a(row);
        case ColumnRef::Kind::outcome:
            return st.y(row);
        case ColumnRef::Kind::covariate:
        default:
            return st.x(row, ref.column);
    }
}

bool column_present(const Dataset& ds, const ColumnRef& ref, int row) {
    if (ref.kind != ColumnRef::Kind::covariate) return true;
    return ds.stages[static_cast<std::size_t>(ref.stage - 1)].present(row, ref.column) != 0;
}

std::vector<std::string> history_columns(const Dataset& ds, int t) {
    std::vector<std::string> cols;
    for (int s = 1; s <= t; ++s) {
        const auto& st = ds.stages[static_cast<std::size_t>(s - 1)];
        for (const auto& nm : st.covariate_names) cols.push_back("X" + std::to_string(s) + "_" + nm);
        if (s < t) {
            cols.push_back("A" + std::to_string(s));
            cols.push_back("Y" + std::to_string(s));
        }
    }
    return cols;
}

}  // namespace dtrwql
