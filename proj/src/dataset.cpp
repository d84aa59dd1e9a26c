#include "leakguard/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "leakguard/hash.hpp"

namespace leakguard {

namespace {

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // trim to the shortest representation that round-trips
    for (int prec = 1; prec <= 17; ++prec) {
        char probe[32];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        double back = std::strtod(probe, nullptr);
        if (back == v) return probe;
    }
    return buf;
}

bool is_na(const std::string& tok, const std::vector<std::string>& na_tokens) {
    return std::find(na_tokens.begin(), na_tokens.end(), tok) != na_tokens.end();
}

}  // namespace

Column Column::numeric_col(std::string name, std::vector<double> v) {
    Column c;
    c.name = std::move(name);
    c.kind = ColumnKind::numeric;
    c.values = std::move(v);
    return c;
}

Column Column::categorical_col(std::string name, const std::vector<std::string>& v,
                               const std::vector<std::string>& na_tokens) {
    Column c;
    c.name = std::move(name);
    c.kind = ColumnKind::categorical;
    c.codes.reserve(v.size());
    std::map<std::string, std::int32_t> index;
    for (const auto& s : v) {
        if (is_na(s, na_tokens)) {
            c.codes.push_back(-1);
            continue;
        }
        auto it = index.find(s);
        if (it == index.end()) {
            std::int32_t code = static_cast<std::int32_t>(c.levels.size());
            index.emplace(s, code);
            c.levels.push_back(s);
            c.codes.push_back(code);
        } else {
            c.codes.push_back(it->second);
        }
    }
    return c;
}

Dataset Dataset::build(std::vector<Column> columns, RoleMap roles) {
    Dataset ds;
    if (columns.empty()) throw std::invalid_argument("dataset has no columns");
    ds.n_rows_ = columns.front().size();
    std::set<std::string> seen;
    for (const auto& c : columns) {
        if (c.size() != ds.n_rows_)
            throw std::invalid_argument("column '" + c.name + "' has inconsistent length");
        if (!seen.insert(c.name).second)
            throw std::invalid_argument("duplicate column name '" + c.name + "'");
    }
    ds.columns_ = std::move(columns);
    ds.roles_ = std::move(roles);

    auto require = [&](const std::string& name, const char* role) {
        if (!ds.has_column(name))
            throw std::invalid_argument(std::string(role) + " column '" + name + "' not found");
    };
    require(ds.roles_.outcome, "outcome");
    for (const auto& opt : {ds.roles_.subject, ds.roles_.batch, ds.roles_.study, ds.roles_.time})
        if (opt) require(*opt, "role");

    const Column& oc = ds.column(ds.roles_.outcome);
    for (std::size_t i = 0; i < ds.n_rows_; ++i)
        if (oc.missing(i))
            throw std::invalid_argument("outcome column '" + oc.name + "' has missing values");

    if (oc.kind == ColumnKind::categorical) {
        ds.task_ = TaskKind::binary_classification;
        if (oc.levels.size() != 2)
            throw std::invalid_argument("binary outcome '" + oc.name + "' must have exactly 2 levels, found " +
                                        std::to_string(oc.levels.size()));
        if (ds.roles_.positive_class) {
            ds.positive_class_ = *ds.roles_.positive_class;
            if (std::find(oc.levels.begin(), oc.levels.end(), ds.positive_class_) == oc.levels.end())
                throw std::invalid_argument("positive class '" + ds.positive_class_ +
                                            "' is not a level of '" + oc.name + "'");
        } else {
            ds.positive_class_ = oc.levels[1];
        }
    } else {
        ds.task_ = TaskKind::regression;
        if (ds.roles_.positive_class)
            throw std::invalid_argument("positive_class given for a numeric outcome");
    }

    if (ds.roles_.predictors.empty()) {
        std::set<std::string> excluded = {ds.roles_.outcome};
        for (const auto& opt : {ds.roles_.subject, ds.roles_.batch, ds.roles_.study, ds.roles_.time})
            if (opt) excluded.insert(*opt);
        for (const auto& c : ds.columns_)
            if (!excluded.count(c.name)) ds.roles_.predictors.push_back(c.name);
    } else {
        for (const auto& p : ds.roles_.predictors) require(p, "predictor");
    }
    if (ds.roles_.predictors.empty())
        throw std::invalid_argument("no predictor columns");
    return ds;
}

bool Dataset::has_column(const std::string& name) const {
    for (const auto& c : columns_)
        if (c.name == name) return true;
    return false;
}

const Column& Dataset::column(const std::string& name) const {
    for (const auto& c : columns_)
        if (c.name == name) return c;
    throw std::out_of_range("no column named '" + name + "'");
}

std::vector<double> Dataset::outcome_values() const {
    const Column& oc = column(roles_.outcome);
    std::vector<double> y(n_rows_);
    if (task_ == TaskKind::binary_classification) {
        std::int32_t pos = -1;
        for (std::size_t k = 0; k < oc.levels.size(); ++k)
            if (oc.levels[k] == positive_class_) pos = static_cast<std::int32_t>(k);
        for (std::size_t i = 0; i < n_rows_; ++i) y[i] = oc.codes[i] == pos ? 1.0 : 0.0;
    } else {
        y = oc.values;
    }
    return y;
}

std::vector<double> Dataset::numeric_values(const std::string& name) const {
    const Column& c = column(name);
    if (c.kind != ColumnKind::numeric)
        throw std::invalid_argument("column '" + name + "' is not numeric");
    return c.values;
}

std::vector<std::int32_t> Dataset::group_codes(const std::string& name) const {
    const Column& c = column(name);
    if (c.kind == ColumnKind::categorical) {
        for (std::size_t i = 0; i < n_rows_; ++i)
            if (c.codes[i] < 0)
                throw std::invalid_argument("group column '" + name + "' has missing values");
        return c.codes;
    }
    std::vector<std::int32_t> codes(n_rows_);
    std::map<double, std::int32_t> index;
    for (std::size_t i = 0; i < n_rows_; ++i) {
        if (std::isnan(c.values[i]))
            throw std::invalid_argument("group column '" + name + "' has missing values");
        auto [it, inserted] = index.emplace(c.values[i], static_cast<std::int32_t>(index.size()));
        codes[i] = it->second;
    }
    return codes;
}

std::vector<std::string> Dataset::group_labels(const std::string& name) const {
    const Column& c = column(name);
    if (c.kind == ColumnKind::categorical) return c.levels;
    std::vector<std::string> labels;
    std::map<double, std::int32_t> index;
    for (std::size_t i = 0; i < n_rows_; ++i) {
        auto [it, inserted] = index.emplace(c.values[i], static_cast<std::int32_t>(index.size()));
        if (inserted) labels.push_back(format_double(c.values[i]));
    }
    return labels;
}

std::vector<std::string> Dataset::predictor_names() const { return roles_.predictors; }

Dataset Dataset::with_column(Column col) const {
    std::vector<Column> cols = columns_;
    RoleMap roles = roles_;
    roles.predictors.push_back(col.name);
    cols.push_back(std::move(col));
    return Dataset::build(std::move(cols), std::move(roles));
}

Dataset Dataset::without_column(const std::string& name) const {
    std::vector<Column> cols;
    for (const auto& c : columns_)
        if (c.name != name) cols.push_back(c);
    RoleMap roles = roles_;
    roles.predictors.erase(std::remove(roles.predictors.begin(), roles.predictors.end(), name),
                           roles.predictors.end());
    return Dataset::build(std::move(cols), std::move(roles));
}

std::string Dataset::content_hash() const { return sha256_hex(to_csv(*this)); }

// ---------------------------------------------------------------------------
// CSV (RFC 4180: quoted fields, doubled quotes, embedded delimiters/newlines)
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> parse_csv_records(const std::string& text, char delim) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    auto end_field = [&]() {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&]() {
        end_field();
        records.push_back(record);
        record.clear();
    };
    while (i < text.size()) {
        char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                } else {
                    in_quotes = false;
                    ++i;
                }
            } else {
                field.push_back(ch);
                ++i;
            }
        } else if (ch == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
            ++i;
        } else if (ch == delim) {
            end_field();
            ++i;
        } else if (ch == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
            ++i;
        } else if (ch == '\n') {
            end_record();
            ++i;
        } else {
            field.push_back(ch);
            field_started = true;
            ++i;
        }
    }
    if (in_quotes) throw std::invalid_argument("unterminated quoted CSV field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

std::string csv_escape(const std::string& s, char delim) {
    bool needs = s.find(delim) != std::string::npos || s.find('"') != std::string::npos ||
                 s.find('\n') != std::string::npos || s.find('\r') != std::string::npos;
    if (!needs) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out.push_back(ch);
    }
    out += "\"";
    return out;
}

}  // namespace

Dataset parse_csv(const std::string& text, RoleMap roles, const CsvOptions& opts) {
    auto records = parse_csv_records(text, opts.delimiter);
    if (records.size() < 2)
        throw std::invalid_argument("CSV needs a header row and at least one data row");
    const auto& header = records.front();
    std::size_t ncol = header.size();
    std::vector<std::vector<std::string>> raw(ncol);
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != ncol)
            throw std::invalid_argument("CSV row " + std::to_string(r + 1) + " has " +
                                        std::to_string(records[r].size()) + " fields, expected " +
                                        std::to_string(ncol));
        for (std::size_t c = 0; c < ncol; ++c) raw[c].push_back(records[r][c]);
    }

    // Columns forced categorical: grouping roles always; the outcome whenever
    // a positive class is named (so 0/1 labels stay a classification target).
    std::set<std::string> force_cat;
    for (const auto& opt : {roles.subject, roles.batch, roles.study})
        if (opt) force_cat.insert(*opt);
    if (roles.positive_class) force_cat.insert(roles.outcome);

    std::vector<Column> cols;
    for (std::size_t c = 0; c < ncol; ++c) {
        bool numeric = !force_cat.count(header[c]);
        if (numeric) {
            for (const auto& tok : raw[c]) {
                double v;
                if (!is_na(tok, opts.na_tokens) && !parse_double(tok, v)) {
                    numeric = false;
                    break;
                }
            }
        }
        if (numeric) {
            std::vector<double> vals(raw[c].size());
            for (std::size_t i = 0; i < raw[c].size(); ++i) {
                double v = std::nan("");
                if (!is_na(raw[c][i], opts.na_tokens)) parse_double(raw[c][i], v);
                vals[i] = v;
            }
            cols.push_back(Column::numeric_col(header[c], std::move(vals)));
        } else {
            cols.push_back(Column::categorical_col(header[c], raw[c], opts.na_tokens));
        }
    }
    return Dataset::build(std::move(cols), std::move(roles));
}

Dataset load_csv(const std::string& path, RoleMap roles, const CsvOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open CSV file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), std::move(roles), opts);
}

std::string to_csv(const Dataset& ds) {
    std::ostringstream out;
    const auto& cols = ds.columns();
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (c) out << ',';
        out << csv_escape(cols[c].name, ',');
    }
    out << '\n';
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c) out << ',';
            if (cols[c].missing(i)) {
                out << "NA";
            } else if (cols[c].kind == ColumnKind::numeric) {
                out << format_double(cols[c].values[i]);
            } else {
                out << csv_escape(cols[c].level_of(i), ',');
            }
        }
        out << '\n';
    }
    return out.str();
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write CSV file '" + path + "'");
    out << to_csv(ds);
}

FeatureMatrix encode_features(const Dataset& ds, const std::vector<std::string>& cols) {
    FeatureMatrix fm;
    std::size_t n = ds.n_rows();
    std::vector<std::vector<double>> feats;
    for (const auto& name : cols) {
        const Column& c = ds.column(name);
        if (c.kind == ColumnKind::numeric) {
            feats.push_back(c.values);
            fm.names.push_back(name);
        } else {
            for (std::size_t k = 0; k < c.levels.size(); ++k) {
                std::vector<double> d(n);
                for (std::size_t i = 0; i < n; ++i)
                    d[i] = c.codes[i] < 0 ? std::nan("")
                                          : (c.codes[i] == static_cast<std::int32_t>(k) ? 1.0 : 0.0);
                feats.push_back(std::move(d));
                fm.names.push_back(name + "=" + c.levels[k]);
            }
        }
    }
    fm.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feats.size()));
    for (std::size_t j = 0; j < feats.size(); ++j)
        for (std::size_t i = 0; i < n; ++i)
            fm.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = feats[j][i];
    return fm;
}

}  // namespace leakguard
