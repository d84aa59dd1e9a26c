#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace leakguard {

enum class ColumnKind { numeric, categorical };

// One column of a dataset. Numeric columns mark missing entries with NaN,
// categorical columns with code -1. Categorical level sets are frozen when
// the column is built (first-appearance order).
struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<double> values;
    std::vector<std::int32_t> codes;
    std::vector<std::string> levels;

    std::size_t size() const {
        return kind == ColumnKind::numeric ? values.size() : codes.size();
    }
    bool missing(std::size_t i) const {
        return kind == ColumnKind::numeric ? std::isnan(values[i]) : codes[i] < 0;
    }
    const std::string& level_of(std::size_t i) const { return levels.at(static_cast<std::size_t>(codes[i])); }

    static Column numeric_col(std::string name, std::vector<double> v);
    static Column categorical_col(std::string name, const std::vector<std::string>& v,
                                  const std::vector<std::string>& na_tokens = {"", "NA"});
};

struct RoleMap {
    std::string outcome;
    std::optional<std::string> positive_class;
    std::optional<std::string> subject;
    std::optional<std::string> batch;
    std::optional<std::string> study;
    std::optional<std::string> time;
    // empty means "every column without another role"
    std::vector<std::string> predictors;
};

enum class TaskKind { binary_classification, regression };

class Dataset {
public:
    static Dataset build(std::vector<Column> columns, RoleMap roles);

    std::size_t n_rows() const { return n_rows_; }
    const std::vector<Column>& columns() const { return columns_; }
    const RoleMap& roles() const { return roles_; }
    TaskKind task() const { return task_; }
    const std::string& positive_class() const { return positive_class_; }

    bool has_column(const std::string& name) const;
    const Column& column(const std::string& name) const;

    // binary: 1 for the positive class, 0 otherwise; regression: raw values
    std::vector<double> outcome_values() const;
    // numeric role column (time); throws if categorical
    std::vector<double> numeric_values(const std::string& name) const;
    // grouping codes for a role column; numeric group columns are coded by
    // distinct value
    std::vector<std::int32_t> group_codes(const std::string& name) const;
    std::vector<std::string> group_labels(const std::string& name) const;

    std::vector<std::string> predictor_names() const;

    Dataset with_column(Column col) const;   // appended as a predictor
    Dataset without_column(const std::string& name) const;

    std::string content_hash() const;  // sha256 of canonical CSV text

private:
    std::vector<Column> columns_;
    RoleMap roles_;
    TaskKind task_ = TaskKind::binary_classification;
    std::string positive_class_;
    std::size_t n_rows_ = 0;
};

struct CsvOptions {
    char delimiter = ',';
    std::vector<std::string> na_tokens = {"", "NA"};
};

Dataset load_csv(const std::string& path, RoleMap roles, const CsvOptions& opts = {});
Dataset parse_csv(const std::string& text, RoleMap roles, const CsvOptions& opts = {});
std::string to_csv(const Dataset& ds);
void write_csv(const Dataset& ds, const std::string& path);

// Predictor encoding used by every model path: numeric columns pass through,
// categorical columns become one dummy per level (missing rows get NaN in
// each derived feature and are settled by imputation).
struct FeatureMatrix {
    Eigen::MatrixXd X;
    std::vector<std::string> names;
};
FeatureMatrix encode_features(const Dataset& ds, const std::vector<std::string>& cols);

}  // namespace leakguard
