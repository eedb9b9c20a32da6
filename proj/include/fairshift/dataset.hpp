#pragma once
// Tabular ingestion (UCI Adult layout), feature encoding, and group-set
// construction over raw columns.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairshift/core.hpp"

namespace fairshift {

using Mask = std::vector<std::uint8_t>;

// Named collection of binary membership masks. Construction validates the
// invariants: masks cover the stated length, no group is empty, and a
// partition is pairwise disjoint with full coverage.
struct GroupSet {
    std::string name;
    std::vector<Mask> masks;
    std::vector<std::string> group_names;
    bool is_partition = false;

    static GroupSet create(std::string name, std::vector<Mask> masks,
                           std::vector<std::string> group_names, bool is_partition) {
        if (masks.size() != group_names.size())
            throw ArgumentError("group set '" + name + "': mask/name count mismatch");
        if (masks.empty())
            throw ArgumentError("group set '" + name + "': no groups");
        const std::size_t n = masks[0].size();
        std::vector<std::uint32_t> hits(n, 0);
        for (std::size_t k = 0; k < masks.size(); ++k) {
            if (masks[k].size() != n)
                throw ArgumentError("group set '" + name + "': mask length mismatch in group '" +
                                    group_names[k] + "'");
            std::size_t members = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (masks[k][i]) {
                    ++members;
                    ++hits[i];
                }
            }
            if (members == 0)
                throw ArgumentError("group set '" + name + "': empty group '" + group_names[k] + "'");
        }
        if (is_partition) {
            for (std::size_t i = 0; i < n; ++i)
                if (hits[i] != 1)
                    throw ArgumentError("group set '" + name + "': not a partition at example " +
                                        std::to_string(i));
        }
        GroupSet gs;
        gs.name = std::move(name);
        gs.masks = std::move(masks);
        gs.group_names = std::move(group_names);
        gs.is_partition = is_partition;
        return gs;
    }

    std::size_t group_count() const { return masks.size(); }
    std::size_t example_count() const { return masks.empty() ? 0 : masks[0].size(); }

    std::size_t member_count(std::size_t k) const {
        std::size_t c = 0;
        for (auto v : masks[k]) c += v != 0;
        return c;
    }
};

// Feature matrix plus labels plus the retained raw columns used for group
// construction. `features` is empty until encode() fills it.
struct Dataset {
    Matrix features;
    std::vector<std::string> feature_names;
    std::vector<int> labels;
    std::map<std::string, std::vector<std::string>> raw_columns;

    std::size_t size() const { return labels.size(); }

    const std::vector<std::string>& raw_column(const std::string& name) const {
        auto it = raw_columns.find(name);
        if (it == raw_columns.end())
            throw ArgumentError("unknown column '" + name + "'");
        return it->second;
    }
};

struct EncodingSpec {
    std::vector<std::string> excluded_columns;
    std::vector<std::string> categorical_columns;
    std::vector<std::string> numeric_columns;
};

struct IngestionReport {
    std::size_t train_rows_read = 0, train_rows_kept = 0, train_rows_dropped = 0;
    std::size_t test_rows_read = 0, test_rows_kept = 0, test_rows_dropped = 0;
    std::size_t train_positive = 0, test_positive = 0;
    std::map<std::string, std::map<std::string, std::size_t>> category_inventory;  // train side

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["train"] = {{"rows_read", train_rows_read},
                      {"rows_kept", train_rows_kept},
                      {"rows_dropped", train_rows_dropped},
                      {"positive_labels", train_positive}};
        j["test"] = {{"rows_read", test_rows_read},
                     {"rows_kept", test_rows_kept},
                     {"rows_dropped", test_rows_dropped},
                     {"positive_labels", test_positive}};
        j["category_inventory"] = category_inventory;
        return j;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline const std::vector<std::string>& adult_columns() {
    static const std::vector<std::string> cols = {
        "age",           "workclass",    "fnlwgt",       "education",
        "education-num", "marital-status", "occupation", "relationship",
        "race",          "sex",          "capital-gain", "capital-loss",
        "hours-per-week", "native-country"};
    return cols;
}

struct AdultSplit {
    Dataset data;
    std::size_t rows_read = 0;
    std::size_t rows_dropped = 0;
};

inline AdultSplit load_adult_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");

    const auto& cols = adult_columns();
    AdultSplit split;
    for (const auto& c : cols) split.data.raw_columns[c] = {};

    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        if (stripped[0] == '|') continue;  // cross-validator header in adult.test

        auto fields = split_csv(stripped);
        if (fields.size() != cols.size() + 1)
            throw ParseError("expected " + std::to_string(cols.size() + 1) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_number);
        ++split.rows_read;

        bool missing = false;
        for (const auto& f : fields)
            if (f == "?") missing = true;
        if (missing) {
            ++split.rows_dropped;
            continue;
        }

        std::string label = fields.back();
        if (!label.empty() && label.back() == '.') label.pop_back();
        int y;
        if (label == ">50K")
            y = 1;
        else if (label == "<=50K")
            y = 0;
        else
            throw DataError("unknown label token '" + fields.back() + "' at line " +
                            std::to_string(line_number));

        for (std::size_t c = 0; c < cols.size(); ++c)
            split.data.raw_columns[cols[c]].push_back(fields[c]);
        split.data.labels.push_back(y);
    }
    return split;
}

inline double parse_numeric(const std::string& s, const std::string& column) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v))
            throw DataError("non-numeric value '" + s + "' in column '" + column + "'");
        return v;
    } catch (const std::invalid_argument&) {
        throw DataError("non-numeric value '" + s + "' in column '" + column + "'");
    } catch (const std::out_of_range&) {
        throw DataError("numeric overflow on '" + s + "' in column '" + column + "'");
    }
}

}  // namespace detail

// Reads the official UCI Adult layout (15 comma-separated fields, optional
// "|" header line and trailing label periods in the test file). Rows with a
// "?" marker are dropped.
inline std::pair<Dataset, Dataset> load_adult(const std::string& train_path,
                                              const std::string& test_path,
                                              IngestionReport* report = nullptr) {
    auto train = detail::load_adult_file(train_path);
    auto test = detail::load_adult_file(test_path);
    if (report) {
        report->train_rows_read = train.rows_read;
        report->train_rows_dropped = train.rows_dropped;
        report->train_rows_kept = train.data.size();
        report->test_rows_read = test.rows_read;
        report->test_rows_dropped = test.rows_dropped;
        report->test_rows_kept = test.data.size();
        for (int y : train.data.labels) report->train_positive += y;
        for (int y : test.data.labels) report->test_positive += y;
        for (const auto& col :
             {"workclass", "education", "marital-status", "occupation", "relationship", "race",
              "sex", "native-country"}) {
            auto& inv = report->category_inventory[col];
            for (const auto& v : train.data.raw_columns.at(col)) ++inv[v];
        }
    }
    return {std::move(train.data), std::move(test.data)};
}

struct EncodeResult {
    Dataset train;
    Dataset test;
    std::vector<std::string> warnings;
};

// One-hot categories are the union of categories seen in the training split
// (test-only categories encode to all-zero); numerics are z-scored with
// train-split statistics. Excluded columns contribute no dimension.
inline EncodeResult encode(const Dataset& train, const Dataset& test, const EncodingSpec& spec) {
    for (const auto& c : spec.categorical_columns) train.raw_column(c);
    for (const auto& c : spec.numeric_columns) train.raw_column(c);

    std::set<std::string> excluded(spec.excluded_columns.begin(), spec.excluded_columns.end());

    EncodeResult out;
    out.train = train;
    out.test = test;

    struct CatPlan {
        std::string column;
        std::vector<std::string> categories;
    };
    struct NumPlan {
        std::string column;
        double mean = 0.0, std = 0.0;
    };
    std::vector<CatPlan> cats;
    std::vector<NumPlan> nums;
    std::vector<std::string> names;

    for (const auto& col : spec.categorical_columns) {
        if (excluded.count(col)) continue;
        std::set<std::string> seen(train.raw_column(col).begin(), train.raw_column(col).end());
        CatPlan plan{col, {seen.begin(), seen.end()}};
        for (const auto& cat : plan.categories) names.push_back(col + "=" + cat);
        cats.push_back(std::move(plan));
    }
    for (const auto& col : spec.numeric_columns) {
        if (excluded.count(col)) continue;
        const auto& raw = train.raw_column(col);
        double mean = 0.0;
        for (const auto& s : raw) mean += detail::parse_numeric(s, col);
        mean /= static_cast<double>(raw.size());
        double var = 0.0;
        for (const auto& s : raw) {
            const double d = detail::parse_numeric(s, col) - mean;
            var += d * d;
        }
        var /= static_cast<double>(raw.size());
        NumPlan plan{col, mean, std::sqrt(var)};
        if (plan.std == 0.0)
            out.warnings.push_back("numeric column '" + col +
                                   "' has zero variance in the training split; encoded as 0");
        names.push_back(col);
        nums.push_back(plan);
    }

    auto encode_split = [&](const Dataset& src) {
        Matrix m(src.size(), names.size());
        std::size_t j = 0;
        for (const auto& plan : cats) {
            const auto& raw = src.raw_column(plan.column);
            std::map<std::string, std::size_t> idx;
            for (std::size_t c = 0; c < plan.categories.size(); ++c) idx[plan.categories[c]] = c;
            for (std::size_t i = 0; i < raw.size(); ++i) {
                auto it = idx.find(raw[i]);
                if (it != idx.end()) m(i, j + it->second) = 1.0;
            }
            j += plan.categories.size();
        }
        for (const auto& plan : nums) {
            const auto& raw = src.raw_column(plan.column);
            for (std::size_t i = 0; i < raw.size(); ++i) {
                const double v = detail::parse_numeric(raw[i], plan.column);
                m(i, j) = plan.std == 0.0 ? 0.0 : (v - plan.mean) / plan.std;
            }
            ++j;
        }
        return m;
    };

    out.train.features = encode_split(train);
    out.test.features = encode_split(test);
    out.train.feature_names = names;
    out.test.feature_names = names;

    if (!out.train.features.all_finite() || !out.test.features.all_finite())
        throw NumericalError("non-finite value produced by encoding");
    return out;
}

// One mask per distinct value of a raw column; always a partition.
inline GroupSet categorical_groups(const Dataset& data, const std::string& column) {
    const auto& raw = data.raw_column(column);
    std::map<std::string, std::size_t> idx;
    for (const auto& v : raw)
        if (!idx.count(v)) idx[v] = 0;
    std::size_t k = 0;
    for (auto& [_, id] : idx) id = k++;

    std::vector<Mask> masks(idx.size(), Mask(raw.size(), 0));
    std::vector<std::string> names(idx.size());
    for (const auto& [value, id] : idx) names[id] = value;
    for (std::size_t i = 0; i < raw.size(); ++i) masks[idx.at(raw[i])][i] = 1;
    return GroupSet::create(column, std::move(masks), std::move(names), true);
}

// Buckets at the j/k empirical quantiles of `values`. Ties go to the lower
// bucket; a bucket emptied by tied boundaries is merged into its lower
// neighbor (the merge is recorded in the group name).
inline GroupSet quantile_groups(const std::vector<double>& values, std::size_t k,
                                const std::string& name = "quantiles") {
    if (k < 2) throw ArgumentError("quantile_groups: need k >= 2");
    if (values.empty()) throw ArgumentError("quantile_groups: empty values");
    const std::size_t n = values.size();

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> boundaries(k - 1);
    for (std::size_t j = 1; j < k; ++j) {
        const std::size_t pos = (j * n + k - 1) / k;  // ceil(j*n/k)
        boundaries[j - 1] = sorted[pos - 1];
    }

    auto bucket_of = [&](double v) {
        std::size_t b = 0;
        for (double bound : boundaries)
            if (v > bound) ++b;
        return b;
    };

    std::vector<Mask> buckets(k, Mask(n, 0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t b = bucket_of(values[i]);
        buckets[b][i] = 1;
        ++counts[b];
    }

    // Merge empty buckets into their lower neighbor. Bucket 0 always holds
    // the minimum value, so a lower neighbor exists.
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // inclusive bucket ranges
    for (std::size_t b = 0; b < k; ++b) {
        if (counts[b] > 0)
            spans.emplace_back(b, b);
        else
            spans.back().second = b;
    }

    std::vector<Mask> masks;
    std::vector<std::string> names;
    for (const auto& [begin, end] : spans) {
        masks.push_back(buckets[begin]);  // only the span's first bucket has members
        names.push_back(begin == end ? "q" + std::to_string(begin + 1)
                                     : "q" + std::to_string(begin + 1) + "-" +
                                           std::to_string(end + 1));
    }
    return GroupSet::create(name, std::move(masks), std::move(names), true);
}

// Keeps the m largest groups with at least min_count members; every other
// example lands in a catch-all "rest" group.
inline GroupSet top_m_groups(const GroupSet& groups, std::size_t m, std::size_t min_count) {
    if (!groups.is_partition)
        throw ContractError("top_m_groups requires a partition");
    const std::size_t n = groups.example_count();

    std::vector<std::pair<std::size_t, std::size_t>> order;  // (index, size)
    for (std::size_t k = 0; k < groups.group_count(); ++k)
        order.emplace_back(k, groups.member_count(k));
    std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return groups.group_names[a.first] < groups.group_names[b.first];
    });

    std::vector<Mask> masks;
    std::vector<std::string> names;
    Mask rest(n, 1);
    for (const auto& [idx, size] : order) {
        if (masks.size() >= m || size < min_count) continue;
        masks.push_back(groups.masks[idx]);
        names.push_back(groups.group_names[idx]);
        for (std::size_t i = 0; i < n; ++i)
            if (groups.masks[idx][i]) rest[i] = 0;
    }
    if (masks.empty())
        throw DataError("top_m_groups: no group has at least " + std::to_string(min_count) +
                        " members; nothing to shift");

    std::size_t rest_size = 0;
    for (auto v : rest) rest_size += v;
    if (rest_size > 0) {
        std::string rest_name = "rest";
        while (std::find(names.begin(), names.end(), rest_name) != names.end())
            rest_name += "_";
        masks.push_back(std::move(rest));
        names.push_back(rest_name);
    }
    return GroupSet::create(groups.name + "_top" + std::to_string(m), std::move(masks),
                            std::move(names), true);
}

}  // namespace fairshift
