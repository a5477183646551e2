#include "cfloop/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "cfloop/error.hpp"
#include "cfloop/rng.hpp"

namespace cfloop {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// RFC-4180 records: quoted fields may contain separators, doubled quotes and
// line breaks. Blank lines are skipped.
std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        const bool blank = record.size() == 1 && trim(record[0]).empty();
        if (!blank) records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field_started || trim(field).empty()) {
                    field.clear();
                    in_quotes = true;
                    field_started = true;
                } else {
                    field.push_back(c);
                }
                break;
            case ',': end_field(); break;
            case '\r': break;
            case '\n': end_record(); break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace

std::optional<std::size_t> FeatureSpec::category_index(std::string_view value) const {
    auto it = std::find(categories.begin(), categories.end(), value);
    if (it == categories.end()) return std::nullopt;
    return static_cast<std::size_t>(it - categories.begin());
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features, std::string label, std::string name)
    : features_(std::move(features)), label_(std::move(label)), name_(std::move(name)),
      bounds_known_(features_.size(), true) {
    if (features_.empty()) throw Error(ErrorCode::SchemaInvalid, "schema needs at least one feature");
    std::set<std::string> seen;
    for (const auto& f : features_) {
        if (f.name.empty()) throw Error(ErrorCode::SchemaInvalid, "feature with empty name");
        if (!seen.insert(f.name).second)
            throw Error(ErrorCode::SchemaInvalid, fmt::format("duplicate feature name '{}'", f.name));
        if (f.is_numeric() && !(f.lo <= f.hi))
            throw Error(ErrorCode::SchemaInvalid, fmt::format("feature '{}' has lo > hi", f.name));
        if (f.is_categorical() && f.categories.empty())
            throw Error(ErrorCode::SchemaInvalid, fmt::format("categorical feature '{}' has no categories", f.name));
        if (f.is_categorical()) {
            std::set<std::string> cats(f.categories.begin(), f.categories.end());
            if (cats.size() != f.categories.size())
                throw Error(ErrorCode::SchemaInvalid, fmt::format("feature '{}' repeats a category", f.name));
        }
    }
    if (label_.empty()) throw Error(ErrorCode::SchemaInvalid, "schema needs a label column name");
    if (seen.count(label_)) throw Error(ErrorCode::SchemaInvalid, "label column collides with a feature name");
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view feature) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
        if (features_[i].name == feature) return i;
    return std::nullopt;
}

std::size_t FeatureSchema::numeric_count() const {
    return static_cast<std::size_t>(
        std::count_if(features_.begin(), features_.end(), [](const auto& f) { return f.is_numeric(); }));
}

void FeatureSchema::validate(const Instance& x) const {
    if (x.size() != size())
        throw Error(ErrorCode::SchemaMismatch,
                    fmt::format("instance has {} values, schema has {} features", x.size(), size()));
    for (std::size_t i = 0; i < size(); ++i) {
        const auto& f = features_[i];
        const double v = x[i];
        if (!std::isfinite(v))
            throw Error(ErrorCode::SchemaMismatch, fmt::format("feature '{}' is not finite", f.name));
        if (f.is_categorical()) {
            if (v < 0 || v != std::floor(v) || v >= static_cast<double>(f.categories.size()))
                throw Error(ErrorCode::SchemaMismatch,
                            fmt::format("feature '{}' has invalid category code {}", f.name, v));
        }
    }
}

std::string FeatureSchema::format_value(std::size_t feature, double value) const {
    const auto& f = features_.at(feature);
    if (f.is_categorical()) {
        auto idx = static_cast<std::size_t>(value);
        if (value >= 0 && idx < f.categories.size()) return f.categories[idx];
        return fmt::format("<invalid:{}>", value);
    }
    return fmt::format("{}", value);
}

void FeatureSchema::set_bounds(std::size_t feature, double lo, double hi) {
    auto& f = features_.at(feature);
    if (!f.is_numeric()) throw Error(ErrorCode::SchemaInvalid, "bounds apply to numeric features only");
    if (!(lo <= hi)) throw Error(ErrorCode::SchemaInvalid, fmt::format("feature '{}' has lo > hi", f.name));
    f.lo = lo;
    f.hi = hi;
    bounds_known_[feature] = true;
}

nlohmann::json FeatureSchema::to_json() const {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : features_) {
        nlohmann::json jf{{"name", f.name}, {"kind", f.is_numeric() ? "numeric" : "categorical"}};
        if (f.is_numeric())
            jf["bounds"] = {f.lo, f.hi};
        else
            jf["categories"] = f.categories;
        features.push_back(std::move(jf));
    }
    nlohmann::json j{{"label", label_}, {"features", std::move(features)}};
    if (!name_.empty()) j["name"] = name_;
    return j;
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
    try {
        std::vector<FeatureSpec> specs;
        std::vector<bool> known;
        for (const auto& jf : j.at("features")) {
            FeatureSpec f;
            f.name = jf.at("name").get<std::string>();
            const auto kind = jf.at("kind").get<std::string>();
            if (kind == "numeric") {
                f.kind = FeatureKind::Numeric;
                if (jf.contains("bounds")) {
                    const auto& b = jf.at("bounds");
                    if (!b.is_array() || b.size() != 2)
                        throw Error(ErrorCode::SchemaInvalid, fmt::format("feature '{}': bounds must be [lo, hi]", f.name));
                    f.lo = b[0].get<double>();
                    f.hi = b[1].get<double>();
                    known.push_back(true);
                } else {
                    known.push_back(false);
                }
            } else if (kind == "categorical") {
                f.kind = FeatureKind::Categorical;
                for (const auto& c : jf.at("categories")) {
                    // numeric category labels in the file are accepted as their text
                    f.categories.push_back(c.is_string() ? c.get<std::string>() : c.dump());
                }
                known.push_back(true);
            } else {
                throw Error(ErrorCode::SchemaInvalid, fmt::format("feature '{}': unknown kind '{}'", f.name, kind));
            }
            specs.push_back(std::move(f));
        }
        FeatureSchema schema(std::move(specs), j.at("label").get<std::string>(), j.value("name", std::string{}));
        schema.bounds_known_ = std::move(known);
        return schema;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaInvalid, fmt::format("malformed schema: {}", e.what()));
    }
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaInvalid, fmt::format("schema '{}' does not parse: {}", path.string(), e.what()));
    }
    return from_json(j);
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.schema = schema;
    out.rows.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (auto i : indices) {
        out.rows.push_back(rows.at(i));
        out.labels.push_back(labels.at(i));
    }
    return out;
}

double FeatureWeights::total() const { return std::accumulate(w.begin(), w.end(), 0.0); }

Dataset parse_dataset(std::string_view csv_text, FeatureSchema schema) {
    auto records = parse_csv(csv_text);
    if (records.empty()) throw DataError(ErrorCode::EmptyFile, "CSV has no header");
    const auto& header = records.front();

    auto find_column = [&](const std::string& name) -> std::size_t {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (trim(header[c]) == name) return c;
        throw DataError(ErrorCode::MissingColumn, "CSV lacks a schema column", std::nullopt, name);
    };
    std::vector<std::size_t> column_of(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) column_of[i] = find_column(schema[i].name);
    const std::size_t label_col = find_column(schema.label());

    if (records.size() == 1) throw DataError(ErrorCode::EmptyFile, "CSV has a header but no data rows");

    Dataset ds;
    ds.rows.reserve(records.size() - 1);
    ds.labels.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != header.size())
            throw DataError(ErrorCode::SchemaMismatch,
                            fmt::format("expected {} fields, found {}", header.size(), rec.size()), r);
        Instance x(std::vector<double>(schema.size()));
        for (std::size_t i = 0; i < schema.size(); ++i) {
            const auto& f = schema[i];
            const std::string_view cell = trim(rec[column_of[i]]);
            if (f.is_numeric()) {
                auto v = parse_double(cell);
                if (!v) throw DataError(ErrorCode::BadNumber, fmt::format("unparseable number '{}'", cell), r, f.name);
                x[i] = *v;
            } else {
                auto idx = f.category_index(cell);
                if (!idx) throw DataError(ErrorCode::UnknownCategory, fmt::format("unknown category '{}'", cell), r, f.name);
                x[i] = static_cast<double>(*idx);
            }
        }
        const std::string_view label_cell = trim(rec[label_col]);
        auto lv = parse_double(label_cell);
        if (!lv || (*lv != 0.0 && *lv != 1.0))
            throw DataError(ErrorCode::BadNumber, fmt::format("label must be 0 or 1, got '{}'", label_cell), r,
                            schema.label());
        ds.rows.push_back(std::move(x));
        ds.labels.push_back(static_cast<int>(*lv));
    }

    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (!schema[i].is_numeric() || schema.has_bounds(i)) continue;
        double lo = ds.rows.front()[i], hi = lo;
        for (const auto& row : ds.rows) {
            lo = std::min(lo, row[i]);
            hi = std::max(hi, row[i]);
        }
        schema.set_bounds(i, lo, hi);
    }
    ds.schema = std::move(schema);
    return ds;
}

Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path) {
    auto schema = FeatureSchema::load(schema_path);
    return parse_dataset(read_file(csv_path), std::move(schema));
}

std::string to_csv(const Dataset& ds) {
    std::string out;
    for (std::size_t i = 0; i < ds.schema.size(); ++i) {
        out += quote_if_needed(ds.schema[i].name);
        out += ',';
    }
    out += quote_if_needed(ds.schema.label());
    out += '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t i = 0; i < ds.schema.size(); ++i) {
            out += quote_if_needed(ds.schema.format_value(i, ds.rows[r][i]));
            out += ',';
        }
        out += std::to_string(ds.labels[r]);
        out += '\n';
    }
    return out;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
    out << to_csv(ds);
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw Error(ErrorCode::InvalidArgument, fmt::format("split ratio {} outside (0,1)", ratio));
    if (ds.size() < 2) throw Error(ErrorCode::InvalidArgument, "split needs at least two rows");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.size())));
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    // keep original row order inside each partition
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {ds.subset(train), ds.subset(test)};
}

FeatureWeights compute_weights(const Dataset& ds) {
    if (ds.empty()) throw Error(ErrorCode::EmptyInput, "cannot compute weights of an empty dataset");
    FeatureWeights out{std::vector<double>(ds.schema.size(), 1.0)};
    const std::size_t n = ds.size();
    std::vector<double> column(n);
    for (std::size_t i = 0; i < ds.schema.size(); ++i) {
        if (!ds.schema[i].is_numeric()) continue;
        for (std::size_t r = 0; r < n; ++r) column[r] = ds.rows[r][i];
        const double med = median_of(column);
        std::vector<double> dev(n);
        std::transform(column.begin(), column.end(), dev.begin(), [med](double v) { return std::abs(v - med); });
        const double mad = median_of(std::move(dev));
        if (mad > 0.0 && std::isfinite(1.0 / mad)) {
            out.w[i] = 1.0 / mad;
            continue;
        }
        double sd = 0.0;
        if (n >= 2) {
            const double mean = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(n);
            double ss = 0.0;
            for (double v : column) ss += (v - mean) * (v - mean);
            sd = std::sqrt(ss / static_cast<double>(n - 1));
        }
        out.w[i] = (sd > 0.0 && std::isfinite(1.0 / sd)) ? 1.0 / sd : 1.0;
    }
    return out;
}

Instance normalize(const Instance& x, const FeatureSchema& schema) {
    Instance out = x;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& f = schema[i];
        if (!f.is_numeric()) continue;
        const double span = f.hi - f.lo;
        const double v = span > 0.0 ? (x[i] - f.lo) / span : 0.0;
        out[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

Dataset normalize(const Dataset& ds) {
    Dataset out;
    out.labels = ds.labels;
    out.rows.reserve(ds.size());
    for (const auto& row : ds.rows) out.rows.push_back(normalize(row, ds.schema));
    out.schema = ds.schema;
    for (std::size_t i = 0; i < out.schema.size(); ++i)
        if (out.schema[i].is_numeric()) out.schema.set_bounds(i, 0.0, 1.0);
    return out;
}

}  // namespace cfloop
