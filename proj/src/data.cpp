#include "survrec/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace survrec {

std::string to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::Continuous: return "continuous";
        case FeatureKind::Binary: return "binary";
        case FeatureKind::Ordinal: return "ordinal";
        case FeatureKind::Nominal: return "nominal";
    }
    return "continuous";
}

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "continuous") return FeatureKind::Continuous;
    if (s == "binary") return FeatureKind::Binary;
    if (s == "ordinal") return FeatureKind::Ordinal;
    if (s == "nominal") return FeatureKind::Nominal;
    throw SchemaError("unknown feature kind: " + s);
}

void validate_schema(const Schema& schema) {
    std::set<std::string> names;
    for (const auto& f : schema) {
        if (f.name.empty()) throw SchemaError("feature with empty name");
        if (!names.insert(f.name).second)
            throw SchemaError("duplicate feature name: " + f.name);
        if (f.is_categorical()) {
            if (f.levels.size() < 2)
                throw SchemaError("feature " + f.name + " needs >=2 levels");
            std::set<std::string> lv(f.levels.begin(), f.levels.end());
            if (lv.size() != f.levels.size())
                throw SchemaError("feature " + f.name + " has duplicate levels");
        } else if (!f.levels.empty()) {
            throw SchemaError("feature " + f.name + " must not declare levels");
        }
    }
}

Schema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open schema file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid schema JSON in " + path + ": " + e.what());
    }
    if (!j.is_array()) throw SchemaError("schema file must contain a JSON array");
    Schema schema;
    for (const auto& item : j) {
        FeatureSpec f;
        f.name = item.at("name").get<std::string>();
        f.kind = feature_kind_from_string(item.at("kind").get<std::string>());
        if (item.contains("levels"))
            f.levels = item.at("levels").get<std::vector<std::string>>();
        schema.push_back(std::move(f));
    }
    validate_schema(schema);
    return schema;
}

int SurvivalDataset::feature_index(const std::string& name) const {
    for (std::size_t j = 0; j < schema.size(); ++j)
        if (schema[j].name == name) return static_cast<int>(j);
    return -1;
}

SurvivalDataset SurvivalDataset::subset(const std::vector<Index>& rows) const {
    SurvivalDataset out;
    out.schema = schema;
    out.columns = columns;
    const Index m = static_cast<Index>(rows.size());
    out.raw.resize(m, raw.cols());
    out.encoded.resize(m, encoded.cols());
    out.time.resize(m);
    out.event.resize(m);
    for (Index i = 0; i < m; ++i) {
        out.raw.row(i) = raw.row(rows[i]);
        out.encoded.row(i) = encoded.row(rows[i]);
        out.time[i] = time[rows[i]];
        out.event[i] = event[rows[i]];
    }
    return out;
}

std::vector<EncodedColumn> encoded_columns(const Schema& schema) {
    std::vector<EncodedColumn> cols;
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto& f = schema[j];
        if (f.kind == FeatureKind::Nominal) {
            for (std::size_t l = 1; l < f.levels.size(); ++l)
                cols.push_back({f.name + "=" + f.levels[l], static_cast<int>(j),
                                static_cast<int>(l)});
        } else {
            cols.push_back({f.name, static_cast<int>(j), -1});
        }
    }
    return cols;
}

Vec encode_row(const Schema& schema, const Vec& raw_row) {
    if (raw_row.size() != static_cast<Index>(schema.size()))
        throw ShapeError("raw row length does not match schema");
    std::vector<double> out;
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto& f = schema[j];
        const double v = raw_row[static_cast<Index>(j)];
        if (f.kind == FeatureKind::Nominal) {
            const int lev = static_cast<int>(std::lround(v));
            if (lev < 0 || lev >= static_cast<int>(f.levels.size()))
                throw ValidationError("level index out of range for feature " + f.name);
            for (std::size_t l = 1; l < f.levels.size(); ++l)
                out.push_back(lev == static_cast<int>(l) ? 1.0 : 0.0);
        } else {
            out.push_back(v);
        }
    }
    return Eigen::Map<Vec>(out.data(), static_cast<Index>(out.size()));
}

SurvivalDataset make_dataset(Schema schema, Mat raw, Vec time, Vec event) {
    validate_schema(schema);
    const Index n = raw.rows();
    if (raw.cols() != static_cast<Index>(schema.size()))
        throw ShapeError("raw matrix width does not match schema");
    if (time.size() != n || event.size() != n)
        throw ShapeError("time/event length does not match row count");
    for (Index i = 0; i < n; ++i) {
        if (!std::isfinite(time[i]) || time[i] <= 0.0)
            throw ValidationError("time must be finite and positive at row " +
                                  std::to_string(i));
        if (event[i] != 0.0 && event[i] != 1.0)
            throw ValidationError("event must be 0 or 1 at row " + std::to_string(i));
        if (!raw.row(i).allFinite())
            throw ValidationError("non-finite feature value at row " + std::to_string(i));
    }
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto& f = schema[j];
        for (Index i = 0; i < n; ++i) {
            const double v = raw(i, static_cast<Index>(j));
            if (f.kind == FeatureKind::Binary && v != 0.0 && v != 1.0)
                throw ValidationError("binary feature " + f.name +
                                      " has value outside {0,1} at row " +
                                      std::to_string(i));
            if (f.is_categorical()) {
                const int lev = static_cast<int>(std::lround(v));
                if (std::abs(v - lev) > 1e-9 || lev < 0 ||
                    lev >= static_cast<int>(f.levels.size()))
                    throw ValidationError("invalid level index for feature " + f.name +
                                          " at row " + std::to_string(i));
            }
        }
    }

    SurvivalDataset ds;
    ds.schema = std::move(schema);
    ds.raw = std::move(raw);
    ds.time = std::move(time);
    ds.event = std::move(event);
    ds.columns = encoded_columns(ds.schema);
    ds.encoded.resize(n, static_cast<Index>(ds.columns.size()));
    for (Index i = 0; i < n; ++i)
        ds.encoded.row(i) = encode_row(ds.schema, ds.raw.row(i).transpose()).transpose();
    return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
        std::size_t b = s.find_first_not_of(' ');
        if (b != std::string::npos && b > 0) s.erase(0, b);
        if (b == std::string::npos) s.clear();
    }
    return out;
}

double parse_double(const std::string& s, const std::string& what, std::size_t row) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("non-numeric " + what + " value '" + s + "' at data row " +
                         std::to_string(row));
    }
}

}  // namespace

SurvivalDataset load_table(const std::string& path, const Schema& schema,
                           const std::string& time_col, const std::string& event_col) {
    validate_schema(schema);
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty CSV file (no header): " + path);
    const auto header = split_csv_line(line);

    auto col_of = [&](const std::string& name) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return static_cast<int>(c);
        throw SchemaError("column not found in CSV header: " + name);
    };
    const int time_idx = col_of(time_col);
    const int event_idx = col_of(event_col);
    std::vector<int> feat_idx;
    for (const auto& f : schema) feat_idx.push_back(col_of(f.name));

    std::vector<std::vector<double>> raw_rows;
    std::vector<double> times, events;
    std::size_t rownum = 0;
    while (std::getline(in, line)) {
        ++rownum;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(rownum) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        const std::string& tcell = cells[time_idx];
        const std::string& ecell = cells[event_idx];
        if (tcell.empty() || ecell.empty())
            throw ValidationError("missing time/event at data row " +
                                  std::to_string(rownum));
        const double t = parse_double(tcell, "time", rownum);
        const double e = parse_double(ecell, "event", rownum);
        if (e != 0.0 && e != 1.0)
            throw ValidationError("event value outside {0,1} at data row " +
                                  std::to_string(rownum));
        std::vector<double> rrow;
        for (std::size_t j = 0; j < schema.size(); ++j) {
            const auto& f = schema[j];
            const std::string& cell = cells[feat_idx[j]];
            if (f.is_categorical()) {
                auto it = std::find(f.levels.begin(), f.levels.end(), cell);
                if (it == f.levels.end())
                    throw ValidationError("unseen category '" + cell +
                                          "' for feature " + f.name);
                rrow.push_back(static_cast<double>(it - f.levels.begin()));
            } else {
                const double v = parse_double(cell, "feature " + f.name, rownum);
                if (f.kind == FeatureKind::Binary && v != 0.0 && v != 1.0)
                    throw ValidationError("binary feature " + f.name +
                                          " has value outside {0,1} at data row " +
                                          std::to_string(rownum));
                rrow.push_back(v);
            }
        }
        raw_rows.push_back(std::move(rrow));
        times.push_back(t);
        events.push_back(e);
    }

    const Index n = static_cast<Index>(raw_rows.size());
    Mat raw(n, static_cast<Index>(schema.size()));
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < raw.cols(); ++j) raw(i, j) = raw_rows[i][j];
    Vec tv = Eigen::Map<Vec>(times.data(), n);
    Vec ev = Eigen::Map<Vec>(events.data(), n);
    if (n == 0) {
        SurvivalDataset ds;
        ds.schema = schema;
        ds.columns = encoded_columns(schema);
        ds.raw.resize(0, static_cast<Index>(schema.size()));
        ds.encoded.resize(0, static_cast<Index>(ds.columns.size()));
        ds.time.resize(0);
        ds.event.resize(0);
        return ds;
    }
    return make_dataset(schema, std::move(raw), std::move(tv), std::move(ev));
}

SplitIndices split(const SurvivalDataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ArgumentError("split fraction must lie in (0,1)");
    const Index n = data.n();
    if (n < 2) throw ArgumentError("need at least 2 rows to split");
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(n)));
    n_train = std::min(n_train, static_cast<std::size_t>(n - 1));
    n_train = std::max(n_train, std::size_t{1});
    SplitIndices out;
    out.seed = seed;
    out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

}  // namespace survrec
