#pragma once

#include "survrec/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace survrec {

enum class FeatureKind { Continuous, Binary, Ordinal, Nominal };

std::string to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& s);

// Typed description of one source feature. Nominal/ordinal carry an ordered
// level list; the first nominal level is the dropped one-hot reference.
struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Continuous;
    std::vector<std::string> levels;

    bool is_categorical() const {
        return kind == FeatureKind::Ordinal || kind == FeatureKind::Nominal;
    }
};

using Schema = std::vector<FeatureSpec>;

void validate_schema(const Schema& schema);

// Loads a schema sidecar: a JSON array of {name, kind, levels}.
Schema load_schema(const std::string& path);

// One column of the encoded matrix, tagged with its source feature.
struct EncodedColumn {
    std::string label;     // feature name, or "name=level" for one-hot
    int feature = -1;      // index into schema
    int level = -1;        // one-hot level index; -1 otherwise
};

// The universal data carrier: raw per-feature values (categoricals as level
// indices), the encoded matrix, and the survival outcome.
struct SurvivalDataset {
    Schema schema;
    Mat raw;        // n x M, column j = schema[j]
    Mat encoded;    // n x p
    std::vector<EncodedColumn> columns;
    Vec time;
    Vec event;      // 0/1

    Index n() const { return raw.rows(); }
    Index n_features() const { return static_cast<Index>(schema.size()); }
    Index n_encoded() const { return encoded.cols(); }

    int feature_index(const std::string& name) const;  // -1 if absent
    SurvivalDataset subset(const std::vector<Index>& rows) const;
};

// Encodes one raw row (categoricals as level indices; fractional values are
// allowed for binary columns, used by attribution reference points).
Vec encode_row(const Schema& schema, const Vec& raw_row);

// Column descriptors matching encode_row's layout.
std::vector<EncodedColumn> encoded_columns(const Schema& schema);

// Builds a dataset from raw numeric columns (level indices for categoricals).
SurvivalDataset make_dataset(Schema schema, Mat raw, Vec time, Vec event);

// Reads a header-bearing CSV. Raw cell text for nominal/ordinal features is
// matched against the declared levels; binary columns must be 0/1.
SurvivalDataset load_table(const std::string& path, const Schema& schema,
                           const std::string& time_col, const std::string& event_col);

struct SplitIndices {
    std::vector<Index> train;
    std::vector<Index> test;
    std::uint64_t seed = 0;
};

// Uniform random partition; |train| = floor(fraction * n).
SplitIndices split(const SurvivalDataset& data, double fraction, std::uint64_t seed);

}  // namespace survrec
