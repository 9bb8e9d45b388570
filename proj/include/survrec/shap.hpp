#pragma once

#include "survrec/common.hpp"
#include "survrec/data.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace survrec {

// Model output as a function of one RAW feature row (categoricals as level
// indices). Masking happens at source-feature granularity, so encoding is the
// model function's own business.
using ModelFn = std::function<double(const Vec&)>;

enum class ReferenceProvenance { GlobalMean, StratumMean, UserSupplied };

// The "average patient" vector attributions are computed against.
struct ReferencePoint {
    Vec x_tilde;  // raw feature values, one per source feature
    ReferenceProvenance provenance = ReferenceProvenance::GlobalMean;
};

// Feature-wise reference over the given rows: continuous/ordinal/binary mean
// (binary proportions pass through the model as-is), nominal modal level.
ReferencePoint mean_reference(const SurvivalDataset& data,
                              const std::vector<Index>& rows,
                              ReferenceProvenance provenance);

enum class ExplainMode { Exact, Kernel };

struct ExplainerConfig {
    ExplainMode mode = ExplainMode::Exact;
    int exact_threshold = 13;
    int n_coalitions = 0;  // 0 -> 2*M + 2048
    std::uint64_t seed = 0;
    double tolerance = 1e-6;
};

// Model output on the hybrid row: x's values on the coalition, reference
// values elsewhere.
double masked_eval(const ModelFn& model_fn, const Vec& x, const ReferencePoint& reference,
                   const std::vector<int>& coalition);

// Full-enumeration Shapley values; requires M <= exact_threshold.
Vec exact_shapley(const ModelFn& model_fn, const Vec& x, const ReferencePoint& reference,
                  int exact_threshold = 13);

struct KernelShapResult {
    Vec alpha;
    bool ridge_fallback = false;  // WLS system was singular
};

// Kernel SHAP: constrained weighted least squares over coalitions with the
// Shapley kernel weight. Enumerates all coalitions when M <= exact_threshold,
// otherwise samples paired (S, complement) draws under the given seed.
KernelShapResult kernel_shap(const ModelFn& model_fn, const Vec& x,
                             const ReferencePoint& reference,
                             const ExplainerConfig& config);

struct AttributionMatrix {
    std::vector<Index> subject_index;
    Mat alpha;  // n x M
    ReferencePoint reference;
    std::string model_id;
    Vec f_x;
    double f_ref = 0.0;
};

AttributionMatrix explain_cohort(const ModelFn& model_fn, const Mat& raw_rows,
                                 const std::vector<Index>& subject_index,
                                 const ReferencePoint& reference,
                                 const ExplainerConfig& config,
                                 const std::string& model_id = "",
                                 int n_workers = 1);

void write_attributions_csv(const std::string& path, const AttributionMatrix& att,
                            const std::vector<std::string>& feature_names);

}  // namespace survrec
