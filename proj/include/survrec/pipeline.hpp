#pragma once

#include "survrec/common.hpp"
#include "survrec/cox.hpp"
#include "survrec/data.hpp"
#include "survrec/evaluate.hpp"
#include "survrec/forest.hpp"
#include "survrec/recommend.hpp"
#include "survrec/shap.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace survrec {

// How a synthetic covariate is drawn.
struct FeatureGenerator {
    std::string name;
    enum class Dist { Normal, Uniform, Bernoulli } dist = Dist::Normal;
    double p1 = 0.0, p2 = 1.0;  // (mean, sd), (lo, hi), or (p, unused)
};

struct SyntheticSpec {
    Index n = 0;
    std::vector<FeatureGenerator> features;
    std::map<std::string, double> linear;
    std::map<std::string, double> quadratic;
    std::vector<std::tuple<std::string, std::string, double>> interactions;
    double baseline_rate = 0.1;
    double censoring_target = 0.0;  // expected censored fraction, in [0, 0.95]
};

// Covariates per the generators; event times exponential with rate
// baseline_rate * exp(true log-hazard); independent exponential censoring
// calibrated to the target rate by bisection.
SurvivalDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct PipelineConfig {
    std::string dataset_path;
    std::string schema_path;
    std::string time_col = "time";
    std::string event_col = "event";
    double split_fraction = 0.7;
    std::uint64_t seed = 0;
    int workers = 1;
    std::string out_dir = "out";
    double horizon = 0.0;  // <= 0 -> median training event time
    int bootstrap_resamples = 1000;
    ForestConfig forest;
    ExplainerConfig explainer;
    RecommenderConfig recommender;
    CoxOptions cox;
    std::optional<SyntheticSpec> synthetic;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json pipeline_config_to_json(const PipelineConfig& config);
PipelineConfig load_pipeline_config(const std::string& path);

// FNV-1a over the canonical (out-dir-independent) config dump.
std::uint64_t config_hash(const PipelineConfig& config);

enum class Stage { Baseline, Explore, Recommend, Augment, Full };

struct StageError {
    std::string stage;
    std::string message;
};

struct PipelineReport {
    std::optional<EvaluationReport> baseline;
    std::optional<EvaluationReport> exploratory;
    std::optional<EvaluationReport> aug_exclusion;
    std::optional<EvaluationReport> aug_nonlinear;
    std::optional<EvaluationReport> aug_interaction;
    std::optional<EvaluationReport> aug_cumulative;
    std::vector<ComparisonReport> comparisons;  // each augmented model vs baseline
    RecommendationSet recommendations;
    std::optional<CohortSelection> cohorts;
    std::optional<AttributionMatrix> att_low, att_high;
    std::vector<std::string> feature_names;

    std::optional<CoxFit> baseline_fit;
    std::optional<CoxFit> cumulative_fit;
    ModelPlan cumulative_plan;

    double horizon = 0.0;
    std::uint64_t master_seed = 0;
    std::uint64_t hash = 0;
    std::map<std::string, double> timings_s;
    std::vector<std::string> stages_completed;
    std::vector<std::string> warnings;
    std::vector<StageError> errors;
};

// Orchestrates load -> split -> baseline Cox -> RSF -> cohorts -> attributions
// -> recommendations -> four augmented fits -> evaluations and comparisons.
// Stage failures are recorded and truncate the run instead of throwing.
PipelineReport run_pipeline(const PipelineConfig& config, Stage stop_after = Stage::Full);

nlohmann::json pipeline_report_to_json(const PipelineReport& report,
                                       bool include_timestamp = true);

// Writes pipeline_report.json, recommendations.json, attributions_{low,high}.csv,
// calibration_<model>.csv per evaluated model, and summary.txt.
std::vector<std::string> emit_report(const PipelineReport& report,
                                     const std::string& out_dir);

}  // namespace survrec
