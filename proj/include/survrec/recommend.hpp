#pragma once

#include "survrec/common.hpp"
#include "survrec/cox.hpp"
#include "survrec/data.hpp"
#include "survrec/shap.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace survrec {

struct RecommenderConfig {
    double cohort_margin_k = 0.05;     // margin factor on the prediction SD
    int top_k_stratifiers = 10;        // 0 -> scan all retained features
    Index min_stratum_size = 30;
    double alpha = 0.05;
    double nonlinear_r_threshold = 0.1;
    double exclusion_sd_fraction = 0.05;
    bool bootstrap_exclusion_ci = false;  // else normal-approximation CI
    int bootstrap_resamples = 1000;
    bool bonferroni = false;
    std::map<std::string, double> pattern_cutoff_override;  // pin pattern-A cutoffs
};

struct CohortSelection {
    std::vector<Index> low_risk;
    std::vector<Index> high_risk;
    double margin = 0.0;
    double mean_nonevent = 0.0;
    double mean_event = 0.0;
    double prediction_sd = 0.0;
    std::vector<std::string> warnings;
};

// Rows whose prediction lies within margin = k * SD of the mean non-event
// (low risk) or mean event (high risk) prediction. A row qualifying for both
// goes to the cohort with the nearer mean.
CohortSelection select_extreme_cohorts(const Vec& predictions, const Vec& events,
                                       double k = 0.05);

struct ExclusionEvidence {
    std::string feature;
    double ci_upper_low = 0.0;
    double ci_upper_high = 0.0;
    double threshold_low = 0.0;
    double threshold_high = 0.0;
};

struct NonlinearEvidence {
    std::string feature;
    // NaN marks a cohort where the correlation was undefined or skipped.
    double r_low = 0.0, p_low = 1.0;
    double r_high = 0.0, p_high = 1.0;
};

enum class StratPattern { A_sign, B_value, C_cluster };
std::string to_string(StratPattern p);

struct StratificationFinding {
    std::string feature;
    int feature_index = -1;
    StratPattern pattern = StratPattern::A_sign;
    double cutoff = 0.0;       // on feature values (A/B) or attribution values (C)
    std::string cohort;        // "low" or "high"
    Index n_below = 0, n_above = 0;
};

struct InteractionEvidence {
    std::string a, b;          // unordered, a < b
    std::string stratifier;
    StratPattern pattern = StratPattern::A_sign;
    double p = 1.0;
    std::string cohort;
};

struct RecommendationSet {
    std::vector<ExclusionEvidence> exclusions;
    std::vector<NonlinearEvidence> nonlinear;
    std::vector<InteractionEvidence> interactions;
    std::vector<StratificationFinding> findings;
    std::vector<std::string> warnings;

    std::vector<std::string> excluded_features() const;
    std::vector<std::string> nonlinear_features() const;
    std::vector<std::pair<std::string, std::string>> interaction_pairs() const;
};

// Exclusion rule: a feature is excluded iff the upper bound of the 95% CI of
// its mean absolute attribution stays at or below 5% of the SD (across
// features) of those means, in BOTH cohorts.
std::vector<ExclusionEvidence> recommend_exclusions(
    const AttributionMatrix& att_low, const AttributionMatrix& att_high,
    const std::vector<std::string>& feature_names, const RecommenderConfig& config,
    std::vector<std::string>* warnings = nullptr);

// Weak |r| between feature values and attributions in EITHER cohort flags a
// retained continuous/ordinal feature as non-linear.
std::vector<NonlinearEvidence> recommend_nonlinear(
    const AttributionMatrix& att_low, const AttributionMatrix& att_high,
    const SurvivalDataset& data, const std::vector<Index>& low_rows,
    const std::vector<Index>& high_rows, const std::vector<std::string>& excluded,
    const RecommenderConfig& config, std::vector<std::string>* warnings = nullptr);

// Scans the top-K features by mean |attribution| for the three stratification
// patterns (sign crossing, value split, attribution clusters).
std::vector<StratificationFinding> detect_patterns(const AttributionMatrix& att,
                                                   const SurvivalDataset& data,
                                                   const std::vector<Index>& cohort_rows,
                                                   const std::vector<std::string>& excluded,
                                                   const std::string& cohort_label,
                                                   const RecommenderConfig& config);

// Re-explains each stratum against its own reference and tests every other
// retained feature's attribution distribution across the strata.
std::vector<InteractionEvidence> recommend_interactions(
    const SurvivalDataset& data, const ModelFn& model_fn,
    const std::vector<StratificationFinding>& findings,
    const std::map<std::string, std::vector<Index>>& cohort_rows,
    const std::map<std::string, const AttributionMatrix*>& cohort_attributions,
    const std::vector<std::string>& excluded, const ExplainerConfig& explainer,
    const RecommenderConfig& config, int n_workers = 1,
    std::vector<std::string>* warnings = nullptr);

// Exclusions first, then quadratics, then interaction pairs; pairs touching
// excluded features keep only the product term.
ModelPlan compile_plan(const Schema& schema, const RecommendationSet& recs);

nlohmann::json recommendations_to_json(const RecommendationSet& recs);

}  // namespace survrec
