#pragma once

#include "survrec/common.hpp"
#include "survrec/stats.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace survrec {

// Harrell's C over comparable pairs; risk ties earn half credit.
double concordance(const Vec& time, const Vec& event, const Vec& risk);

struct CalibrationBin {
    double mean_predicted = 0.0;
    double observed = 0.0;  // 1 - KM(t*) within the bin
    Index count = 0;
};

struct CalibrationResult {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<CalibrationBin> bins;
    int dropped_bins = 0;  // bins with nobody at risk before the horizon
};

// Deciles of predicted event probability; per-bin observed risk from a
// within-bin Kaplan-Meier at the horizon; (intercept, slope) by count-weighted
// least squares of observed on predicted.
CalibrationResult calibration(const Vec& predicted_prob, const Vec& time,
                              const Vec& event, double horizon, int n_bins = 10);

// Slope/intercept of count-weighted OLS over an explicit bin table.
std::pair<double, double> calibration_line(const std::vector<CalibrationBin>& bins);

struct EvaluationReport {
    BootstrapCI c_index;
    double calibration_slope = 0.0;
    double calibration_intercept = 0.0;
    double horizon = 0.0;
    std::vector<CalibrationBin> bin_table;
    std::string model_id;
};

// C-index with a percentile CI over test-set resamples (the model is not
// refit); calibration on the full test set.
EvaluationReport evaluate_model(const Vec& risk, const Vec& predicted_prob,
                                const Vec& time, const Vec& event, double horizon,
                                const std::string& model_id, int n_resamples,
                                std::uint64_t seed);

struct ComparisonReport {
    BootstrapCI delta_c;
    double p_value = 1.0;
    std::string baseline_id;
    std::string augmented_id;
};

ComparisonReport compare(const Vec& baseline_risk, const Vec& augmented_risk,
                         const Vec& time, const Vec& event,
                         const std::string& baseline_id, const std::string& augmented_id,
                         int n_resamples, std::uint64_t seed);

nlohmann::json evaluation_report_to_json(const EvaluationReport& report);
nlohmann::json comparison_report_to_json(const ComparisonReport& report);
void write_calibration_csv(const std::string& path, const EvaluationReport& report);

}  // namespace survrec
