#pragma once

#include "survrec/common.hpp"
#include "survrec/data.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace survrec {

struct ForestConfig {
    int n_trees = 1000;
    int mtry = 0;          // 0 -> floor(sqrt(p))
    int min_leaf = 3;
    int min_split = 6;
    int max_depth = -1;    // -1 -> unlimited
    std::uint64_t seed = 0;
    bool bootstrap = true;   // test hook: false grows every tree on the full sample
    bool compute_oob = false;
};

// |standardized log-rank statistic| comparing the two candidate children.
// in_left flags one row per subject; both sides must be non-empty and the
// pooled data must contain at least one event.
double logrank_split_score(const Vec& time, const Vec& event,
                           const std::vector<bool>& in_left);

struct TreeNode {
    int feature = -1;          // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    // Leaf Nelson-Aalen cumulative hazard steps, ascending in time.
    std::vector<std::pair<double, double>> steps;
    double mortality = 0.0;    // sum of the step function over the event-time grid
};

struct SurvivalTree {
    std::vector<TreeNode> nodes;
    std::vector<Index> bootstrap_rows;
    int leaf_for(const Vec& x) const;
};

struct ForestModel {
    std::vector<SurvivalTree> trees;
    std::vector<double> event_time_grid;  // sorted unique training event times
    ForestConfig config;
    Index n_columns = 0;      // trained encoded layout
    Index n_train = 0;
    std::optional<double> oob_concordance;
};

ForestModel fit_rsf(const SurvivalDataset& train, const ForestConfig& config,
                    int n_workers = 1);

// Ensemble cumulative hazard: mean over trees of the leaf step function at t.
double predict_chf(const ForestModel& model, const Vec& x, double t);

// Mortality: sum of the ensemble cumulative hazard over the event-time grid.
double predict_risk(const ForestModel& model, const Vec& x);

Vec predict_risk(const ForestModel& model, const Mat& rows);

}  // namespace survrec
