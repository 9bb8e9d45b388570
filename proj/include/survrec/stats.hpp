#pragma once

#include "survrec/common.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace survrec {

struct CorrelationResult {
    double r = 0.0;
    double p_value = 1.0;
    Index n = 0;
};

// Pearson product-moment correlation with two-sided p from the t-transform
// (n-2 degrees of freedom). Throws on constant input.
CorrelationResult pearson(const Vec& x, const Vec& y);

enum class RankSumMode { Exact, NormalApprox, Auto };

struct RankSumResult {
    double u_statistic = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    Index n1 = 0;
    Index n2 = 0;
    bool exact = false;
};

// Mann-Whitney U with midrank ties. Auto mode enumerates exactly when
// n1+n2 <= 12 and the pooled sample is tie-free, otherwise uses the normal
// approximation with tie and continuity corrections.
RankSumResult wilcoxon_rank_sum(const Vec& a, const Vec& b,
                                RankSumMode mode = RankSumMode::Auto);

struct BootstrapCI {
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    int n_resamples = 0;
    std::uint64_t seed = 0;
    int dropped = 0;  // resamples where the statistic was undefined
};

// A statistic over a resampled index multiset. Throws ArgumentError to mark
// the statistic undefined on that resample.
using IndexStatistic = std::function<double(const std::vector<Index>&)>;

// Deterministic resample index set: resample r of a size-n sample under a
// given stream seed. Shared by bootstrap_percentile and paired_bootstrap_delta
// so paired metrics see identical index sets.
std::vector<Index> bootstrap_indices(Index n, std::uint64_t seed, int resample);

BootstrapCI bootstrap_percentile(Index n, const IndexStatistic& statistic, int n_resamples,
                                 std::uint64_t seed);

struct PairedBootstrapResult {
    BootstrapCI delta;  // metric_b - metric_a
    double p_value = 1.0;
};

PairedBootstrapResult paired_bootstrap_delta(const IndexStatistic& metric_a,
                                             const IndexStatistic& metric_b, Index n,
                                             int n_resamples, std::uint64_t seed);

// Normal-approximation CI for a mean: mean +/- 1.96 * sd / sqrt(n).
struct MeanCI {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};
MeanCI normal_mean_ci(const Vec& x, double level = 0.95);

double percentile(std::vector<double> values, double q);  // linear interpolation

}  // namespace survrec
