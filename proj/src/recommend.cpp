#include "survrec/recommend.hpp"

#include "survrec/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace survrec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sample_sd(const Vec& x) {
    if (x.size() < 2) return 0.0;
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() /
                     static_cast<double>(x.size() - 1));
}

}  // namespace

std::string to_string(StratPattern p) {
    switch (p) {
        case StratPattern::A_sign: return "A_sign";
        case StratPattern::B_value: return "B_value";
        case StratPattern::C_cluster: return "C_cluster";
    }
    return "A_sign";
}

CohortSelection select_extreme_cohorts(const Vec& predictions, const Vec& events,
                                       double k) {
    const Index n = predictions.size();
    if (events.size() != n) throw ShapeError("select_extreme_cohorts: length mismatch");
    double n_event = events.sum();
    if (n_event < 1.0 || n_event > static_cast<double>(n) - 1.0)
        throw ArgumentError("select_extreme_cohorts: need both events and non-events");

    CohortSelection out;
    double sum_e = 0.0, sum_ne = 0.0;
    for (Index i = 0; i < n; ++i)
        (events[i] == 1.0 ? sum_e : sum_ne) += predictions[i];
    out.mean_event = sum_e / n_event;
    out.mean_nonevent = sum_ne / (static_cast<double>(n) - n_event);
    out.prediction_sd = sample_sd(predictions);
    out.margin = k * out.prediction_sd;

    for (Index i = 0; i < n; ++i) {
        const double d_low = std::abs(predictions[i] - out.mean_nonevent);
        const double d_high = std::abs(predictions[i] - out.mean_event);
        const bool in_low = d_low < out.margin;
        const bool in_high = d_high < out.margin;
        if (in_low && in_high) {
            (d_low <= d_high ? out.low_risk : out.high_risk).push_back(i);
        } else if (in_low) {
            out.low_risk.push_back(i);
        } else if (in_high) {
            out.high_risk.push_back(i);
        }
    }
    if (out.low_risk.empty())
        out.warnings.push_back("low-risk cohort is empty");
    if (out.high_risk.empty())
        out.warnings.push_back("high-risk cohort is empty");
    return out;
}

namespace {

// Per-cohort exclusion statistics: CI upper bound of mean |alpha| per feature
// and the 5%-of-SD threshold across features.
struct CohortExclusionStats {
    Vec ci_upper;
    double threshold = 0.0;
    bool usable = false;
};

CohortExclusionStats exclusion_stats(const AttributionMatrix& att,
                                     const RecommenderConfig& config,
                                     const std::string& label,
                                     std::vector<std::string>* warnings) {
    CohortExclusionStats out;
    const Index n = att.alpha.rows(), m = att.alpha.cols();
    if (n < 3) {
        if (warnings)
            warnings->push_back("exclusion rule skipped for " + label +
                                " cohort: fewer than 3 rows");
        return out;
    }
    out.ci_upper.resize(m);
    Vec mean_abs(m);
    for (Index j = 0; j < m; ++j) {
        const Vec abs_col = att.alpha.col(j).cwiseAbs();
        mean_abs[j] = abs_col.mean();
        if (config.bootstrap_exclusion_ci) {
            auto stat = [&](const std::vector<Index>& idx) {
                double s = 0.0;
                for (Index i : idx) s += abs_col[i];
                return s / static_cast<double>(idx.size());
            };
            out.ci_upper[j] = bootstrap_percentile(n, stat, config.bootstrap_resamples,
                                                   derive_seed(0, "exclusion-ci"))
                                  .upper;
        } else {
            out.ci_upper[j] = normal_mean_ci(abs_col).upper;
        }
    }
    out.threshold = config.exclusion_sd_fraction * sample_sd(mean_abs);
    if (out.threshold <= 0.0) {
        if (warnings)
            warnings->push_back("exclusion threshold is zero in " + label +
                                " cohort (no attribution spread); no exclusions");
        return out;
    }
    out.usable = true;
    return out;
}

}  // namespace

std::vector<ExclusionEvidence> recommend_exclusions(
    const AttributionMatrix& att_low, const AttributionMatrix& att_high,
    const std::vector<std::string>& feature_names, const RecommenderConfig& config,
    std::vector<std::string>* warnings) {
    const Index m = att_low.alpha.cols();
    if (att_high.alpha.cols() != m ||
        static_cast<Index>(feature_names.size()) != m)
        throw ShapeError("recommend_exclusions: feature set mismatch");

    const auto low = exclusion_stats(att_low, config, "low", warnings);
    const auto high = exclusion_stats(att_high, config, "high", warnings);

    std::vector<ExclusionEvidence> out;
    if (!low.usable || !high.usable) return out;
    for (Index j = 0; j < m; ++j) {
        if (low.ci_upper[j] <= low.threshold && high.ci_upper[j] <= high.threshold) {
            out.push_back({feature_names[static_cast<std::size_t>(j)], low.ci_upper[j],
                           high.ci_upper[j], low.threshold, high.threshold});
        }
    }
    return out;
}

std::vector<NonlinearEvidence> recommend_nonlinear(
    const AttributionMatrix& att_low, const AttributionMatrix& att_high,
    const SurvivalDataset& data, const std::vector<Index>& low_rows,
    const std::vector<Index>& high_rows, const std::vector<std::string>& excluded,
    const RecommenderConfig& config, std::vector<std::string>* warnings) {
    const std::set<std::string> excl(excluded.begin(), excluded.end());
    std::vector<NonlinearEvidence> out;

    auto cohort_corr = [&](const AttributionMatrix& att,
                           const std::vector<Index>& rows, Index j, double* r,
                           double* p) {
        *r = kNaN;
        *p = kNaN;
        if (rows.size() < 3) return;
        Vec x(static_cast<Index>(rows.size())), a(static_cast<Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            x[static_cast<Index>(k)] = data.raw(rows[k], j);
            a[static_cast<Index>(k)] = att.alpha(static_cast<Index>(k), j);
        }
        try {
            const auto res = pearson(x, a);
            *r = res.r;
            *p = res.p_value;
        } catch (const ArgumentError&) {
            if (warnings)
                warnings->push_back("non-linearity check skipped for " +
                                    data.schema[static_cast<std::size_t>(j)].name +
                                    ": degenerate variance");
        }
    };

    for (Index j = 0; j < data.n_features(); ++j) {
        const auto& f = data.schema[static_cast<std::size_t>(j)];
        if (f.kind != FeatureKind::Continuous && f.kind != FeatureKind::Ordinal)
            continue;
        if (excl.count(f.name)) continue;
        NonlinearEvidence ev;
        ev.feature = f.name;
        cohort_corr(att_low, low_rows, j, &ev.r_low, &ev.p_low);
        cohort_corr(att_high, high_rows, j, &ev.r_high, &ev.p_high);
        const bool weak_low =
            std::isfinite(ev.r_low) && std::abs(ev.r_low) < config.nonlinear_r_threshold;
        const bool weak_high = std::isfinite(ev.r_high) &&
                               std::abs(ev.r_high) < config.nonlinear_r_threshold;
        if (weak_low || weak_high) out.push_back(ev);
    }
    return out;
}

namespace {

// Deterministic 1-D two-means clustering; returns (low center, high center,
// boundary) or nullopt when a cluster would undercut the minimum size.
struct TwoMeans {
    double center_low = 0.0, center_high = 0.0, boundary = 0.0;
    Index n_low = 0, n_high = 0;
    double pooled_within_sd = 0.0;
};

std::optional<TwoMeans> two_means_1d(std::vector<double> values, Index min_size) {
    std::sort(values.begin(), values.end());
    const auto n = static_cast<Index>(values.size());
    if (n < 2 * min_size) return std::nullopt;

    // init centers at the lower/upper half means, then Lloyd iterations
    double c1 = 0.0, c2 = 0.0;
    for (Index i = 0; i < n / 2; ++i) c1 += values[static_cast<std::size_t>(i)];
    for (Index i = n / 2; i < n; ++i) c2 += values[static_cast<std::size_t>(i)];
    c1 /= static_cast<double>(n / 2);
    c2 /= static_cast<double>(n - n / 2);

    Index split = n / 2;
    for (int it = 0; it < 100; ++it) {
        const double boundary = 0.5 * (c1 + c2);
        const Index new_split = static_cast<Index>(
            std::upper_bound(values.begin(), values.end(), boundary) - values.begin());
        if (new_split == 0 || new_split == n) break;
        double s1 = 0.0, s2 = 0.0;
        for (Index i = 0; i < new_split; ++i) s1 += values[static_cast<std::size_t>(i)];
        for (Index i = new_split; i < n; ++i) s2 += values[static_cast<std::size_t>(i)];
        const double nc1 = s1 / static_cast<double>(new_split);
        const double nc2 = s2 / static_cast<double>(n - new_split);
        const bool stable = new_split == split && nc1 == c1 && nc2 == c2;
        split = new_split;
        c1 = nc1;
        c2 = nc2;
        if (stable) break;
    }
    if (split < min_size || n - split < min_size) return std::nullopt;

    double ss = 0.0;
    for (Index i = 0; i < split; ++i) {
        const double d = values[static_cast<std::size_t>(i)] - c1;
        ss += d * d;
    }
    for (Index i = split; i < n; ++i) {
        const double d = values[static_cast<std::size_t>(i)] - c2;
        ss += d * d;
    }
    TwoMeans out;
    out.center_low = c1;
    out.center_high = c2;
    out.boundary = 0.5 * (c1 + c2);
    out.n_low = split;
    out.n_high = n - split;
    out.pooled_within_sd =
        n > 2 ? std::sqrt(ss / static_cast<double>(n - 2)) : 0.0;
    return out;
}

}  // namespace

std::vector<StratificationFinding> detect_patterns(
    const AttributionMatrix& att, const SurvivalDataset& data,
    const std::vector<Index>& cohort_rows, const std::vector<std::string>& excluded,
    const std::string& cohort_label, const RecommenderConfig& config) {
    const Index n = att.alpha.rows();
    if (static_cast<Index>(cohort_rows.size()) != n)
        throw ShapeError("detect_patterns: cohort row count mismatch");
    const std::set<std::string> excl(excluded.begin(), excluded.end());

    // rank retained features by mean |alpha|
    std::vector<std::pair<double, Index>> ranked;
    Vec mean_abs(data.n_features());
    for (Index j = 0; j < data.n_features(); ++j) {
        mean_abs[j] = att.alpha.col(j).cwiseAbs().mean();
        if (!excl.count(data.schema[static_cast<std::size_t>(j)].name))
            ranked.emplace_back(mean_abs[j], j);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    if (config.top_k_stratifiers > 0 &&
        static_cast<int>(ranked.size()) > config.top_k_stratifiers)
        ranked.resize(static_cast<std::size_t>(config.top_k_stratifiers));

    const double magnitude_threshold =
        config.exclusion_sd_fraction * sample_sd(mean_abs);

    std::vector<StratificationFinding> findings;
    for (const auto& [score, j] : ranked) {
        const auto& f = data.schema[static_cast<std::size_t>(j)];

        std::vector<double> values, alphas;
        values.reserve(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            values.push_back(data.raw(cohort_rows[static_cast<std::size_t>(i)], j));
            alphas.push_back(att.alpha(i, j));
        }
        std::set<double> distinct(values.begin(), values.end());

        StratificationFinding finding;
        finding.feature = f.name;
        finding.feature_index = static_cast<int>(j);
        finding.cohort = cohort_label;

        if (distinct.size() < 2) continue;

        if (distinct.size() <= 4 && f.kind != FeatureKind::Continuous) {
            // Pattern B: stratify by feature value at the most balanced cut.
            std::vector<double> dv(distinct.begin(), distinct.end());
            Index best_below = 0;
            double best_cut = 0.0;
            Index best_balance = n + 1;
            for (std::size_t k = 0; k + 1 < dv.size(); ++k) {
                const double cut = 0.5 * (dv[k] + dv[k + 1]);
                Index below = 0;
                for (double v : values) below += v <= cut ? 1 : 0;
                const Index balance = std::abs(2 * below - n);
                if (balance < best_balance) {
                    best_balance = balance;
                    best_cut = cut;
                    best_below = below;
                }
            }
            if (best_below >= config.min_stratum_size &&
                n - best_below >= config.min_stratum_size) {
                finding.pattern = StratPattern::B_value;
                finding.cutoff = best_cut;
                finding.n_below = best_below;
                finding.n_above = n - best_below;
                findings.push_back(finding);
            }
            continue;
        }

        // Pattern A: running mean of alpha (sorted by feature value) crosses 0.
        {
            std::vector<std::size_t> order(values.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return values[a] < values[b] || (values[a] == values[b] && a < b);
            });
            const auto window = static_cast<std::size_t>(
                std::max<Index>(25, n / 20));
            std::optional<double> override_cut;
            if (auto it = config.pattern_cutoff_override.find(f.name);
                it != config.pattern_cutoff_override.end())
                override_cut = it->second;

            std::optional<double> cutoff;
            if (override_cut) {
                cutoff = *override_cut;
            } else if (values.size() >= 2 * window) {
                double wsum = 0.0;
                for (std::size_t k = 0; k < window; ++k) wsum += alphas[order[k]];
                double prev_mean = wsum / static_cast<double>(window);
                for (std::size_t k = window; k < order.size(); ++k) {
                    wsum += alphas[order[k]] - alphas[order[k - window]];
                    const double mean = wsum / static_cast<double>(window);
                    if ((prev_mean < 0.0 && mean >= 0.0) ||
                        (prev_mean > 0.0 && mean <= 0.0)) {
                        // window midpoint marks the crossing
                        const std::size_t mid = k - window / 2;
                        cutoff = values[order[mid]];
                        break;
                    }
                    prev_mean = mean;
                }
            }
            if (cutoff) {
                Index below = 0;
                double abs_below = 0.0, abs_above = 0.0;
                for (std::size_t i = 0; i < values.size(); ++i) {
                    if (values[i] <= *cutoff) {
                        ++below;
                        abs_below += std::abs(alphas[i]);
                    } else {
                        abs_above += std::abs(alphas[i]);
                    }
                }
                const Index above = n - below;
                if (below >= config.min_stratum_size &&
                    above >= config.min_stratum_size &&
                    (below == 0 ||
                     abs_below / static_cast<double>(below) >= magnitude_threshold) &&
                    (above == 0 ||
                     abs_above / static_cast<double>(above) >= magnitude_threshold)) {
                    finding.pattern = StratPattern::A_sign;
                    finding.cutoff = *cutoff;
                    finding.n_below = below;
                    finding.n_above = above;
                    findings.push_back(finding);
                    continue;
                }
            }
        }

        // Pattern C: two separated clusters in attribution values.
        if (auto tm = two_means_1d(alphas, config.min_stratum_size)) {
            if (tm->center_high - tm->center_low >= tm->pooled_within_sd &&
                tm->pooled_within_sd > 0.0) {
                finding.pattern = StratPattern::C_cluster;
                finding.cutoff = tm->boundary;
                finding.n_below = tm->n_low;
                finding.n_above = tm->n_high;
                findings.push_back(finding);
            }
        }
    }
    return findings;
}

std::vector<InteractionEvidence> recommend_interactions(
    const SurvivalDataset& data, const ModelFn& model_fn,
    const std::vector<StratificationFinding>& findings,
    const std::map<std::string, std::vector<Index>>& cohort_rows,
    const std::map<std::string, const AttributionMatrix*>& cohort_attributions,
    const std::vector<std::string>& excluded, const ExplainerConfig& explainer,
    const RecommenderConfig& config, int n_workers,
    std::vector<std::string>* warnings) {
    const std::set<std::string> excl(excluded.begin(), excluded.end());

    // first pass counts tests for the optional Bonferroni correction
    std::size_t retained = 0;
    for (const auto& f : data.schema)
        if (!excl.count(f.name)) ++retained;
    const std::size_t tests_per_finding = retained > 0 ? retained - 1 : 0;
    const double alpha_level =
        config.bonferroni && !findings.empty() && tests_per_finding > 0
            ? config.alpha /
                  static_cast<double>(findings.size() * tests_per_finding)
            : config.alpha;

    std::map<std::pair<std::string, std::string>, InteractionEvidence> best;
    for (const auto& finding : findings) {
        const auto& rows = cohort_rows.at(finding.cohort);
        const auto* att = cohort_attributions.at(finding.cohort);
        const Index j = finding.feature_index;

        std::vector<Index> s1_rows, s2_rows;
        std::vector<Index> s1_pos, s2_pos;  // positions within the cohort
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double key =
                finding.pattern == StratPattern::C_cluster
                    ? att->alpha(static_cast<Index>(i), j)
                    : data.raw(rows[i], j);
            if (key <= finding.cutoff) {
                s1_rows.push_back(rows[i]);
                s1_pos.push_back(static_cast<Index>(i));
            } else {
                s2_rows.push_back(rows[i]);
                s2_pos.push_back(static_cast<Index>(i));
            }
        }
        if (static_cast<Index>(s1_rows.size()) < config.min_stratum_size ||
            static_cast<Index>(s2_rows.size()) < config.min_stratum_size) {
            if (warnings)
                warnings->push_back("stratification on " + finding.feature + " (" +
                                    finding.cohort + " cohort) skipped: stratum too small");
            continue;
        }

        auto explain_stratum = [&](const std::vector<Index>& srows) {
            const auto ref =
                mean_reference(data, srows, ReferenceProvenance::StratumMean);
            Mat raw(static_cast<Index>(srows.size()), data.n_features());
            for (std::size_t i = 0; i < srows.size(); ++i)
                raw.row(static_cast<Index>(i)) = data.raw.row(srows[i]);
            return explain_cohort(model_fn, raw, srows, ref, explainer,
                                  att->model_id + "/stratum", n_workers);
        };
        const auto att1 = explain_stratum(s1_rows);
        const auto att2 = explain_stratum(s2_rows);

        for (Index k = 0; k < data.n_features(); ++k) {
            if (k == j) continue;
            const auto& other = data.schema[static_cast<std::size_t>(k)];
            if (excl.count(other.name)) continue;
            const auto res =
                wilcoxon_rank_sum(att1.alpha.col(k), att2.alpha.col(k));
            if (res.p_value < alpha_level) {
                InteractionEvidence ev;
                ev.a = std::min(finding.feature, other.name);
                ev.b = std::max(finding.feature, other.name);
                ev.stratifier = finding.feature;
                ev.pattern = finding.pattern;
                ev.p = res.p_value;
                ev.cohort = finding.cohort;
                const auto key = std::make_pair(ev.a, ev.b);
                auto it = best.find(key);
                if (it == best.end() || ev.p < it->second.p) best[key] = ev;
            }
        }
    }

    std::vector<InteractionEvidence> out;
    for (auto& [key, ev] : best) out.push_back(std::move(ev));
    return out;
}

std::vector<std::string> RecommendationSet::excluded_features() const {
    std::vector<std::string> out;
    for (const auto& e : exclusions) out.push_back(e.feature);
    return out;
}

std::vector<std::string> RecommendationSet::nonlinear_features() const {
    std::vector<std::string> out;
    for (const auto& e : nonlinear) out.push_back(e.feature);
    return out;
}

std::vector<std::pair<std::string, std::string>>
RecommendationSet::interaction_pairs() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : interactions) out.emplace_back(e.a, e.b);
    return out;
}

ModelPlan compile_plan(const Schema& schema, const RecommendationSet& recs) {
    const auto excluded = recs.excluded_features();
    const std::set<std::string> excl(excluded.begin(), excluded.end());
    ModelPlan plan;
    for (const auto& f : schema)
        if (!excl.count(f.name)) plan.included_features.push_back(f.name);
    std::sort(plan.included_features.begin(), plan.included_features.end());
    plan.quadratic_terms = recs.nonlinear_features();
    plan.interaction_pairs = recs.interaction_pairs();
    return plan;
}

namespace {

nlohmann::json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

nlohmann::json recommendations_to_json(const RecommendationSet& recs) {
    nlohmann::json j;
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& e : recs.exclusions)
        ex.push_back({{"feature", e.feature},
                      {"ci_upper_low", e.ci_upper_low},
                      {"ci_upper_high", e.ci_upper_high},
                      {"threshold", std::min(e.threshold_low, e.threshold_high)}});
    j["exclusions"] = std::move(ex);

    nlohmann::json nl = nlohmann::json::array();
    for (const auto& e : recs.nonlinear)
        nl.push_back({{"feature", e.feature},
                      {"r_low", finite_or_null(e.r_low)},
                      {"p_low", finite_or_null(e.p_low)},
                      {"r_high", finite_or_null(e.r_high)},
                      {"p_high", finite_or_null(e.p_high)}});
    j["nonlinear"] = std::move(nl);

    nlohmann::json in = nlohmann::json::array();
    for (const auto& e : recs.interactions)
        in.push_back({{"a", e.a},
                      {"b", e.b},
                      {"stratifier", e.stratifier},
                      {"pattern", to_string(e.pattern)},
                      {"p", e.p},
                      {"cohort", e.cohort}});
    j["interactions"] = std::move(in);
    j["warnings"] = recs.warnings;
    return j;
}

}  // namespace survrec
