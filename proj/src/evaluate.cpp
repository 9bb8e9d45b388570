#include "survrec/evaluate.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace survrec {

double concordance(const Vec& time, const Vec& event, const Vec& risk) {
    const Index n = time.size();
    if (event.size() != n || risk.size() != n)
        throw ShapeError("concordance: length mismatch");
    double conc = 0.0, comp = 0.0;
    for (Index i = 0; i < n; ++i) {
        if (event[i] != 1.0) continue;
        for (Index j = 0; j < n; ++j) {
            if (!(time[i] < time[j])) continue;
            comp += 1.0;
            if (risk[i] > risk[j])
                conc += 1.0;
            else if (risk[i] == risk[j])
                conc += 0.5;
        }
    }
    if (comp == 0.0) throw ArgumentError("concordance: no comparable pairs");
    return conc / comp;
}

namespace {

// Kaplan-Meier survival at the horizon for one bin.
double km_at(const std::vector<std::pair<double, double>>& time_event, double horizon) {
    auto sorted = time_event;
    std::sort(sorted.begin(), sorted.end());
    double at_risk = static_cast<double>(sorted.size());
    double s = 1.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double t = sorted[i].first;
        if (t > horizon) break;
        double d = 0.0, leaving = 0.0;
        while (i < sorted.size() && sorted[i].first == t) {
            leaving += 1.0;
            d += sorted[i].second;
            ++i;
        }
        if (d > 0.0) s *= 1.0 - d / at_risk;
        at_risk -= leaving;
    }
    return s;
}

}  // namespace

std::pair<double, double> calibration_line(const std::vector<CalibrationBin>& bins) {
    double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& b : bins) {
        const auto w = static_cast<double>(b.count);
        sw += w;
        sx += w * b.mean_predicted;
        sy += w * b.observed;
        sxx += w * b.mean_predicted * b.mean_predicted;
        sxy += w * b.mean_predicted * b.observed;
    }
    const double denom = sw * sxx - sx * sx;
    if (sw <= 0.0 || std::abs(denom) < 1e-300)
        throw ArgumentError("calibration_line: degenerate predicted spread");
    const double slope = (sw * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / sw;
    return {slope, intercept};
}

CalibrationResult calibration(const Vec& predicted_prob, const Vec& time,
                              const Vec& event, double horizon, int n_bins) {
    const Index n = predicted_prob.size();
    if (time.size() != n || event.size() != n)
        throw ShapeError("calibration: length mismatch");
    for (Index i = 0; i < n; ++i)
        if (predicted_prob[i] < 0.0 || predicted_prob[i] > 1.0)
            throw ArgumentError("calibration: predictions must lie in [0,1]");
    if (n_bins < 2) throw ArgumentError("calibration: need at least 2 bins");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        return predicted_prob[a] < predicted_prob[b] ||
               (predicted_prob[a] == predicted_prob[b] && a < b);
    });

    CalibrationResult out;
    for (int b = 0; b < n_bins; ++b) {
        const auto lo = static_cast<std::size_t>(
            static_cast<double>(n) * b / n_bins);
        const auto hi = static_cast<std::size_t>(
            static_cast<double>(n) * (b + 1) / n_bins);
        if (hi <= lo) {
            ++out.dropped_bins;
            continue;
        }
        CalibrationBin bin;
        bin.count = static_cast<Index>(hi - lo);
        std::vector<std::pair<double, double>> te;
        double sum_pred = 0.0;
        for (std::size_t k = lo; k < hi; ++k) {
            const Index i = order[k];
            sum_pred += predicted_prob[i];
            te.emplace_back(time[i], event[i]);
        }
        bin.mean_predicted = sum_pred / static_cast<double>(bin.count);
        bin.observed = 1.0 - km_at(te, horizon);
        out.bins.push_back(bin);
    }
    if (out.bins.size() < 2)
        throw ArgumentError("calibration: fewer than 2 usable bins");
    std::tie(out.slope, out.intercept) = calibration_line(out.bins);
    return out;
}

EvaluationReport evaluate_model(const Vec& risk, const Vec& predicted_prob,
                                const Vec& time, const Vec& event, double horizon,
                                const std::string& model_id, int n_resamples,
                                std::uint64_t seed) {
    const Index n = time.size();
    EvaluationReport report;
    report.model_id = model_id;
    report.horizon = horizon;

    auto c_stat = [&](const std::vector<Index>& idx) {
        Vec t(static_cast<Index>(idx.size())), e(static_cast<Index>(idx.size())),
            r(static_cast<Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            t[static_cast<Index>(k)] = time[idx[k]];
            e[static_cast<Index>(k)] = event[idx[k]];
            r[static_cast<Index>(k)] = risk[idx[k]];
        }
        return concordance(t, e, r);
    };
    report.c_index = bootstrap_percentile(n, c_stat, n_resamples, seed);

    const auto cal = calibration(predicted_prob, time, event, horizon);
    report.calibration_slope = cal.slope;
    report.calibration_intercept = cal.intercept;
    report.bin_table = cal.bins;
    return report;
}

ComparisonReport compare(const Vec& baseline_risk, const Vec& augmented_risk,
                         const Vec& time, const Vec& event,
                         const std::string& baseline_id,
                         const std::string& augmented_id, int n_resamples,
                         std::uint64_t seed) {
    const Index n = time.size();
    if (baseline_risk.size() != n || augmented_risk.size() != n)
        throw ShapeError("compare: prediction vectors must align with test rows");

    auto stat_for = [&](const Vec& risk) {
        return [&time, &event, &risk](const std::vector<Index>& idx) {
            Vec t(static_cast<Index>(idx.size())), e(static_cast<Index>(idx.size())),
                r(static_cast<Index>(idx.size()));
            for (std::size_t k = 0; k < idx.size(); ++k) {
                t[static_cast<Index>(k)] = time[idx[k]];
                e[static_cast<Index>(k)] = event[idx[k]];
                r[static_cast<Index>(k)] = risk[idx[k]];
            }
            return concordance(t, e, r);
        };
    };

    ComparisonReport report;
    report.baseline_id = baseline_id;
    report.augmented_id = augmented_id;
    const auto paired = paired_bootstrap_delta(stat_for(baseline_risk),
                                               stat_for(augmented_risk), n,
                                               n_resamples, seed);
    report.delta_c = paired.delta;
    report.p_value = paired.p_value;
    return report;
}

nlohmann::json evaluation_report_to_json(const EvaluationReport& report) {
    nlohmann::json j;
    j["model_id"] = report.model_id;
    j["c_index"] = {{"estimate", report.c_index.estimate},
                    {"lower", report.c_index.lower},
                    {"upper", report.c_index.upper},
                    {"n_resamples", report.c_index.n_resamples},
                    {"dropped", report.c_index.dropped}};
    j["calibration_slope"] = report.calibration_slope;
    j["calibration_intercept"] = report.calibration_intercept;
    j["horizon"] = report.horizon;
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : report.bin_table)
        bins.push_back({{"mean_predicted", b.mean_predicted},
                        {"observed", b.observed},
                        {"count", b.count}});
    j["bin_table"] = std::move(bins);
    return j;
}

nlohmann::json comparison_report_to_json(const ComparisonReport& report) {
    nlohmann::json j;
    j["baseline_id"] = report.baseline_id;
    j["augmented_id"] = report.augmented_id;
    j["delta_c"] = {{"estimate", report.delta_c.estimate},
                    {"lower", report.delta_c.lower},
                    {"upper", report.delta_c.upper},
                    {"n_resamples", report.delta_c.n_resamples},
                    {"dropped", report.delta_c.dropped}};
    j["p_value"] = report.p_value;
    return j;
}

void write_calibration_csv(const std::string& path, const EvaluationReport& report) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write calibration CSV: " + path);
    out << "mean_predicted,observed,count\n";
    out.precision(12);
    for (const auto& b : report.bin_table)
        out << b.mean_predicted << "," << b.observed << "," << b.count << "\n";
}

}  // namespace survrec
