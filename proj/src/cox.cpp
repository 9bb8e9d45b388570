#include "survrec/cox.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace survrec {

ModelPlan baseline_plan(const Schema& schema) {
    ModelPlan plan;
    for (const auto& f : schema) plan.included_features.push_back(f.name);
    std::sort(plan.included_features.begin(), plan.included_features.end());
    return plan;
}

namespace {

std::vector<Index> feature_encoded_cols(const SurvivalDataset& data, int feature) {
    std::vector<Index> cols;
    for (Index c = 0; c < static_cast<Index>(data.columns.size()); ++c)
        if (data.columns[static_cast<std::size_t>(c)].feature == feature)
            cols.push_back(c);
    return cols;
}

}  // namespace

DesignMatrix build_design(const SurvivalDataset& data, const ModelPlan& plan) {
    auto require_feature = [&](const std::string& name) {
        const int j = data.feature_index(name);
        if (j < 0) throw ArgumentError("plan references unknown feature: " + name);
        return j;
    };

    std::vector<std::string> included = plan.included_features;
    std::sort(included.begin(), included.end());
    included.erase(std::unique(included.begin(), included.end()), included.end());

    std::vector<std::string> quadratics = plan.quadratic_terms;
    std::sort(quadratics.begin(), quadratics.end());
    quadratics.erase(std::unique(quadratics.begin(), quadratics.end()),
                     quadratics.end());

    std::vector<std::pair<std::string, std::string>> pairs;
    for (auto [a, b] : plan.interaction_pairs) {
        if (a == b) throw ArgumentError("interaction pair with identical members: " + a);
        if (b < a) std::swap(a, b);
        pairs.emplace_back(a, b);
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

    const Index n = data.n();
    std::vector<Term> terms;
    std::vector<Vec> cols;

    for (const auto& name : included) {
        const int j = require_feature(name);
        for (Index c : feature_encoded_cols(data, j)) {
            terms.push_back({TermKind::Base, {name},
                             data.columns[static_cast<std::size_t>(c)].label});
            cols.push_back(data.encoded.col(c));
        }
    }
    for (const auto& name : quadratics) {
        const int j = require_feature(name);
        const auto kind = data.schema[static_cast<std::size_t>(j)].kind;
        if (kind != FeatureKind::Continuous && kind != FeatureKind::Ordinal)
            throw ArgumentError("quadratic term on non-numeric feature: " + name);
        terms.push_back({TermKind::Quadratic, {name}, name + "^2"});
        cols.push_back(data.raw.col(j).array().square());
    }
    for (const auto& [a, b] : pairs) {
        const int ja = require_feature(a);
        const int jb = require_feature(b);
        for (Index ca : feature_encoded_cols(data, ja)) {
            for (Index cb : feature_encoded_cols(data, jb)) {
                const auto& la = data.columns[static_cast<std::size_t>(ca)].label;
                const auto& lb = data.columns[static_cast<std::size_t>(cb)].label;
                terms.push_back({TermKind::Interaction, {a, b}, la + ":" + lb});
                cols.push_back(data.encoded.col(ca).cwiseProduct(data.encoded.col(cb)));
            }
        }
    }

    DesignMatrix design;
    design.terms = std::move(terms);
    const Index q = static_cast<Index>(cols.size());
    design.values.resize(n, q);
    for (Index c = 0; c < q; ++c) design.values.col(c) = cols[static_cast<std::size_t>(c)];
    design.col_mean.resize(q);
    design.col_sd.resize(q);
    for (Index c = 0; c < q; ++c) {
        const double m = n > 0 ? design.values.col(c).mean() : 0.0;
        design.col_mean[c] = m;
        design.col_sd[c] =
            n > 1 ? std::sqrt((design.values.col(c).array() - m).square().sum() /
                              static_cast<double>(n - 1))
                  : 0.0;
    }
    return design;
}

namespace {

struct TieGroup {
    double time;
    std::vector<Index> at_risk_entering;  // rows with this exact time
    std::vector<Index> deaths;
};

// Rows grouped by distinct time, descending, so the risk set accumulates.
std::vector<TieGroup> tie_groups(const Vec& time, const Vec& event) {
    const Index n = time.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return time[a] > time[b]; });
    std::vector<TieGroup> groups;
    std::size_t i = 0;
    while (i < order.size()) {
        TieGroup g;
        g.time = time[order[i]];
        std::size_t j = i;
        while (j < order.size() && time[order[j]] == g.time) {
            g.at_risk_entering.push_back(order[j]);
            if (event[order[j]] == 1.0) g.deaths.push_back(order[j]);
            ++j;
        }
        groups.push_back(std::move(g));
        i = j;
    }
    return groups;
}

}  // namespace

double cox_loglik(const Mat& z, const Vec& time, const Vec& event, const Vec& beta,
                  CoxOptions::Ties ties, double ridge, Vec* gradient,
                  Mat* information) {
    const Index n = z.rows(), q = z.cols();
    Vec eta = z * beta;
    const double shift = eta.size() > 0 ? eta.mean() : 0.0;
    eta.array() -= shift;  // partial likelihood is invariant to a common shift
    const Vec w = eta.array().exp();

    double ll = 0.0;
    Vec grad = Vec::Zero(q);
    Mat info = Mat::Zero(q, q);
    const bool want_grad = gradient != nullptr;
    const bool want_info = information != nullptr;

    double s0 = 0.0;
    Vec s1 = Vec::Zero(q);
    Mat s2 = Mat::Zero(q, q);

    for (const auto& g : tie_groups(time, event)) {
        for (Index i : g.at_risk_entering) {
            s0 += w[i];
            if (want_grad || want_info) s1 += w[i] * z.row(i).transpose();
            if (want_info) s2 += w[i] * z.row(i).transpose() * z.row(i);
        }
        const auto d = static_cast<Index>(g.deaths.size());
        if (d == 0) continue;

        double s0d = 0.0;
        Vec s1d = Vec::Zero(q);
        Mat s2d = Mat::Zero(q, q);
        for (Index i : g.deaths) {
            ll += eta[i];
            if (want_grad || want_info) grad += z.row(i).transpose();
            if (ties == CoxOptions::Ties::Efron) {
                s0d += w[i];
                if (want_grad || want_info) s1d += w[i] * z.row(i).transpose();
                if (want_info) s2d += w[i] * z.row(i).transpose() * z.row(i);
            }
        }
        for (Index k = 0; k < d; ++k) {
            const double frac = ties == CoxOptions::Ties::Efron
                                    ? static_cast<double>(k) / static_cast<double>(d)
                                    : 0.0;
            const double denom = s0 - frac * s0d;
            ll -= std::log(denom);
            if (want_grad || want_info) {
                const Vec mu = (s1 - frac * s1d) / denom;
                grad -= mu;
                if (want_info) info += (s2 - frac * s2d) / denom - mu * mu.transpose();
            }
        }
    }

    ll -= 0.5 * ridge * beta.squaredNorm();
    if (want_grad) {
        grad -= ridge * beta;
        *gradient = grad;
    }
    if (want_info) {
        info += ridge * Mat::Identity(q, q);
        *information = info;
    }
    (void)n;
    return ll;
}

CoxFit fit_cox(const DesignMatrix& design, const Vec& time, const Vec& event,
               const CoxOptions& options) {
    const Index n = design.values.rows();
    if (time.size() != n || event.size() != n)
        throw ShapeError("fit_cox: time/event length does not match design rows");
    if (event.sum() < 1.0) throw FitError("fit_cox: no observed events");

    CoxFit fit;
    fit.ridge = options.ridge;
    fit.ties = options.ties;

    // Drop constant columns, then near-duplicate (collinear) columns.
    std::vector<Index> kept;
    std::vector<Vec> zcols;
    for (Index c = 0; c < design.values.cols(); ++c) {
        const auto& label = design.terms[static_cast<std::size_t>(c)].label;
        if (design.col_sd[c] < 1e-12) {
            fit.dropped_columns.push_back(label);
            continue;
        }
        Vec zc = (design.values.col(c).array() - design.col_mean[c]) / design.col_sd[c];
        bool duplicate = false;
        for (const auto& prev : zcols) {
            const double corr = prev.dot(zc) / static_cast<double>(n - 1);
            if (std::abs(corr) > 1.0 - 1e-10) {
                duplicate = true;
                break;
            }
        }
        if (duplicate) {
            fit.dropped_columns.push_back(label);
            continue;
        }
        kept.push_back(c);
        zcols.push_back(std::move(zc));
    }
    const Index q = static_cast<Index>(kept.size());
    if (q < 1) throw FitError("fit_cox: no usable columns after dropping constants");

    Mat z(n, q);
    fit.col_mean.resize(q);
    fit.col_sd.resize(q);
    for (Index c = 0; c < q; ++c) {
        z.col(c) = zcols[static_cast<std::size_t>(c)];
        fit.terms.push_back(design.terms[static_cast<std::size_t>(kept[c])]);
        fit.col_mean[c] = design.col_mean[kept[c]];
        fit.col_sd[c] = design.col_sd[kept[c]];
    }

    Vec beta = Vec::Zero(q);
    Vec grad(q);
    Mat info(q, q);
    double ll = cox_loglik(z, time, event, beta, options.ties, options.ridge, &grad,
                           &info);
    bool converged = false;
    int iter = 0;
    for (; iter < options.max_iter; ++iter) {
        Eigen::LDLT<Mat> ldlt(info);
        Vec step = ldlt.solve(grad);
        if (!step.allFinite()) throw FitError("fit_cox: singular information matrix");

        double new_ll = 0.0;
        Vec cand;
        double scale = 1.0;
        for (int h = 0; h < 40; ++h) {
            cand = beta + scale * step;
            new_ll = cox_loglik(z, time, event, cand, options.ties, options.ridge,
                                nullptr, nullptr);
            if (std::isfinite(new_ll) && new_ll >= ll) break;
            scale *= 0.5;
        }
        if (!(std::isfinite(new_ll) && new_ll >= ll)) break;  // no admissible step

        const double rel_change =
            std::abs(new_ll - ll) / std::max(1.0, std::abs(new_ll));
        beta = cand;
        ll = cox_loglik(z, time, event, beta, options.ties, options.ridge, &grad,
                        &info);
        if (rel_change <= options.tol_loglik &&
            grad.lpNorm<Eigen::Infinity>() <= options.tol_gradient) {
            converged = true;
            ++iter;
            break;
        }
    }

    for (Index c = 0; c < q; ++c)
        if (std::abs(beta[c]) > 20.0 && grad[c] * beta[c] > 0.0)
            fit.monotone_columns.push_back(fit.terms[static_cast<std::size_t>(c)].label);

    fit.beta = beta;
    fit.log_partial_likelihood = ll;
    fit.iterations = iter;
    fit.converged = converged && fit.monotone_columns.empty();

    Eigen::LDLT<Mat> ldlt(info);
    Mat cov = ldlt.solve(Mat::Identity(q, q));
    fit.se.resize(q);
    for (Index c = 0; c < q; ++c)
        fit.se[c] = cov(c, c) > 0.0 ? std::sqrt(cov(c, c)) : 0.0;

    // Breslow baseline cumulative hazard at beta.
    Vec eta = z * beta;
    const Vec w = eta.array().exp();
    double s0 = 0.0;
    std::vector<std::pair<double, double>> increments;
    for (const auto& g : tie_groups(time, event)) {
        for (Index i : g.at_risk_entering) s0 += w[i];
        if (!g.deaths.empty())
            increments.emplace_back(g.time, static_cast<double>(g.deaths.size()) / s0);
    }
    std::reverse(increments.begin(), increments.end());  // ascending time
    double h0 = 0.0;
    for (auto [t, inc] : increments) {
        h0 += inc;
        fit.baseline.emplace_back(t, h0);
    }
    return fit;
}

Vec linear_predictor(const CoxFit& fit, const DesignMatrix& design) {
    std::vector<std::string> missing;
    std::vector<Index> cols;
    for (const auto& term : fit.terms) {
        Index found = -1;
        for (Index c = 0; c < static_cast<Index>(design.terms.size()); ++c)
            if (design.terms[static_cast<std::size_t>(c)].label == term.label) {
                found = c;
                break;
            }
        if (found < 0)
            missing.push_back(term.label);
        else
            cols.push_back(found);
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "linear_predictor: design is missing fit columns:";
        for (const auto& m : missing) msg << " " << m;
        throw ShapeError(msg.str());
    }
    const Index n = design.values.rows();
    Vec lp = Vec::Zero(n);
    for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto c = static_cast<Index>(j);
        lp += fit.beta[c] *
              ((design.values.col(cols[j]).array() - fit.col_mean[c]) / fit.col_sd[c])
                  .matrix();
    }
    return lp;
}

double survival_at(const CoxFit& fit, double lp, double t, bool* extrapolated) {
    if (t < 0.0) throw ArgumentError("survival_at: t must be >= 0");
    if (extrapolated) *extrapolated = false;
    double h0 = 0.0;
    if (!fit.baseline.empty()) {
        auto it = std::upper_bound(
            fit.baseline.begin(), fit.baseline.end(), t,
            [](double v, const std::pair<double, double>& s) { return v < s.first; });
        if (it != fit.baseline.begin()) h0 = std::prev(it)->second;
        if (t > fit.baseline.back().first && extrapolated) *extrapolated = true;
    }
    const double s = std::exp(-h0 * std::exp(lp));
    return std::clamp(s, 0.0, 1.0);
}

nlohmann::json cox_fit_to_json(const CoxFit& fit) {
    nlohmann::json j;
    nlohmann::json terms = nlohmann::json::array();
    for (std::size_t c = 0; c < fit.terms.size(); ++c) {
        const auto& t = fit.terms[c];
        terms.push_back({{"label", t.label},
                         {"kind", t.kind == TermKind::Base        ? "base"
                                  : t.kind == TermKind::Quadratic ? "quadratic"
                                                                  : "interaction"},
                         {"sources", t.sources},
                         {"beta", fit.beta[static_cast<Index>(c)]},
                         {"se", fit.se[static_cast<Index>(c)]},
                         {"mean", fit.col_mean[static_cast<Index>(c)]},
                         {"sd", fit.col_sd[static_cast<Index>(c)]}});
    }
    j["terms"] = std::move(terms);
    j["log_partial_likelihood"] = fit.log_partial_likelihood;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    j["dropped_columns"] = fit.dropped_columns;
    j["monotone_columns"] = fit.monotone_columns;
    j["ridge"] = fit.ridge;
    j["ties"] = fit.ties == CoxOptions::Ties::Efron ? "efron" : "breslow";
    nlohmann::json base = nlohmann::json::array();
    for (auto [t, h] : fit.baseline) base.push_back({{"time", t}, {"hazard", h}});
    j["baseline"] = std::move(base);
    return j;
}

}  // namespace survrec
