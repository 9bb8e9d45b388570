#include "survrec/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace survrec {

namespace {

using nlohmann::json;

double median_of(std::vector<double> v) {
    if (v.empty()) throw ArgumentError("median of empty vector");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

SurvivalDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.n < 2) throw ArgumentError("synthetic spec: n must be at least 2");
    if (spec.features.empty()) throw ArgumentError("synthetic spec: no features");
    if (spec.censoring_target < 0.0 || spec.censoring_target > 0.95)
        throw ArgumentError("synthetic spec: censoring target must lie in [0, 0.95]");
    if (spec.baseline_rate <= 0.0)
        throw ArgumentError("synthetic spec: baseline rate must be positive");

    const Index n = spec.n;
    const auto m = static_cast<Index>(spec.features.size());
    Schema schema;
    for (const auto& g : spec.features) {
        FeatureSpec f;
        f.name = g.name;
        f.kind = g.dist == FeatureGenerator::Dist::Bernoulli ? FeatureKind::Binary
                                                             : FeatureKind::Continuous;
        schema.push_back(std::move(f));
    }
    validate_schema(schema);

    std::mt19937_64 rng(derive_seed(seed, "synth"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw_exp = [&](double rate) {
        // inverse-CDF keeps the draw portable across standard libraries
        double u;
        do { u = unit(rng); } while (u <= 0.0);
        return -std::log(u) / rate;
    };

    Mat raw(n, m);
    for (Index j = 0; j < m; ++j) {
        const auto& g = spec.features[static_cast<std::size_t>(j)];
        for (Index i = 0; i < n; ++i) {
            double v = 0.0;
            switch (g.dist) {
                case FeatureGenerator::Dist::Normal: {
                    // Box-Muller, again for portability
                    double u1;
                    do { u1 = unit(rng); } while (u1 <= 0.0);
                    const double u2 = unit(rng);
                    v = g.p1 + g.p2 * std::sqrt(-2.0 * std::log(u1)) *
                                   std::cos(2.0 * M_PI * u2);
                    break;
                }
                case FeatureGenerator::Dist::Uniform:
                    v = g.p1 + (g.p2 - g.p1) * unit(rng);
                    break;
                case FeatureGenerator::Dist::Bernoulli:
                    v = unit(rng) < g.p1 ? 1.0 : 0.0;
                    break;
            }
            raw(i, j) = v;
        }
    }

    auto feature_col = [&](const std::string& name) {
        for (Index j = 0; j < m; ++j)
            if (schema[static_cast<std::size_t>(j)].name == name) return j;
        throw ArgumentError("synthetic spec references unknown feature: " + name);
    };

    Vec lp = Vec::Zero(n);
    for (const auto& [name, coef] : spec.linear)
        lp += coef * raw.col(feature_col(name));
    for (const auto& [name, coef] : spec.quadratic)
        lp += coef * raw.col(feature_col(name)).array().square().matrix();
    for (const auto& [a, b, coef] : spec.interactions)
        lp += coef * raw.col(feature_col(a)).cwiseProduct(raw.col(feature_col(b)));

    Vec rate(n), t_event(n);
    for (Index i = 0; i < n; ++i) {
        rate[i] = spec.baseline_rate * std::exp(lp[i]);
        t_event[i] = draw_exp(rate[i]);
    }

    Vec time(n), event(n);
    if (spec.censoring_target <= 0.0) {
        time = t_event;
        event.setOnes();
    } else {
        // E[censored fraction] = mean_i lambda_c / (lambda_c + rate_i);
        // monotone in lambda_c, so bisect.
        auto expected = [&](double lc) {
            double s = 0.0;
            for (Index i = 0; i < n; ++i) s += lc / (lc + rate[i]);
            return s / static_cast<double>(n);
        };
        double lo = 1e-12, hi = 1.0;
        while (expected(hi) < spec.censoring_target && hi < 1e18) hi *= 2.0;
        if (expected(hi) < spec.censoring_target)
            throw FitError("synthetic censoring calibration failed to reach target");
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (expected(mid) < spec.censoring_target ? lo : hi) = mid;
        }
        const double lc = 0.5 * (lo + hi);
        for (Index i = 0; i < n; ++i) {
            const double c = draw_exp(lc);
            time[i] = std::min(t_event[i], c);
            event[i] = t_event[i] <= c ? 1.0 : 0.0;
        }
    }
    return make_dataset(std::move(schema), std::move(raw), std::move(time),
                        std::move(event));
}

namespace {

FeatureGenerator::Dist dist_from_string(const std::string& s) {
    if (s == "normal") return FeatureGenerator::Dist::Normal;
    if (s == "uniform") return FeatureGenerator::Dist::Uniform;
    if (s == "bernoulli") return FeatureGenerator::Dist::Bernoulli;
    throw ValidationError("unknown synthetic distribution: " + s);
}

std::string dist_to_string(FeatureGenerator::Dist d) {
    switch (d) {
        case FeatureGenerator::Dist::Normal: return "normal";
        case FeatureGenerator::Dist::Uniform: return "uniform";
        case FeatureGenerator::Dist::Bernoulli: return "bernoulli";
    }
    return "normal";
}

SyntheticSpec synthetic_from_json(const json& j) {
    SyntheticSpec spec;
    spec.n = j.at("n").get<Index>();
    for (const auto& f : j.at("features")) {
        FeatureGenerator g;
        g.name = f.at("name").get<std::string>();
        g.dist = dist_from_string(f.value("dist", std::string("normal")));
        const auto params = f.value("params", std::vector<double>{0.0, 1.0});
        g.p1 = params.size() > 0 ? params[0] : 0.0;
        g.p2 = params.size() > 1 ? params[1] : 1.0;
        spec.features.push_back(std::move(g));
    }
    if (j.contains("linear"))
        for (const auto& [k, v] : j.at("linear").items())
            spec.linear[k] = v.get<double>();
    if (j.contains("quadratic"))
        for (const auto& [k, v] : j.at("quadratic").items())
            spec.quadratic[k] = v.get<double>();
    if (j.contains("interactions"))
        for (const auto& e : j.at("interactions"))
            spec.interactions.emplace_back(e.at("a").get<std::string>(),
                                           e.at("b").get<std::string>(),
                                           e.at("coef").get<double>());
    spec.baseline_rate = j.value("baseline_rate", 0.1);
    spec.censoring_target = j.value("censoring_target", 0.0);
    return spec;
}

json synthetic_to_json(const SyntheticSpec& spec) {
    json j;
    j["n"] = spec.n;
    json feats = json::array();
    for (const auto& g : spec.features)
        feats.push_back({{"name", g.name},
                         {"dist", dist_to_string(g.dist)},
                         {"params", std::vector<double>{g.p1, g.p2}}});
    j["features"] = std::move(feats);
    j["linear"] = spec.linear;
    j["quadratic"] = spec.quadratic;
    json inter = json::array();
    for (const auto& [a, b, c] : spec.interactions)
        inter.push_back({{"a", a}, {"b", b}, {"coef", c}});
    j["interactions"] = std::move(inter);
    j["baseline_rate"] = spec.baseline_rate;
    j["censoring_target"] = spec.censoring_target;
    return j;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    c.dataset_path = j.value("dataset", std::string());
    c.schema_path = j.value("schema", std::string());
    c.time_col = j.value("time_col", std::string("time"));
    c.event_col = j.value("event_col", std::string("event"));
    c.split_fraction = j.value("split_fraction", 0.7);
    c.seed = j.value("seed", std::uint64_t{0});
    c.workers = j.value("workers", 1);
    c.out_dir = j.value("out", std::string("out"));
    c.horizon = j.value("horizon", 0.0);
    c.bootstrap_resamples = j.value("bootstrap_resamples", 1000);

    if (j.contains("forest")) {
        const auto& f = j.at("forest");
        c.forest.n_trees = f.value("n_trees", 1000);
        c.forest.mtry = f.value("mtry", 0);
        c.forest.min_leaf = f.value("min_leaf", 3);
        c.forest.min_split = f.value("min_split", 6);
        c.forest.max_depth = f.value("max_depth", -1);
        c.forest.compute_oob = f.value("compute_oob", false);
    }
    if (j.contains("explainer")) {
        const auto& e = j.at("explainer");
        const auto mode = e.value("mode", std::string("exact"));
        if (mode == "exact")
            c.explainer.mode = ExplainMode::Exact;
        else if (mode == "kernel")
            c.explainer.mode = ExplainMode::Kernel;
        else
            throw ValidationError("explainer mode must be exact or kernel");
        c.explainer.exact_threshold = e.value("exact_threshold", 13);
        c.explainer.n_coalitions = e.value("n_coalitions", 0);
        c.explainer.tolerance = e.value("tolerance", 1e-6);
    }
    if (j.contains("recommender")) {
        const auto& r = j.at("recommender");
        c.recommender.cohort_margin_k = r.value("cohort_margin_k", 0.05);
        c.recommender.top_k_stratifiers = r.value("top_k_stratifiers", 10);
        c.recommender.min_stratum_size = r.value("min_stratum_size", Index{30});
        c.recommender.alpha = r.value("alpha", 0.05);
        c.recommender.nonlinear_r_threshold = r.value("nonlinear_r_threshold", 0.1);
        c.recommender.exclusion_sd_fraction = r.value("exclusion_sd_fraction", 0.05);
        c.recommender.bootstrap_exclusion_ci = r.value("bootstrap_exclusion_ci", false);
        c.recommender.bootstrap_resamples = r.value("bootstrap_resamples", 1000);
        c.recommender.bonferroni = r.value("bonferroni", false);
        if (r.contains("pattern_cutoff_override"))
            for (const auto& [k, v] : r.at("pattern_cutoff_override").items())
                c.recommender.pattern_cutoff_override[k] = v.get<double>();
    }
    if (j.contains("cox")) {
        const auto& x = j.at("cox");
        const auto ties = x.value("ties", std::string("efron"));
        if (ties == "efron")
            c.cox.ties = CoxOptions::Ties::Efron;
        else if (ties == "breslow")
            c.cox.ties = CoxOptions::Ties::Breslow;
        else
            throw ValidationError("cox ties must be efron or breslow");
        c.cox.tol_loglik = x.value("tol_loglik", 1e-9);
        c.cox.tol_gradient = x.value("tol_gradient", 1e-6);
        c.cox.max_iter = x.value("max_iter", 100);
        c.cox.ridge = x.value("ridge", 1e-6);
    }
    if (j.contains("synthetic")) c.synthetic = synthetic_from_json(j.at("synthetic"));

    if (c.split_fraction <= 0.0 || c.split_fraction >= 1.0)
        throw ValidationError("split_fraction must lie in (0, 1)");
    if (c.workers < 1) throw ValidationError("workers must be at least 1");
    if (c.bootstrap_resamples < 1)
        throw ValidationError("bootstrap_resamples must be at least 1");
    if (c.dataset_path.empty() && !c.synthetic)
        throw ValidationError("config needs a dataset path or a synthetic block");
    if (!c.dataset_path.empty() && c.schema_path.empty())
        throw ValidationError("a dataset path requires a schema path");
    return c;
}

json pipeline_config_to_json(const PipelineConfig& c) {
    json j;
    j["dataset"] = c.dataset_path;
    j["schema"] = c.schema_path;
    j["time_col"] = c.time_col;
    j["event_col"] = c.event_col;
    j["split_fraction"] = c.split_fraction;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["out"] = c.out_dir;
    j["horizon"] = c.horizon;
    j["bootstrap_resamples"] = c.bootstrap_resamples;
    j["forest"] = {{"n_trees", c.forest.n_trees},
                   {"mtry", c.forest.mtry},
                   {"min_leaf", c.forest.min_leaf},
                   {"min_split", c.forest.min_split},
                   {"max_depth", c.forest.max_depth},
                   {"compute_oob", c.forest.compute_oob}};
    j["explainer"] = {
        {"mode", c.explainer.mode == ExplainMode::Exact ? "exact" : "kernel"},
        {"exact_threshold", c.explainer.exact_threshold},
        {"n_coalitions", c.explainer.n_coalitions},
        {"tolerance", c.explainer.tolerance}};
    j["recommender"] = {{"cohort_margin_k", c.recommender.cohort_margin_k},
                        {"top_k_stratifiers", c.recommender.top_k_stratifiers},
                        {"min_stratum_size", c.recommender.min_stratum_size},
                        {"alpha", c.recommender.alpha},
                        {"nonlinear_r_threshold", c.recommender.nonlinear_r_threshold},
                        {"exclusion_sd_fraction", c.recommender.exclusion_sd_fraction},
                        {"bootstrap_exclusion_ci", c.recommender.bootstrap_exclusion_ci},
                        {"bootstrap_resamples", c.recommender.bootstrap_resamples},
                        {"bonferroni", c.recommender.bonferroni},
                        {"pattern_cutoff_override", c.recommender.pattern_cutoff_override}};
    j["cox"] = {{"ties", c.cox.ties == CoxOptions::Ties::Efron ? "efron" : "breslow"},
                {"tol_loglik", c.cox.tol_loglik},
                {"tol_gradient", c.cox.tol_gradient},
                {"max_iter", c.cox.max_iter},
                {"ridge", c.cox.ridge}};
    if (c.synthetic) j["synthetic"] = synthetic_to_json(*c.synthetic);
    return j;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("config " + path + ": " + e.what());
    }
    try {
        return pipeline_config_from_json(j);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
}

std::uint64_t config_hash(const PipelineConfig& config) {
    json j = pipeline_config_to_json(config);
    j.erase("out");
    j.erase("workers");  // worker count must not change results
    return fnv1a64(j.dump());
}

namespace {

struct StageTimer {
    PipelineReport& report;
    std::string name;
    std::chrono::steady_clock::time_point start;
    StageTimer(PipelineReport& r, std::string n)
        : report(r), name(std::move(n)), start(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        report.timings_s[name] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
    }
};

}  // namespace

PipelineReport run_pipeline(const PipelineConfig& config, Stage stop_after) {
    PipelineReport report;
    report.master_seed = config.seed;
    report.hash = config_hash(config);

    auto fail = [&](const std::string& stage, const std::string& message) {
        report.errors.push_back({stage, message});
    };

    // --- load ---
    SurvivalDataset data;
    try {
        StageTimer t(report, "load");
        if (!config.dataset_path.empty()) {
            const Schema schema = load_schema(config.schema_path);
            data = load_table(config.dataset_path, schema, config.time_col,
                              config.event_col);
        } else {
            data = generate_synthetic(*config.synthetic,
                                      derive_seed(config.seed, "synth"));
        }
        if (data.n() < 10) throw ValidationError("dataset too small to split");
        report.stages_completed.push_back("load");
    } catch (const std::exception& e) {
        fail("load", e.what());
        return report;
    }
    for (const auto& f : data.schema) report.feature_names.push_back(f.name);

    // --- split ---
    SurvivalDataset train, test;
    try {
        StageTimer t(report, "split");
        const auto idx =
            split(data, config.split_fraction, derive_seed(config.seed, "split"));
        train = data.subset(idx.train);
        test = data.subset(idx.test);
        report.stages_completed.push_back("split");
    } catch (const std::exception& e) {
        fail("split", e.what());
        return report;
    }

    const std::uint64_t boot_seed = derive_seed(config.seed, "bootstrap");

    // evaluation helper shared by every Cox variant
    auto eval_cox = [&](const CoxFit& fit, const ModelPlan& plan,
                        const std::string& model_id)
        -> std::pair<EvaluationReport, Vec> {
        const DesignMatrix dtest = build_design(test, plan);
        const Vec lp = linear_predictor(fit, dtest);
        Vec prob(lp.size());
        for (Index i = 0; i < lp.size(); ++i)
            prob[i] = 1.0 - survival_at(fit, lp[i], report.horizon);
        auto rep = evaluate_model(lp, prob, test.time, test.event, report.horizon,
                                  model_id, config.bootstrap_resamples,
                                  derive_seed(boot_seed, model_id));
        return {std::move(rep), lp};
    };

    // --- baseline Cox ---
    Vec baseline_risk;
    try {
        StageTimer t(report, "baseline");
        std::vector<double> event_times;
        for (Index i = 0; i < train.n(); ++i)
            if (train.event[i] == 1.0) event_times.push_back(train.time[i]);
        report.horizon =
            config.horizon > 0.0 ? config.horizon : median_of(event_times);

        const ModelPlan plan = baseline_plan(data.schema);
        const CoxFit fit = fit_cox(build_design(train, plan), train.time,
                                   train.event, config.cox);
        for (const auto& c : fit.monotone_columns)
            report.warnings.push_back("baseline: suspected monotone likelihood in " + c);
        auto [rep, lp] = eval_cox(fit, plan, "baseline_cox");
        report.baseline = std::move(rep);
        baseline_risk = std::move(lp);
        report.baseline_fit = fit;
        report.stages_completed.push_back("baseline");
    } catch (const std::exception& e) {
        fail("baseline", e.what());
        return report;
    }
    if (stop_after == Stage::Baseline) return report;

    // --- exploratory RSF ---
    ForestModel forest;
    Vec train_risk;
    try {
        StageTimer t(report, "explore");
        ForestConfig fc = config.forest;
        fc.seed = derive_seed(config.seed, "forest");
        forest = fit_rsf(train, fc, config.workers);

        const Vec test_risk = predict_risk(forest, test.encoded);
        Vec test_prob(test.n());
        for (Index i = 0; i < test.n(); ++i)
            test_prob[i] = 1.0 - std::exp(-predict_chf(forest, test.encoded.row(i),
                                                       report.horizon));
        try {
            report.exploratory = evaluate_model(
                test_risk, test_prob, test.time, test.event, report.horizon, "rsf",
                config.bootstrap_resamples, derive_seed(boot_seed, "rsf"));
            report.comparisons.push_back(
                compare(baseline_risk, test_risk, test.time, test.event,
                        "baseline_cox", "rsf", config.bootstrap_resamples,
                        derive_seed(boot_seed, "compare/rsf")));
        } catch (const ArgumentError& e) {
            report.warnings.push_back(std::string("rsf evaluation skipped: ") +
                                      e.what());
        }
        train_risk = predict_risk(forest, train.encoded);
        report.stages_completed.push_back("explore");
    } catch (const std::exception& e) {
        fail("explore", e.what());
        return report;
    }

    // --- cohort selection ---
    try {
        StageTimer t(report, "cohorts");
        report.cohorts = select_extreme_cohorts(train_risk, train.event,
                                                config.recommender.cohort_margin_k);
        for (const auto& w : report.cohorts->warnings)
            report.warnings.push_back("cohorts: " + w);
        report.stages_completed.push_back("cohorts");
    } catch (const std::exception& e) {
        fail("cohorts", e.what());
        return report;
    }
    if (stop_after == Stage::Explore) return report;

    if (report.cohorts->low_risk.size() < 3 || report.cohorts->high_risk.size() < 3) {
        report.warnings.push_back(
            "recommendation stage skipped: an extreme cohort has fewer than 3 rows");
        return report;
    }

    // --- attributions ---
    ModelFn model_fn = [&](const Vec& raw_row) {
        return predict_risk(forest, encode_row(train.schema, raw_row));
    };
    ExplainerConfig shap = config.explainer;
    shap.seed = derive_seed(config.seed, "shap");
    try {
        StageTimer t(report, "attribution");
        auto explain_rows = [&](const std::vector<Index>& rows) {
            Mat raw(static_cast<Index>(rows.size()), train.n_features());
            for (std::size_t i = 0; i < rows.size(); ++i)
                raw.row(static_cast<Index>(i)) = train.raw.row(rows[i]);
            const auto ref =
                mean_reference(train, rows, ReferenceProvenance::GlobalMean);
            return explain_cohort(model_fn, raw, rows, ref, shap, "rsf",
                                  config.workers);
        };
        report.att_low = explain_rows(report.cohorts->low_risk);
        report.att_high = explain_rows(report.cohorts->high_risk);
        report.stages_completed.push_back("attribution");
    } catch (const std::exception& e) {
        fail("attribution", e.what());
        return report;
    }

    // --- recommendations ---
    try {
        StageTimer t(report, "recommend");
        auto& recs = report.recommendations;
        recs.exclusions =
            recommend_exclusions(*report.att_low, *report.att_high,
                                 report.feature_names, config.recommender,
                                 &recs.warnings);
        const auto excluded = recs.excluded_features();
        recs.nonlinear = recommend_nonlinear(
            *report.att_low, *report.att_high, train, report.cohorts->low_risk,
            report.cohorts->high_risk, excluded, config.recommender, &recs.warnings);
        auto findings_low =
            detect_patterns(*report.att_low, train, report.cohorts->low_risk,
                            excluded, "low", config.recommender);
        auto findings_high =
            detect_patterns(*report.att_high, train, report.cohorts->high_risk,
                            excluded, "high", config.recommender);
        recs.findings = findings_low;
        recs.findings.insert(recs.findings.end(), findings_high.begin(),
                             findings_high.end());
        const std::map<std::string, std::vector<Index>> cohort_rows{
            {"low", report.cohorts->low_risk}, {"high", report.cohorts->high_risk}};
        const std::map<std::string, const AttributionMatrix*> cohort_atts{
            {"low", &*report.att_low}, {"high", &*report.att_high}};
        recs.interactions = recommend_interactions(
            train, model_fn, recs.findings, cohort_rows, cohort_atts, excluded,
            shap, config.recommender, config.workers, &recs.warnings);
        report.stages_completed.push_back("recommend");
    } catch (const std::exception& e) {
        fail("recommend", e.what());
        return report;
    }
    if (stop_after == Stage::Recommend) return report;

    // --- augmented models: three independent variants plus the cumulative one ---
    try {
        StageTimer t(report, "augment");
        const auto& recs = report.recommendations;
        const ModelPlan base = baseline_plan(data.schema);

        ModelPlan excl_plan = base;
        {
            const auto ex = recs.excluded_features();
            const std::set<std::string> exs(ex.begin(), ex.end());
            excl_plan.included_features.clear();
            for (const auto& f : base.included_features)
                if (!exs.count(f)) excl_plan.included_features.push_back(f);
        }
        ModelPlan nonlin_plan = base;
        nonlin_plan.quadratic_terms = recs.nonlinear_features();
        ModelPlan inter_plan = base;
        inter_plan.interaction_pairs = recs.interaction_pairs();
        const ModelPlan cumulative = compile_plan(data.schema, recs);
        report.cumulative_plan = cumulative;

        struct Variant {
            const char* id;
            const ModelPlan* plan;
            std::optional<EvaluationReport>* slot;
        };
        const Variant variants[] = {
            {"aug_exclusion", &excl_plan, &report.aug_exclusion},
            {"aug_nonlinear", &nonlin_plan, &report.aug_nonlinear},
            {"aug_interaction", &inter_plan, &report.aug_interaction},
            {"aug_cumulative", &cumulative, &report.aug_cumulative},
        };
        for (const auto& v : variants) {
            try {
                const CoxFit fit = fit_cox(build_design(train, *v.plan), train.time,
                                           train.event, config.cox);
                auto [rep, lp] = eval_cox(fit, *v.plan, v.id);
                *v.slot = std::move(rep);
                report.comparisons.push_back(
                    compare(baseline_risk, lp, test.time, test.event,
                            "baseline_cox", v.id, config.bootstrap_resamples,
                            derive_seed(boot_seed, std::string("compare/") + v.id)));
                if (std::string(v.id) == "aug_cumulative") report.cumulative_fit = fit;
            } catch (const std::exception& e) {
                report.warnings.push_back(std::string(v.id) + " skipped: " + e.what());
            }
        }
        report.stages_completed.push_back("augment");
    } catch (const std::exception& e) {
        fail("augment", e.what());
        return report;
    }
    return report;
}

namespace {

json cohorts_to_json(const CohortSelection& c) {
    return {{"n_low", c.low_risk.size()},
            {"n_high", c.high_risk.size()},
            {"margin", c.margin},
            {"mean_nonevent", c.mean_nonevent},
            {"mean_event", c.mean_event},
            {"prediction_sd", c.prediction_sd}};
}

std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace

json pipeline_report_to_json(const PipelineReport& report, bool include_timestamp) {
    json j;
    j["provenance"] = {{"master_seed", report.master_seed},
                       {"config_hash", report.hash},
                       {"stages_completed", report.stages_completed}};
    if (include_timestamp) j["timestamp"] = iso_timestamp();
    j["horizon"] = report.horizon;
    j["feature_names"] = report.feature_names;

    auto put = [&](const char* key, const std::optional<EvaluationReport>& rep) {
        j[key] = rep ? evaluation_report_to_json(*rep) : json(nullptr);
    };
    put("baseline", report.baseline);
    put("exploratory", report.exploratory);
    put("aug_exclusion", report.aug_exclusion);
    put("aug_nonlinear", report.aug_nonlinear);
    put("aug_interaction", report.aug_interaction);
    put("aug_cumulative", report.aug_cumulative);

    json comps = json::array();
    for (const auto& c : report.comparisons)
        comps.push_back(comparison_report_to_json(c));
    j["comparisons"] = std::move(comps);

    j["recommendations"] = recommendations_to_json(report.recommendations);
    j["cohorts"] = report.cohorts ? cohorts_to_json(*report.cohorts) : json(nullptr);
    if (report.baseline_fit) j["baseline_model"] = cox_fit_to_json(*report.baseline_fit);
    if (report.cumulative_fit)
        j["cumulative_model"] = cox_fit_to_json(*report.cumulative_fit);
    j["warnings"] = report.warnings;
    json errs = json::array();
    for (const auto& e : report.errors)
        errs.push_back({{"stage", e.stage}, {"message", e.message}});
    j["errors"] = std::move(errs);
    return j;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write: " + path);
    out << text;
}

std::string summary_text(const PipelineReport& report) {
    std::ostringstream s;
    s.precision(4);
    s << "survrec pipeline summary\n";
    s << "seed " << report.master_seed << "  config hash " << report.hash << "\n";
    s << "horizon " << report.horizon << "\n\n";
    auto line = [&](const char* name, const std::optional<EvaluationReport>& r) {
        if (!r) return;
        s << name << ": C " << r->c_index.estimate << " [" << r->c_index.lower
          << ", " << r->c_index.upper << "]  calibration slope "
          << r->calibration_slope << " intercept " << r->calibration_intercept
          << "\n";
    };
    line("baseline        ", report.baseline);
    line("exploratory rsf ", report.exploratory);
    line("aug exclusion   ", report.aug_exclusion);
    line("aug nonlinear   ", report.aug_nonlinear);
    line("aug interaction ", report.aug_interaction);
    line("aug cumulative  ", report.aug_cumulative);
    s << "\nrecommendations: " << report.recommendations.exclusions.size()
      << " exclusions, " << report.recommendations.nonlinear.size()
      << " nonlinear, " << report.recommendations.interactions.size()
      << " interactions\n";
    for (const auto& e : report.recommendations.exclusions)
        s << "  exclude " << e.feature << "\n";
    for (const auto& e : report.recommendations.nonlinear)
        s << "  nonlinear " << e.feature << "\n";
    for (const auto& e : report.recommendations.interactions)
        s << "  interaction " << e.a << " x " << e.b << " (via " << e.stratifier
          << ", p=" << e.p << ")\n";
    if (!report.warnings.empty()) {
        s << "\nwarnings:\n";
        for (const auto& w : report.warnings) s << "  " << w << "\n";
    }
    if (!report.errors.empty()) {
        s << "\nerrors:\n";
        for (const auto& e : report.errors)
            s << "  [" << e.stage << "] " << e.message << "\n";
    }
    s << "\ntimings (s):\n";
    for (const auto& [k, v] : report.timings_s) s << "  " << k << " " << v << "\n";
    return s.str();
}

}  // namespace

std::vector<std::string> emit_report(const PipelineReport& report,
                                     const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ParseError("cannot create output directory: " + out_dir);

    std::vector<std::string> written;
    auto path = [&](const std::string& name) {
        return (fs::path(out_dir) / name).string();
    };

    {
        const auto p = path("pipeline_report.json");
        write_text(p, pipeline_report_to_json(report).dump(2) + "\n");
        written.push_back(p);
    }
    {
        const auto p = path("recommendations.json");
        write_text(p, recommendations_to_json(report.recommendations).dump(2) + "\n");
        written.push_back(p);
    }
    if (report.att_low) {
        const auto p = path("attributions_low.csv");
        write_attributions_csv(p, *report.att_low, report.feature_names);
        written.push_back(p);
    }
    if (report.att_high) {
        const auto p = path("attributions_high.csv");
        write_attributions_csv(p, *report.att_high, report.feature_names);
        written.push_back(p);
    }
    const std::pair<const char*, const std::optional<EvaluationReport>*> evals[] = {
        {"baseline_cox", &report.baseline},       {"rsf", &report.exploratory},
        {"aug_exclusion", &report.aug_exclusion}, {"aug_nonlinear", &report.aug_nonlinear},
        {"aug_interaction", &report.aug_interaction},
        {"aug_cumulative", &report.aug_cumulative}};
    for (const auto& [name, rep] : evals) {
        if (!*rep) continue;
        const auto p = path(std::string("calibration_") + name + ".csv");
        write_calibration_csv(p, **rep);
        written.push_back(p);
    }
    {
        const auto p = path("summary.txt");
        write_text(p, summary_text(report));
        written.push_back(p);
    }
    return written;
}

}  // namespace survrec
