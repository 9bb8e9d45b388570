#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "survrec/cox.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace survrec;

namespace {

SurvivalDataset random_dataset(std::mt19937_64& rng, Index n, int q) {
    Schema s;
    for (int j = 0; j < q; ++j)
        s.push_back({"x" + std::to_string(j), FeatureKind::Continuous, {}});
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ut(0.5, 10.0);
    std::bernoulli_distribution be(0.7);
    Mat raw(n, q);
    Vec time(n), event(n);
    for (Index i = 0; i < n; ++i) {
        for (int j = 0; j < q; ++j) raw(i, j) = nd(rng);
        // integer-ish times so ties occur
        time[i] = std::ceil(ut(rng));
        event[i] = be(rng) ? 1.0 : 0.0;
    }
    // guarantee at least two events
    event[0] = 1.0;
    event[n - 1] = 1.0;
    return make_dataset(s, raw, time, event);
}

}  // namespace

TEST_CASE("analytic score matches central finite differences, both tie methods") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 10; ++rep) {
        const Index n = 10 + static_cast<Index>(rng() % 21);
        const int q = 1 + static_cast<int>(rng() % 4);
        const auto data = random_dataset(rng, n, q);
        const auto design = build_design(data, baseline_plan(data.schema));

        // standardized columns, as cox_loglik expects
        Mat z = design.values;
        for (Index c = 0; c < z.cols(); ++c)
            z.col(c) = (z.col(c).array() - design.col_mean[c]) / design.col_sd[c];

        Vec beta(q);
        for (int j = 0; j < q; ++j) beta[j] = 0.5 * nd(rng);

        for (auto ties : {CoxOptions::Ties::Efron, CoxOptions::Ties::Breslow}) {
            Vec grad;
            cox_loglik(z, data.time, data.event, beta, ties, 0.0, &grad);
            const double h = 1e-5;
            for (int j = 0; j < q; ++j) {
                Vec bp = beta, bm = beta;
                bp[j] += h;
                bm[j] -= h;
                const double fp = cox_loglik(z, data.time, data.event, bp, ties, 0.0);
                const double fm = cox_loglik(z, data.time, data.event, bm, ties, 0.0);
                const double fd = (fp - fm) / (2.0 * h);
                CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("fit is invariant to translating or rescaling a raw covariate") {
    std::mt19937_64 rng(19);
    const auto data = random_dataset(rng, 40, 2);
    const auto d1 = build_design(data, baseline_plan(data.schema));
    const auto f1 = fit_cox(d1, data.time, data.event);
    REQUIRE(f1.converged);

    // shift x0 by 100 and scale x1 by 7: standardized-unit coefficients and
    // linear predictors must be unchanged
    Mat raw2 = data.raw;
    raw2.col(0).array() += 100.0;
    raw2.col(1) *= 7.0;
    const auto data2 = make_dataset(data.schema, raw2, data.time, data.event);
    const auto d2 = build_design(data2, baseline_plan(data2.schema));
    const auto f2 = fit_cox(d2, data2.time, data2.event);
    REQUIRE(f2.converged);

    REQUIRE(f1.beta.size() == f2.beta.size());
    for (Index j = 0; j < f1.beta.size(); ++j)
        CHECK(f1.beta[j] == doctest::Approx(f2.beta[j]).epsilon(1e-8));

    const Vec lp1 = linear_predictor(f1, d1);
    const Vec lp2 = linear_predictor(f2, d2);
    for (Index i = 0; i < lp1.size(); ++i)
        CHECK(lp1[i] == doctest::Approx(lp2[i]).epsilon(1e-8));
}

TEST_CASE("4-subject fit matches a grid-search oracle") {
    // subjects: times 1,2,3,4 all events, covariate x = 0,1,0,1
    Schema s{{"x", FeatureKind::Continuous, {}}};
    Mat raw(4, 1);
    raw << 0, 1, 0, 1;
    Vec time(4), event(4);
    time << 1, 2, 3, 4;
    event << 1, 1, 1, 1;
    const auto data = make_dataset(s, raw, time, event);
    const auto design = build_design(data, baseline_plan(s));

    CoxOptions opt;
    opt.ridge = 0.0;
    const auto fit = fit_cox(design, time, event, opt);
    REQUIRE(fit.converged);
    REQUIRE(fit.beta.size() == 1);

    Mat z = design.values;
    z.col(0) = (z.col(0).array() - design.col_mean[0]) / design.col_sd[0];
    double best_b = 0.0, best_ll = -1e300;
    for (double b = -5.0; b <= 5.0; b += 1e-4) {
        Vec beta(1);
        beta << b;
        const double ll =
            cox_loglik(z, time, event, beta, CoxOptions::Ties::Efron, 0.0);
        if (ll > best_ll) {
            best_ll = ll;
            best_b = b;
        }
    }
    CHECK(fit.beta[0] == doctest::Approx(best_b).epsilon(1e-4));
}

TEST_CASE("build_design lays out base, quadratic, interaction blocks in order") {
    Schema s{{"z", FeatureKind::Continuous, {}},
             {"g", FeatureKind::Nominal, {"A", "B", "C"}},
             {"a", FeatureKind::Continuous, {}}};
    Mat raw(3, 3);
    raw << 1, 0, 4,
           2, 1, 5,
           3, 2, 6;
    Vec time(3), event(3);
    time << 1, 2, 3;
    event << 1, 0, 1;
    const auto data = make_dataset(s, raw, time, event);

    ModelPlan plan;
    plan.included_features = {"z", "a", "g"};
    plan.quadratic_terms = {"z", "a"};
    plan.interaction_pairs = {{"z", "a"}};
    const auto d = build_design(data, plan);

    // base block alphabetical by feature (a, g=B, g=C, z), then quadratics
    // (a^2, z^2), then the product column
    REQUIRE(d.terms.size() == 7);
    CHECK(d.terms[0].label == "a");
    CHECK(d.terms[1].label == "g=B");
    CHECK(d.terms[2].label == "g=C");
    CHECK(d.terms[3].label == "z");
    CHECK(d.terms[4].label == "a^2");
    CHECK(d.terms[4].kind == TermKind::Quadratic);
    CHECK(d.terms[5].label == "z^2");
    CHECK(d.terms[6].label == "a:z");
    CHECK(d.terms[6].kind == TermKind::Interaction);

    // products are taken on unstandardized values
    CHECK(d.values(1, 6) == doctest::Approx(5.0 * 2.0));
    CHECK(d.values(2, 4) == doctest::Approx(36.0));

    CHECK_THROWS_AS(
        build_design(data, ModelPlan{{"nope"}, {}, {}}), ArgumentError);
    CHECK_THROWS_AS(
        build_design(data, ModelPlan{{"z"}, {"g"}, {}}), ArgumentError);
    CHECK_THROWS_AS(
        (build_design(data, ModelPlan{{"z"}, {}, {{"z", "z"}}})), ArgumentError);
}

TEST_CASE("survival_at is a right-continuous step function of the baseline") {
    std::mt19937_64 rng(99);
    const auto data = random_dataset(rng, 60, 2);
    const auto design = build_design(data, baseline_plan(data.schema));
    const auto fit = fit_cox(design, data.time, data.event);
    REQUIRE(fit.converged);
    REQUIRE(!fit.baseline.empty());

    const double t0 = fit.baseline.front().first;
    bool ex = false;
    CHECK(survival_at(fit, 0.0, t0 / 2.0, &ex) == doctest::Approx(1.0));
    CHECK(!ex);

    // monotone non-increasing over a time sweep
    double prev = 1.0;
    for (double t = 0.0; t <= fit.baseline.back().first + 1.0; t += 0.25) {
        const double sv = survival_at(fit, 0.3, t);
        CHECK(sv <= prev + 1e-12);
        CHECK(sv >= 0.0);
        CHECK(sv <= 1.0);
        prev = sv;
    }

    // beyond the last step: flagged as extrapolation
    survival_at(fit, 0.0, fit.baseline.back().first + 5.0, &ex);
    CHECK(ex);

    // higher risk means lower survival at a fixed time
    const double tm = fit.baseline[fit.baseline.size() / 2].first;
    CHECK(survival_at(fit, 1.0, tm) < survival_at(fit, -1.0, tm));
}

TEST_CASE("constant columns are dropped and reported") {
    Schema s{{"c", FeatureKind::Continuous, {}}, {"x", FeatureKind::Continuous, {}}};
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    Mat raw(30, 2);
    Vec time(30), event(30);
    for (Index i = 0; i < 30; ++i) {
        raw(i, 0) = 3.0;  // no variance
        raw(i, 1) = nd(rng);
        time[i] = static_cast<double>(i + 1);
        event[i] = (i % 3 != 0) ? 1.0 : 0.0;
    }
    const auto data = make_dataset(s, raw, time, event);
    const auto fit = fit_cox(build_design(data, baseline_plan(s)), time, event);
    REQUIRE(fit.dropped_columns.size() == 1);
    CHECK(fit.dropped_columns[0] == "c");
    CHECK(fit.terms.size() == 1);
    CHECK(fit.terms[0].label == "x");
}

TEST_CASE("perfectly separated covariate is flagged as monotone likelihood") {
    Schema s{{"x", FeatureKind::Continuous, {}}};
    Mat raw(8, 1);
    Vec time(8), event(8);
    for (Index i = 0; i < 8; ++i) {
        // all events; earlier failures have strictly larger x -> monotone
        raw(i, 0) = 8.0 - static_cast<double>(i);
        time[i] = static_cast<double>(i + 1);
        event[i] = 1.0;
    }
    const auto data = make_dataset(s, raw, time, event);
    const auto fit = fit_cox(build_design(data, baseline_plan(s)), time, event);
    CHECK(!fit.monotone_columns.empty());
}

TEST_CASE("efron and breslow agree exactly when no event times are tied") {
    Schema s{{"x", FeatureKind::Continuous, {}}};
    std::mt19937_64 rng(31);
    std::normal_distribution<double> nd;
    Mat raw(25, 1);
    Vec time(25), event(25);
    for (Index i = 0; i < 25; ++i) {
        raw(i, 0) = nd(rng);
        time[i] = static_cast<double>(i + 1);  // distinct times
        event[i] = (i % 2 == 0) ? 1.0 : 0.0;
    }
    const auto data = make_dataset(s, raw, time, event);
    const auto design = build_design(data, baseline_plan(s));
    CoxOptions efron, breslow;
    breslow.ties = CoxOptions::Ties::Breslow;
    const auto fe = fit_cox(design, time, event, efron);
    const auto fb = fit_cox(design, time, event, breslow);
    REQUIRE(fe.converged);
    REQUIRE(fb.converged);
    CHECK(fe.beta[0] == doctest::Approx(fb.beta[0]).epsilon(1e-8));
}
