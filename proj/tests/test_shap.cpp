#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "survrec/shap.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace survrec;

namespace {

Vec vec(std::initializer_list<double> v) {
    Vec out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

ReferencePoint ref_at(std::initializer_list<double> v) {
    ReferencePoint r;
    r.x_tilde = vec(v);
    return r;
}

}  // namespace

TEST_CASE("masked_eval substitutes reference values outside the coalition") {
    auto fn = [](const Vec& x) { return 100.0 * x[0] + 10.0 * x[1] + x[2]; };
    const Vec x = vec({1, 2, 3});
    const auto ref = ref_at({7, 8, 9});
    CHECK(masked_eval(fn, x, ref, {}) == doctest::Approx(789.0));
    CHECK(masked_eval(fn, x, ref, {0, 1, 2}) == doctest::Approx(123.0));
    CHECK(masked_eval(fn, x, ref, {0, 2}) == doctest::Approx(183.0));
    CHECK_THROWS_AS(masked_eval(fn, x, ref, {3}), ArgumentError);
    CHECK_THROWS_AS(masked_eval(fn, vec({1.0}), ref, {}), ShapeError);
}

TEST_CASE("exact Shapley of an additive model is the per-feature difference") {
    auto fn = [](const Vec& x) {
        return 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2] + 4.0;
    };
    const Vec x = vec({1.0, -2.0, 6.0});
    const auto ref = ref_at({0.5, 0.5, 0.5});
    const Vec alpha = exact_shapley(fn, x, ref);
    REQUIRE(alpha.size() == 3);
    CHECK(alpha[0] == doctest::Approx(2.0 * (1.0 - 0.5)).epsilon(1e-10));
    CHECK(alpha[1] == doctest::Approx(-3.0 * (-2.0 - 0.5)).epsilon(1e-10));
    CHECK(alpha[2] == doctest::Approx(0.5 * (6.0 - 0.5)).epsilon(1e-10));
}

TEST_CASE("exact Shapley splits a pure product interaction symmetrically") {
    auto fn = [](const Vec& x) { return x[0] * x[1]; };
    const Vec x = vec({2.0, 3.0});
    const auto ref = ref_at({0.0, 0.0});
    const Vec alpha = exact_shapley(fn, x, ref);
    // both orderings contribute the whole product to the second mover
    CHECK(alpha[0] == doctest::Approx(3.0));
    CHECK(alpha[1] == doctest::Approx(3.0));
}

TEST_CASE("completeness holds for a random nonlinear model") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    const int M = 6;
    Mat w(M, M);
    for (Index i = 0; i < M; ++i)
        for (Index j = 0; j < M; ++j) w(i, j) = nd(rng);
    auto fn = [&](const Vec& x) {
        return (x.transpose() * w * x)(0) + std::sin(x[0]) * x[3];
    };
    for (int rep = 0; rep < 5; ++rep) {
        Vec x(M), r(M);
        for (int j = 0; j < M; ++j) {
            x[j] = nd(rng);
            r[j] = nd(rng);
        }
        ReferencePoint ref;
        ref.x_tilde = r;
        const Vec alpha = exact_shapley(fn, x, ref);
        CHECK(alpha.sum() == doctest::Approx(fn(x) - fn(r)).epsilon(1e-10));
    }
}

TEST_CASE("kernel SHAP with full enumeration matches exact Shapley") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    const int M = 5;
    auto fn = [](const Vec& x) {
        return x[0] * x[1] - 2.0 * x[2] + x[3] * x[3] + 0.3 * x[4] * x[0];
    };
    for (int rep = 0; rep < 5; ++rep) {
        Vec x(M), r(M);
        for (int j = 0; j < M; ++j) {
            x[j] = nd(rng);
            r[j] = nd(rng);
        }
        ReferencePoint ref;
        ref.x_tilde = r;
        ExplainerConfig cfg;
        cfg.mode = ExplainMode::Kernel;
        cfg.exact_threshold = 8;  // M below threshold -> enumerate
        const auto ks = kernel_shap(fn, x, ref, cfg);
        const Vec ex = exact_shapley(fn, x, ref);
        REQUIRE(ks.alpha.size() == ex.size());
        for (Index j = 0; j < M; ++j)
            CHECK(ks.alpha[j] == doctest::Approx(ex[j]).epsilon(1e-6));
    }
}

TEST_CASE("sampled kernel SHAP keeps completeness and approximates exact") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> nd;
    const int M = 9;
    Vec w(M);
    for (int j = 0; j < M; ++j) w[j] = nd(rng);
    auto fn = [&](const Vec& x) { return w.dot(x) + 0.5 * x[0] * x[1]; };
    Vec x(M), r(M);
    for (int j = 0; j < M; ++j) {
        x[j] = nd(rng);
        r[j] = nd(rng);
    }
    ReferencePoint ref;
    ref.x_tilde = r;
    ExplainerConfig cfg;
    cfg.mode = ExplainMode::Kernel;
    cfg.exact_threshold = 4;  // force sampling
    cfg.n_coalitions = 800;
    cfg.seed = 3;
    const auto ks = kernel_shap(fn, x, ref, cfg);
    CHECK(ks.alpha.sum() == doctest::Approx(fn(x) - fn(r)).epsilon(1e-8));
    const Vec ex = exact_shapley(fn, x, ref);
    for (Index j = 0; j < M; ++j)
        CHECK(ks.alpha[j] == doctest::Approx(ex[j]).epsilon(0.15));

    // deterministic under the same seed
    const auto ks2 = kernel_shap(fn, x, ref, cfg);
    CHECK(ks.alpha == ks2.alpha);
}

TEST_CASE("mean_reference averages numeric features and takes the nominal mode") {
    Schema s{{"x", FeatureKind::Continuous, {}},
             {"g", FeatureKind::Nominal, {"A", "B", "C"}},
             {"o", FeatureKind::Ordinal, {"I", "II", "III"}}};
    Mat raw(5, 3);
    raw << 1, 0, 0,
           2, 1, 1,
           3, 1, 2,
           4, 1, 2,
           5, 2, 2;
    Vec time(5), event(5);
    time << 1, 2, 3, 4, 5;
    event << 1, 0, 1, 0, 1;
    const auto data = make_dataset(s, raw, time, event);
    const auto ref = mean_reference(data, {0, 1, 2, 3, 4},
                                    ReferenceProvenance::GlobalMean);
    CHECK(ref.x_tilde[0] == doctest::Approx(3.0));
    CHECK(ref.x_tilde[1] == doctest::Approx(1.0));  // modal level B
    CHECK(ref.x_tilde[2] == doctest::Approx(1.4));  // ordinal mean index
    CHECK(ref.provenance == ReferenceProvenance::GlobalMean);

    // subset restriction changes the statistics
    const auto sub = mean_reference(data, {0, 1}, ReferenceProvenance::StratumMean);
    CHECK(sub.x_tilde[0] == doctest::Approx(1.5));
    CHECK(sub.provenance == ReferenceProvenance::StratumMean);
}

TEST_CASE("explain_cohort fills the attribution matrix consistently") {
    auto fn = [](const Vec& x) { return x[0] * x[0] + 2.0 * x[1]; };
    Mat rows(3, 2);
    rows << 1, 2,
            3, 4,
            -1, 0;
    ReferencePoint ref;
    ref.x_tilde = vec({0.0, 1.0});
    ExplainerConfig cfg;
    const auto att = explain_cohort(fn, rows, {10, 20, 30}, ref, cfg, "m");
    REQUIRE(att.alpha.rows() == 3);
    REQUIRE(att.alpha.cols() == 2);
    CHECK(att.model_id == "m");
    CHECK(att.subject_index == std::vector<Index>{10, 20, 30});
    CHECK(att.f_ref == doctest::Approx(2.0));
    for (Index i = 0; i < 3; ++i) {
        const Vec x = rows.row(i).transpose();
        CHECK(att.f_x[i] == doctest::Approx(fn(x)));
        CHECK(att.alpha.row(i).sum() ==
              doctest::Approx(fn(x) - 2.0).epsilon(1e-10));
    }

    // worker count does not change the result
    const auto att4 = explain_cohort(fn, rows, {10, 20, 30}, ref, cfg, "m", 4);
    CHECK(att.alpha == att4.alpha);
}

TEST_CASE("features equal to the reference get exactly zero attribution") {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> nd;
    const int M = 10;
    Vec w(M);
    for (int j = 0; j < M; ++j) w[j] = nd(rng);
    auto fn = [&](const Vec& x) { return w.dot(x) + x[2] * x[5]; };
    Vec x(M), r(M);
    for (int j = 0; j < M; ++j) {
        r[j] = nd(rng);
        x[j] = r[j];  // start identical, then perturb a few features
    }
    x[2] += 1.0;
    x[5] -= 2.0;
    x[7] += 0.5;
    ReferencePoint ref;
    ref.x_tilde = r;
    ExplainerConfig cfg;
    cfg.mode = ExplainMode::Kernel;
    cfg.exact_threshold = 4;  // the full problem would need sampling
    cfg.n_coalitions = 400;
    cfg.seed = 11;
    const auto ks = kernel_shap(fn, x, ref, cfg);
    const Vec ex = exact_shapley(fn, x, ref);
    for (int j = 0; j < M; ++j) {
        if (j == 2 || j == 5 || j == 7) {
            // the active set is small enough to enumerate, so it is exact
            CHECK(ks.alpha[j] == doctest::Approx(ex[j]).epsilon(1e-8));
        } else {
            CHECK(ks.alpha[j] == 0.0);
        }
    }
    CHECK(ks.alpha.sum() == doctest::Approx(fn(x) - fn(r)).epsilon(1e-8));
}

TEST_CASE("exact enumeration refuses an oversized feature set") {
    auto fn = [](const Vec& x) { return x.sum(); };
    Vec x = Vec::Ones(15);
    ReferencePoint ref;
    ref.x_tilde = Vec::Zero(15);
    CHECK_THROWS_AS(exact_shapley(fn, x, ref, 13), ArgumentError);
}
