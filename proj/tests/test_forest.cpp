#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "survrec/forest.hpp"

#include <random>
#include <vector>

using namespace survrec;

namespace {

// one continuous covariate that cleanly separates fast from slow failures
SurvivalDataset two_group_dataset(Index n_per_group, std::uint64_t seed) {
    Schema s{{"x", FeatureKind::Continuous, {}}};
    const Index n = 2 * n_per_group;
    Mat raw(n, 1);
    Vec time(n), event(n);
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> fast(1.0), slow(0.1);
    std::bernoulli_distribution cens(0.2);
    for (Index i = 0; i < n; ++i) {
        const bool high = i < n_per_group;
        raw(i, 0) = high ? 2.0 + static_cast<double>(i % 5) * 0.1
                         : -2.0 - static_cast<double>(i % 5) * 0.1;
        time[i] = 0.01 + (high ? fast(rng) : slow(rng));
        event[i] = cens(rng) ? 0.0 : 1.0;
    }
    return make_dataset(s, raw, time, event);
}

}  // namespace

TEST_CASE("logrank_split_score matches a hand-computed oracle") {
    // left: (1,+),(3,+),(5,-)  right: (2,+),(4,-),(6,+)
    Vec time(6), event(6);
    time << 1, 3, 5, 2, 4, 6;
    event << 1, 1, 0, 1, 0, 1;
    const std::vector<bool> in_left{true, true, true, false, false, false};
    // O=2, E=1.4, V=0.74 -> |O-E|/sqrt(V)
    CHECK(logrank_split_score(time, event, in_left) ==
          doctest::Approx(0.6974858324629158).epsilon(1e-10));
}

TEST_CASE("logrank_split_score rejects degenerate splits") {
    Vec time(3), event(3);
    time << 1, 2, 3;
    event << 1, 1, 0;
    CHECK_THROWS_AS(logrank_split_score(time, event, {true, true, true}),
                    ArgumentError);
    Vec no_event(3);
    no_event << 0, 0, 0;
    CHECK_THROWS_AS(logrank_split_score(time, no_event, {true, false, true}),
                    ArgumentError);
}

TEST_CASE("forest separates a high-risk from a low-risk group") {
    const auto data = two_group_dataset(40, 3);
    ForestConfig cfg;
    cfg.n_trees = 60;
    cfg.min_leaf = 5;
    cfg.min_split = 10;
    cfg.seed = 11;
    const auto model = fit_rsf(data, cfg);

    Vec hi(1), lo(1);
    hi << 2.2;
    lo << -2.2;
    CHECK(predict_risk(model, hi) > predict_risk(model, lo));

    // ensemble cumulative hazard is non-decreasing in t
    double prev = 0.0;
    for (double t = 0.0; t < 10.0; t += 0.5) {
        const double h = predict_chf(model, hi, t);
        CHECK(h >= prev - 1e-12);
        prev = h;
    }
    // mortality equals the CHF summed over the event-time grid
    double acc = 0.0;
    for (double t : model.event_time_grid) acc += predict_chf(model, hi, t);
    CHECK(predict_risk(model, hi) == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("matrix prediction agrees with row-by-row prediction") {
    const auto data = two_group_dataset(25, 5);
    ForestConfig cfg;
    cfg.n_trees = 30;
    cfg.seed = 2;
    const auto model = fit_rsf(data, cfg);
    const Vec batch = predict_risk(model, data.encoded);
    REQUIRE(batch.size() == data.n());
    for (Index i = 0; i < data.n(); ++i) {
        const Vec row = data.encoded.row(i).transpose();
        CHECK(batch[i] == doctest::Approx(predict_risk(model, row)).epsilon(1e-12));
    }
}

TEST_CASE("forest training is deterministic in the seed") {
    const auto data = two_group_dataset(30, 9);
    ForestConfig cfg;
    cfg.n_trees = 40;
    cfg.seed = 77;
    const auto m1 = fit_rsf(data, cfg);
    const auto m2 = fit_rsf(data, cfg);
    const Vec p1 = predict_risk(m1, data.encoded);
    const Vec p2 = predict_risk(m2, data.encoded);
    CHECK(p1 == p2);

    // worker count must not change the model
    const auto m4 = fit_rsf(data, cfg, 4);
    const Vec p4 = predict_risk(m4, data.encoded);
    CHECK(p1 == p4);

    cfg.seed = 78;
    const auto m3 = fit_rsf(data, cfg);
    CHECK(predict_risk(m3, data.encoded) != p1);
}

TEST_CASE("out-of-bag concordance is reported and discriminates") {
    const auto data = two_group_dataset(40, 13);
    ForestConfig cfg;
    cfg.n_trees = 80;
    cfg.min_leaf = 5;
    cfg.min_split = 10;
    cfg.seed = 4;
    cfg.compute_oob = true;
    const auto model = fit_rsf(data, cfg);
    REQUIRE(model.oob_concordance.has_value());
    CHECK(*model.oob_concordance > 0.6);
    CHECK(*model.oob_concordance <= 1.0);
}

TEST_CASE("single fully-grown tree without bagging memorizes leaf order") {
    const auto data = two_group_dataset(20, 21);
    ForestConfig cfg;
    cfg.n_trees = 1;
    cfg.min_leaf = 1;
    cfg.min_split = 2;
    cfg.bootstrap = false;
    cfg.seed = 1;
    const auto model = fit_rsf(data, cfg);
    REQUIRE(model.trees.size() == 1);
    Vec hi(1), lo(1);
    hi << 2.2;
    lo << -2.2;
    CHECK(predict_risk(model, hi) > predict_risk(model, lo));
}

TEST_CASE("forest configuration is validated") {
    const auto data = two_group_dataset(10, 2);
    ForestConfig bad;
    bad.n_trees = 0;
    CHECK_THROWS_AS(fit_rsf(data, bad), ArgumentError);
    ForestConfig bad2;
    bad2.min_leaf = 0;
    CHECK_THROWS_AS(fit_rsf(data, bad2), ArgumentError);
}
