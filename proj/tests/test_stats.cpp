#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "survrec/stats.hpp"

#include <algorithm>
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

}  // namespace

TEST_CASE("pearson on hand-worked examples") {
    CHECK(pearson(vec({1, 2, 3}), vec({1, 2, 3})).r == doctest::Approx(1.0));
    CHECK(pearson(vec({1, 2, 3}), vec({1, 2, 4})).r == doctest::Approx(0.981981).epsilon(1e-4));
    CHECK(pearson(vec({1, 2, 3, 4}), vec({4, 3, 2, 1})).r == doctest::Approx(-1.0));
}

TEST_CASE("pearson preconditions and symmetry") {
    CHECK_THROWS_AS(pearson(vec({1, 1, 1}), vec({1, 2, 3})), ArgumentError);
    CHECK_THROWS_AS(pearson(vec({1, 2}), vec({1, 2})), ArgumentError);

    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 20; ++t) {
        Vec x(15), y(15);
        for (Index i = 0; i < 15; ++i) {
            x[i] = nd(rng);
            y[i] = nd(rng);
        }
        const auto a = pearson(x, y);
        const auto b = pearson(y, x);
        CHECK(a.r == doctest::Approx(b.r).epsilon(1e-12));
        // invariance to positive affine rescaling
        const auto c = pearson((2.5 * x.array() + 7.0).matrix(), y);
        CHECK(a.r == doctest::Approx(c.r).epsilon(1e-10));
        CHECK(std::abs(a.r) <= 1.0);
        CHECK(a.p_value >= 0.0);
        CHECK(a.p_value <= 1.0);
    }
}

TEST_CASE("wilcoxon exact enumeration on hand-worked examples") {
    const auto a = wilcoxon_rank_sum(vec({1, 2}), vec({3, 4}), RankSumMode::Exact);
    CHECK(a.u_statistic == doctest::Approx(0.0));
    CHECK(a.exact);
    CHECK(a.p_value == doctest::Approx(1.0 / 3.0));

    const auto b = wilcoxon_rank_sum(vec({1, 2, 3}), vec({4, 5, 6}), RankSumMode::Exact);
    CHECK(b.u_statistic == doctest::Approx(0.0));
    CHECK(b.p_value == doctest::Approx(0.1));
}

TEST_CASE("wilcoxon on identical tied samples is a null result") {
    const auto r = wilcoxon_rank_sum(vec({5, 5, 5}), vec({5, 5, 5}));
    CHECK(r.z == doctest::Approx(0.0));
    CHECK(r.p_value == doctest::Approx(1.0));
    CHECK_THROWS_AS(wilcoxon_rank_sum(Vec(), vec({1.0})), ArgumentError);
}

TEST_CASE("wilcoxon exact vs normal approximation within 0.02 for all tie-free splits") {
    // every partition of distinct pooled values 1..N into groups of n1 and n2
    for (int n1 = 1; n1 <= 6; ++n1) {
        for (int n2 = n1; n1 + n2 <= 12; ++n2) {
            const int n = n1 + n2;
            std::vector<int> pick(static_cast<std::size_t>(n), 0);
            std::fill(pick.begin(), pick.begin() + n1, 1);
            std::sort(pick.begin(), pick.end());
            do {
                Vec a(n1), b(n2);
                int ia = 0, ib = 0;
                for (int i = 0; i < n; ++i) {
                    if (pick[static_cast<std::size_t>(i)])
                        a[ia++] = i + 1;
                    else
                        b[ib++] = i + 1;
                }
                const auto ex = wilcoxon_rank_sum(a, b, RankSumMode::Exact);
                const auto ap = wilcoxon_rank_sum(a, b, RankSumMode::NormalApprox);
                REQUIRE(ex.exact);
                CHECK(std::abs(ex.p_value - ap.p_value) <= 0.02);
            } while (std::next_permutation(pick.begin(), pick.end()));
        }
    }
}

TEST_CASE("wilcoxon invariance under strictly monotone transforms") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 30; ++t) {
        Vec a(9), b(14);
        for (Index i = 0; i < 9; ++i) a[i] = nd(rng);
        for (Index i = 0; i < 14; ++i) b[i] = nd(rng) + 0.4;
        const auto r1 = wilcoxon_rank_sum(a, b);
        const auto r2 = wilcoxon_rank_sum(
            a.array().exp().matrix(), b.array().exp().matrix());
        CHECK(r1.p_value == doctest::Approx(r2.p_value).epsilon(1e-10));
        CHECK(r1.u_statistic >= 0.0);
        CHECK(r1.u_statistic <= static_cast<double>(r1.n1 * r1.n2));
    }
}

TEST_CASE("bootstrap CI of a constant statistic collapses to a point") {
    auto stat = [](const std::vector<Index>&) { return 3.25; };
    const auto ci = bootstrap_percentile(10, stat, 200, 5);
    CHECK(ci.estimate == 3.25);
    CHECK(ci.lower == 3.25);
    CHECK(ci.upper == 3.25);
}

TEST_CASE("bootstrap CI of the mean of (0,0,0,10) against a brute-force oracle") {
    const Vec sample = vec({0, 0, 0, 10});
    auto stat = [&](const std::vector<Index>& idx) {
        double s = 0.0;
        for (Index i : idx) s += sample[i];
        return s / static_cast<double>(idx.size());
    };
    const auto ci = bootstrap_percentile(4, stat, 1000, 17);
    CHECK(ci.lower >= 0.0);
    CHECK(ci.lower <= 2.5);
    CHECK(ci.upper >= 2.5);

    // brute-force replay of the same resample index schedule
    std::vector<double> vals;
    for (int r = 0; r < 1000; ++r) vals.push_back(stat(bootstrap_indices(4, 17, r)));
    const double lo = percentile(vals, 0.025);
    const double hi = percentile(vals, 0.975);
    CHECK(ci.lower == doctest::Approx(lo));
    CHECK(ci.upper == doctest::Approx(hi));
}

TEST_CASE("bootstrap determinism and drop reporting") {
    auto stat = [](const std::vector<Index>& idx) {
        // undefined whenever the resample misses row 0
        if (std::find(idx.begin(), idx.end(), Index{0}) == idx.end())
            throw ArgumentError("undefined");
        return static_cast<double>(idx.size());
    };
    const auto a = bootstrap_percentile(6, stat, 300, 9);
    const auto b = bootstrap_percentile(6, stat, 300, 9);
    CHECK(a.lower == b.lower);
    CHECK(a.upper == b.upper);
    CHECK(a.dropped == b.dropped);
    CHECK(a.dropped > 0);
}

TEST_CASE("paired bootstrap on identical metrics is null") {
    auto metric = [](const std::vector<Index>& idx) {
        double s = 0.0;
        for (Index i : idx) s += static_cast<double>(i);
        return s;
    };
    const auto r = paired_bootstrap_delta(metric, metric, 8, 500, 13);
    CHECK(r.delta.estimate == 0.0);
    CHECK(r.delta.lower == 0.0);
    CHECK(r.delta.upper == 0.0);
    CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("paired bootstrap detects a constant shift at the p floor") {
    auto metric_a = [](const std::vector<Index>&) { return 0.6; };
    auto metric_b = [](const std::vector<Index>&) { return 0.61; };
    const auto r = paired_bootstrap_delta(metric_a, metric_b, 8, 500, 13);
    CHECK(r.delta.estimate == doctest::Approx(0.01));
    CHECK(r.delta.lower == doctest::Approx(0.01));
    CHECK(r.delta.upper == doctest::Approx(0.01));
    CHECK(r.p_value == doctest::Approx(2.0 / 500.0));
}

TEST_CASE("paired bootstrap feeds both metrics identical index sets") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> nd;
    Vec pa(20), pb(20);
    for (Index i = 0; i < 20; ++i) {
        pa[i] = nd(rng);
        pb[i] = pa[i] + 0.1 * nd(rng);
    }
    auto mean_of = [](const Vec& v) {
        return [&v](const std::vector<Index>& idx) {
            double s = 0.0;
            for (Index i : idx) s += v[i];
            return s / static_cast<double>(idx.size());
        };
    };
    const auto r = paired_bootstrap_delta(mean_of(pa), mean_of(pb), 20, 400, 99);

    // second implementation of the resample loop
    std::vector<double> deltas;
    for (int b = 0; b < 400; ++b) {
        const auto idx = bootstrap_indices(20, 99, b);
        double sa = 0.0, sb = 0.0;
        for (Index i : idx) {
            sa += pa[i];
            sb += pb[i];
        }
        deltas.push_back((sb - sa) / 20.0);
    }
    CHECK(r.delta.lower == doctest::Approx(percentile(deltas, 0.025)));
    CHECK(r.delta.upper == doctest::Approx(percentile(deltas, 0.975)));
}

TEST_CASE("normal_mean_ci matches the closed form") {
    const Vec x = vec({1, 2, 3, 4, 5});
    const auto ci = normal_mean_ci(x);
    const double sd = std::sqrt(2.5);
    CHECK(ci.mean == doctest::Approx(3.0));
    CHECK(ci.upper == doctest::Approx(3.0 + 1.959963985 * sd / std::sqrt(5.0)).epsilon(1e-6));
    CHECK(ci.lower == doctest::Approx(3.0 - 1.959963985 * sd / std::sqrt(5.0)).epsilon(1e-6));
}
