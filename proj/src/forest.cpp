#include "survrec/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace survrec {

namespace {

// Per-node view of the survival experience: distinct times ascending, with
// death and total counts per time.
struct NodeTimes {
    std::vector<double> times;
    std::vector<double> deaths;
    std::vector<double> total;  // subjects with exactly this time

    int index_of(double t) const {
        return static_cast<int>(std::lower_bound(times.begin(), times.end(), t) -
                                times.begin());
    }
};

NodeTimes collect_times(const Vec& time, const Vec& event,
                        const std::vector<Index>& rows) {
    std::vector<double> ts;
    ts.reserve(rows.size());
    for (Index i : rows) ts.push_back(time[i]);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    NodeTimes nt;
    nt.times = std::move(ts);
    nt.deaths.assign(nt.times.size(), 0.0);
    nt.total.assign(nt.times.size(), 0.0);
    for (Index i : rows) {
        const int k = nt.index_of(time[i]);
        nt.total[static_cast<std::size_t>(k)] += 1.0;
        if (event[i] == 1.0) nt.deaths[static_cast<std::size_t>(k)] += 1.0;
    }
    return nt;
}

// Standardized log-rank statistic given per-time counts for the left child.
// Returns NaN when the variance vanishes.
double logrank_from_counts(const NodeTimes& nt, const std::vector<double>& d_left,
                           const std::vector<double>& c_left) {
    double num = 0.0, var = 0.0;
    double n_at_risk = 0.0, nl_at_risk = 0.0;
    for (int k = static_cast<int>(nt.times.size()) - 1; k >= 0; --k) {
        const auto u = static_cast<std::size_t>(k);
        n_at_risk += nt.total[u];
        nl_at_risk += c_left[u];
        const double d = nt.deaths[u];
        if (d == 0.0) continue;
        const double frac = nl_at_risk / n_at_risk;
        num += d_left[u] - d * frac;
        if (n_at_risk > 1.0)
            var += d * frac * (1.0 - frac) * (n_at_risk - d) / (n_at_risk - 1.0);
    }
    if (var <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::abs(num) / std::sqrt(var);
}

struct BestSplit {
    double score = -1.0;
    int feature = -1;
    double threshold = 0.0;
};

struct TreeBuilder {
    const SurvivalDataset& data;
    const ForestConfig& cfg;
    const std::vector<double>& grid;
    std::mt19937_64 rng;
    SurvivalTree tree;

    int build(std::vector<Index> rows, int depth) {
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        double n_events = 0.0;
        for (Index i : rows) n_events += data.event[i];
        const bool can_split =
            static_cast<int>(rows.size()) >= cfg.min_split && n_events >= 1.0 &&
            (cfg.max_depth < 0 || depth < cfg.max_depth);

        BestSplit best;
        if (can_split) best = find_split(rows);
        if (best.feature < 0) {
            make_leaf(node_id, rows);
            return node_id;
        }

        std::vector<Index> left_rows, right_rows;
        for (Index i : rows) {
            if (data.encoded(i, best.feature) <= best.threshold)
                left_rows.push_back(i);
            else
                right_rows.push_back(i);
        }
        rows.clear();
        rows.shrink_to_fit();
        // rng draws happen before recursion, so node order does not matter
        const int left = build(std::move(left_rows), depth + 1);
        const int right = build(std::move(right_rows), depth + 1);
        tree.nodes[static_cast<std::size_t>(node_id)].feature = best.feature;
        tree.nodes[static_cast<std::size_t>(node_id)].threshold = best.threshold;
        tree.nodes[static_cast<std::size_t>(node_id)].left = left;
        tree.nodes[static_cast<std::size_t>(node_id)].right = right;
        return node_id;
    }

    BestSplit find_split(const std::vector<Index>& rows) {
        const Index p = data.n_encoded();
        const int mtry = cfg.mtry > 0
                             ? std::min<int>(cfg.mtry, static_cast<int>(p))
                             : std::max(1, static_cast<int>(std::floor(
                                               std::sqrt(static_cast<double>(p)))));
        // Sample mtry column indices without replacement, then sort so the
        // lowest-column-index tie-break is independent of draw order.
        std::vector<int> cols(static_cast<std::size_t>(p));
        std::iota(cols.begin(), cols.end(), 0);
        for (int k = 0; k < mtry; ++k) {
            std::uniform_int_distribution<int> pick(k, static_cast<int>(p) - 1);
            std::swap(cols[static_cast<std::size_t>(k)],
                      cols[static_cast<std::size_t>(pick(rng))]);
        }
        cols.resize(static_cast<std::size_t>(mtry));
        std::sort(cols.begin(), cols.end());

        const NodeTimes nt = collect_times(data.time, data.event, rows);
        const std::size_t T = nt.times.size();

        BestSplit best;
        std::vector<std::size_t> order(rows.size());
        std::vector<double> d_left(T), c_left(T);
        for (int col : cols) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return data.encoded(rows[a], col) < data.encoded(rows[b], col);
            });
            std::fill(d_left.begin(), d_left.end(), 0.0);
            std::fill(c_left.begin(), c_left.end(), 0.0);

            std::size_t moved = 0;
            while (moved < order.size()) {
                const double v = data.encoded(rows[order[moved]], col);
                std::size_t j = moved;
                while (j < order.size() && data.encoded(rows[order[j]], col) == v) {
                    const Index row = rows[order[j]];
                    const auto k = static_cast<std::size_t>(nt.index_of(data.time[row]));
                    c_left[k] += 1.0;
                    if (data.event[row] == 1.0) d_left[k] += 1.0;
                    ++j;
                }
                moved = j;
                if (moved == order.size()) break;  // all rows on one side
                const auto left_n = static_cast<int>(moved);
                const auto right_n = static_cast<int>(order.size() - moved);
                if (left_n < cfg.min_leaf || right_n < cfg.min_leaf) continue;
                const double score = logrank_from_counts(nt, d_left, c_left);
                if (std::isnan(score)) continue;
                const double threshold =
                    0.5 * (v + data.encoded(rows[order[moved]], col));
                if (score > best.score ||
                    (score == best.score &&
                     (col < best.feature ||
                      (col == best.feature && threshold < best.threshold)))) {
                    best = {score, col, threshold};
                }
            }
        }
        return best;
    }

    void make_leaf(int node_id, const std::vector<Index>& rows) {
        TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
        const NodeTimes nt = collect_times(data.time, data.event, rows);
        double at_risk = static_cast<double>(rows.size());
        double h = 0.0;
        for (std::size_t k = 0; k < nt.times.size(); ++k) {
            if (nt.deaths[k] > 0.0) {
                h += nt.deaths[k] / at_risk;
                node.steps.emplace_back(nt.times[k], h);
            }
            at_risk -= nt.total[k];
        }
        // Mortality: sum of the step function over the global event-time grid.
        double mortality = 0.0;
        std::size_t s = 0;
        double cur = 0.0;
        for (double g : grid) {
            while (s < node.steps.size() && node.steps[s].first <= g)
                cur = node.steps[s++].second;
            mortality += cur;
        }
        node.mortality = mortality;
    }
};

double step_at(const std::vector<std::pair<double, double>>& steps, double t) {
    double h = 0.0;
    for (const auto& [st, sh] : steps) {
        if (st > t) break;
        h = sh;
    }
    return h;
}

}  // namespace

double logrank_split_score(const Vec& time, const Vec& event,
                           const std::vector<bool>& in_left) {
    const Index n = time.size();
    if (static_cast<Index>(in_left.size()) != n)
        throw ShapeError("logrank_split_score: flag length mismatch");
    std::size_t nl = 0;
    for (bool b : in_left) nl += b ? 1u : 0u;
    if (nl == 0 || nl == in_left.size())
        throw ArgumentError("logrank_split_score: one side is empty");
    if (event.sum() < 1.0)
        throw ArgumentError("logrank_split_score: no events in pooled data");

    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    const NodeTimes nt = collect_times(time, event, rows);
    std::vector<double> d_left(nt.times.size(), 0.0), c_left(nt.times.size(), 0.0);
    for (Index i = 0; i < n; ++i) {
        if (!in_left[static_cast<std::size_t>(i)]) continue;
        const auto k = static_cast<std::size_t>(nt.index_of(time[i]));
        c_left[k] += 1.0;
        if (event[i] == 1.0) d_left[k] += 1.0;
    }
    const double score = logrank_from_counts(nt, d_left, c_left);
    return std::isnan(score) ? 0.0 : score;
}

int SurvivalTree::leaf_for(const Vec& x) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& nd = nodes[static_cast<std::size_t>(node)];
        node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return node;
}

ForestModel fit_rsf(const SurvivalDataset& train, const ForestConfig& config,
                    int n_workers) {
    if (train.n() < 1) throw FitError("fit_rsf: empty training data");
    if (train.event.sum() < 1.0) throw FitError("fit_rsf: no events in training data");
    if (config.n_trees < 1) throw ArgumentError("fit_rsf: n_trees must be >= 1");
    if (config.min_leaf < 1) throw ArgumentError("fit_rsf: min_leaf must be >= 1");

    ForestModel model;
    model.config = config;
    model.n_columns = train.n_encoded();
    model.n_train = train.n();
    for (Index i = 0; i < train.n(); ++i)
        if (train.event[i] == 1.0) model.event_time_grid.push_back(train.time[i]);
    std::sort(model.event_time_grid.begin(), model.event_time_grid.end());
    model.event_time_grid.erase(
        std::unique(model.event_time_grid.begin(), model.event_time_grid.end()),
        model.event_time_grid.end());

    model.trees.resize(static_cast<std::size_t>(config.n_trees));
    const Index n = train.n();

    auto grow = [&](int t) {
        std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
        std::vector<Index> rows(static_cast<std::size_t>(n));
        if (config.bootstrap) {
            std::uniform_int_distribution<Index> pick(0, n - 1);
            for (auto& r : rows) r = pick(rng);
            std::sort(rows.begin(), rows.end());
        } else {
            std::iota(rows.begin(), rows.end(), Index{0});
        }
        TreeBuilder builder{train, config, model.event_time_grid, std::move(rng), {}};
        builder.tree.bootstrap_rows = rows;
        builder.build(std::move(rows), 0);
        model.trees[static_cast<std::size_t>(t)] = std::move(builder.tree);
    };

    if (n_workers <= 1 || config.n_trees == 1) {
        for (int t = 0; t < config.n_trees; ++t) grow(t);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (int t = next.fetch_add(1); t < config.n_trees;
                     t = next.fetch_add(1))
                    grow(t);
            });
        for (auto& th : pool) th.join();
    }

    if (config.compute_oob && config.bootstrap) {
        // Mortality averaged over trees where the row is out of bag; rows in
        // every bag get no OOB prediction and are skipped.
        std::vector<double> oob_risk(static_cast<std::size_t>(n), 0.0);
        std::vector<int> oob_count(static_cast<std::size_t>(n), 0);
        for (const auto& tree : model.trees) {
            std::vector<bool> in_bag(static_cast<std::size_t>(n), false);
            for (Index r : tree.bootstrap_rows) in_bag[static_cast<std::size_t>(r)] = true;
            for (Index i = 0; i < n; ++i) {
                if (in_bag[static_cast<std::size_t>(i)]) continue;
                const int leaf = tree.leaf_for(train.encoded.row(i).transpose());
                oob_risk[static_cast<std::size_t>(i)] +=
                    tree.nodes[static_cast<std::size_t>(leaf)].mortality;
                ++oob_count[static_cast<std::size_t>(i)];
            }
        }
        // Harrell C over rows with an OOB prediction.
        double conc = 0.0, comp = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (oob_count[static_cast<std::size_t>(i)] == 0 || train.event[i] != 1.0)
                continue;
            const double ri = oob_risk[static_cast<std::size_t>(i)] /
                              oob_count[static_cast<std::size_t>(i)];
            for (Index j = 0; j < n; ++j) {
                if (j == i || oob_count[static_cast<std::size_t>(j)] == 0) continue;
                if (!(train.time[i] < train.time[j])) continue;
                const double rj = oob_risk[static_cast<std::size_t>(j)] /
                                  oob_count[static_cast<std::size_t>(j)];
                comp += 1.0;
                if (ri > rj)
                    conc += 1.0;
                else if (ri == rj)
                    conc += 0.5;
            }
        }
        if (comp > 0.0) model.oob_concordance = conc / comp;
    }
    return model;
}

double predict_chf(const ForestModel& model, const Vec& x, double t) {
    if (x.size() != model.n_columns)
        throw ShapeError("predict_chf: row layout does not match training columns");
    double sum = 0.0;
    for (const auto& tree : model.trees) {
        const int leaf = tree.leaf_for(x);
        sum += step_at(tree.nodes[static_cast<std::size_t>(leaf)].steps, t);
    }
    return sum / static_cast<double>(model.trees.size());
}

double predict_risk(const ForestModel& model, const Vec& x) {
    if (x.size() != model.n_columns)
        throw ShapeError("predict_risk: row layout does not match training columns");
    double sum = 0.0;
    for (const auto& tree : model.trees) {
        const int leaf = tree.leaf_for(x);
        sum += tree.nodes[static_cast<std::size_t>(leaf)].mortality;
    }
    return sum / static_cast<double>(model.trees.size());
}

Vec predict_risk(const ForestModel& model, const Mat& rows) {
    Vec out(rows.rows());
    for (Index i = 0; i < rows.rows(); ++i)
        out[i] = predict_risk(model, Vec(rows.row(i).transpose()));
    return out;
}

}  // namespace survrec
