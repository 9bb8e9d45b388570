#include "survrec/shap.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

namespace survrec {

ReferencePoint mean_reference(const SurvivalDataset& data,
                              const std::vector<Index>& rows,
                              ReferenceProvenance provenance) {
    if (rows.empty()) throw ArgumentError("mean_reference: empty row set");
    const Index m = data.n_features();
    ReferencePoint ref;
    ref.provenance = provenance;
    ref.x_tilde.resize(m);
    for (Index j = 0; j < m; ++j) {
        const auto& f = data.schema[static_cast<std::size_t>(j)];
        if (f.kind == FeatureKind::Nominal) {
            std::map<int, int> counts;
            for (Index i : rows) ++counts[static_cast<int>(data.raw(i, j))];
            int mode = 0, best = -1;
            for (const auto& [lev, c] : counts)
                if (c > best) {
                    best = c;
                    mode = lev;
                }
            ref.x_tilde[j] = static_cast<double>(mode);
        } else {
            double s = 0.0;
            for (Index i : rows) s += data.raw(i, j);
            ref.x_tilde[j] = s / static_cast<double>(rows.size());
        }
    }
    return ref;
}

namespace {

Vec hybrid_row(const Vec& x, const Vec& x_tilde, std::uint32_t mask) {
    Vec row = x_tilde;
    for (Index j = 0; j < x.size(); ++j)
        if (mask & (1u << j)) row[j] = x[j];
    return row;
}

// Model value at every coalition mask, 0 .. 2^M - 1.
std::vector<double> eval_all_masks(const ModelFn& model_fn, const Vec& x,
                                   const Vec& x_tilde) {
    const int m = static_cast<int>(x.size());
    std::vector<double> f(std::size_t{1} << m);
    for (std::uint32_t mask = 0; mask < f.size(); ++mask)
        f[mask] = model_fn(hybrid_row(x, x_tilde, mask));
    return f;
}

double binom(int n, int k) {
    double v = 1.0;
    for (int i = 1; i <= k; ++i)
        v *= static_cast<double>(n - k + i) / static_cast<double>(i);
    return v;
}

struct WlsRow {
    std::uint32_t mask;
    double weight;
    double value;  // F(S)
};

// Constrained WLS: phi_0 = F(empty), sum(phi) = F(full) - F(empty); the last
// coefficient is eliminated through the constraint.
KernelShapResult solve_constrained_wls(const std::vector<WlsRow>& rows, int m,
                                       double f_empty, double f_full) {
    const double delta = f_full - f_empty;
    const int q = m - 1;
    Mat xtx = Mat::Zero(q, q);
    Vec xty = Vec::Zero(q);
    Vec zrow(q);
    for (const auto& r : rows) {
        const double z_last = (r.mask >> (m - 1)) & 1u ? 1.0 : 0.0;
        for (int j = 0; j < q; ++j) {
            const double zj = (r.mask >> j) & 1u ? 1.0 : 0.0;
            zrow[j] = zj - z_last;
        }
        const double y = r.value - f_empty - z_last * delta;
        xtx.noalias() += r.weight * zrow * zrow.transpose();
        xty.noalias() += r.weight * y * zrow;
    }

    KernelShapResult out;
    Eigen::LDLT<Mat> ldlt(xtx);
    Vec head = ldlt.solve(xty);
    const double resid = (xtx * head - xty).norm();
    if (!head.allFinite() || resid > 1e-6 * std::max(1.0, xty.norm())) {
        out.ridge_fallback = true;
        Mat reg = xtx + 1e-8 * Mat::Identity(q, q);
        head = Eigen::LDLT<Mat>(reg).solve(xty);
    }
    out.alpha.resize(m);
    out.alpha.head(q) = head;
    out.alpha[q] = delta - head.sum();
    return out;
}

}  // namespace

double masked_eval(const ModelFn& model_fn, const Vec& x,
                   const ReferencePoint& reference, const std::vector<int>& coalition) {
    if (x.size() != reference.x_tilde.size())
        throw ShapeError("masked_eval: x and reference dimension mismatch");
    std::uint32_t mask = 0;
    for (int j : coalition) {
        if (j < 0 || j >= static_cast<int>(x.size()))
            throw ArgumentError("masked_eval: coalition member out of range");
        mask |= 1u << j;
    }
    return model_fn(hybrid_row(x, reference.x_tilde, mask));
}

Vec exact_shapley(const ModelFn& model_fn, const Vec& x,
                  const ReferencePoint& reference, int exact_threshold) {
    const int m = static_cast<int>(x.size());
    if (m > exact_threshold)
        throw ArgumentError(
            "exact_shapley: too many features for enumeration; use kernel mode");
    if (x.size() != reference.x_tilde.size())
        throw ShapeError("exact_shapley: x and reference dimension mismatch");

    const auto f = eval_all_masks(model_fn, x, reference.x_tilde);

    // w[s] = s! (m-s-1)! / m!
    std::vector<double> w(static_cast<std::size_t>(m));
    for (int s = 0; s < m; ++s) {
        double v = 1.0 / static_cast<double>(m);
        for (int k = 1; k <= s; ++k)
            v *= static_cast<double>(k) / static_cast<double>(m - k);
        w[static_cast<std::size_t>(s)] = v;
    }

    Vec alpha = Vec::Zero(m);
    const auto n_masks = static_cast<std::uint32_t>(f.size());
    for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
        const int s = std::popcount(mask);
        for (int i = 0; i < m; ++i) {
            if (mask & (1u << i)) continue;
            alpha[i] += w[static_cast<std::size_t>(s)] * (f[mask | (1u << i)] - f[mask]);
        }
    }
    return alpha;
}

namespace {

KernelShapResult kernel_shap_full(const ModelFn& model_fn, const Vec& x,
                                  const ReferencePoint& reference,
                                  const ExplainerConfig& config) {
    const int m = static_cast<int>(x.size());

    const std::uint32_t full = m >= 32 ? 0xffffffffu : (1u << m) - 1u;
    const double f_empty = model_fn(reference.x_tilde);
    const double f_full = model_fn(x);

    std::vector<WlsRow> rows;
    if (m <= config.exact_threshold) {
        for (std::uint32_t mask = 1; mask < full; ++mask) {
            const int s = std::popcount(mask);
            const double weight = static_cast<double>(m - 1) /
                                  (binom(m, s) * static_cast<double>(s) *
                                   static_cast<double>(m - s));
            rows.push_back({mask, weight, model_fn(hybrid_row(x, reference.x_tilde, mask))});
        }
    } else {
        int budget = config.n_coalitions > 0 ? config.n_coalitions : 2 * m + 2048;
        if (budget < 2 * m) throw ArgumentError("kernel_shap: coalition budget < 2M");
        std::mt19937_64 rng(config.seed);
        // Fill size pairs (s, m-s) outward from s=1, enumerating a size fully
        // when the budget allows, sampling paired draws otherwise.
        for (int s = 1; s <= m / 2 && budget > 0; ++s) {
            const bool self_paired = 2 * s == m;
            const double count_s = binom(m, s);
            const double pair_count = self_paired ? count_s : 2.0 * count_s;
            const double kernel_w = static_cast<double>(m - 1) /
                                    (binom(m, s) * static_cast<double>(s) *
                                     static_cast<double>(m - s));
            if (pair_count <= static_cast<double>(budget)) {
                // enumerate every subset of size s (and its complement)
                std::uint32_t mask = (1u << s) - 1u;
                while (mask < (1u << m)) {
                    rows.push_back(
                        {mask, kernel_w, model_fn(hybrid_row(x, reference.x_tilde, mask))});
                    if (!self_paired) {
                        const std::uint32_t comp = full & ~mask;
                        rows.push_back(
                            {comp, kernel_w,
                             model_fn(hybrid_row(x, reference.x_tilde, comp))});
                    }
                    // next subset of the same size (Gosper's hack)
                    const std::uint32_t c = mask & static_cast<std::uint32_t>(-static_cast<std::int32_t>(mask));
                    const std::uint32_t r = mask + c;
                    mask = (((r ^ mask) >> 2) / c) | r;
                }
                budget -= static_cast<int>(pair_count);
            } else {
                // sampled masks carry unit weight: the draw follows the kernel
                std::vector<int> cols(static_cast<std::size_t>(m));
                for (int j = 0; j < m; ++j) cols[static_cast<std::size_t>(j)] = j;
                while (budget > 0) {
                    for (int k = 0; k < s; ++k) {
                        std::uniform_int_distribution<int> pick(k, m - 1);
                        std::swap(cols[static_cast<std::size_t>(k)],
                                  cols[static_cast<std::size_t>(pick(rng))]);
                    }
                    std::uint32_t mask = 0;
                    for (int k = 0; k < s; ++k) mask |= 1u << cols[static_cast<std::size_t>(k)];
                    rows.push_back(
                        {mask, 1.0, model_fn(hybrid_row(x, reference.x_tilde, mask))});
                    --budget;
                    if (budget > 0 && !self_paired) {
                        const std::uint32_t comp = full & ~mask;
                        rows.push_back(
                            {comp, 1.0,
                             model_fn(hybrid_row(x, reference.x_tilde, comp))});
                        --budget;
                    }
                }
            }
        }
    }
    return solve_constrained_wls(rows, m, f_empty, f_full);
}

}  // namespace

KernelShapResult kernel_shap(const ModelFn& model_fn, const Vec& x,
                             const ReferencePoint& reference,
                             const ExplainerConfig& config) {
    const int m = static_cast<int>(x.size());
    if (m < 2) throw ArgumentError("kernel_shap: need at least 2 features");
    if (x.size() != reference.x_tilde.size())
        throw ShapeError("kernel_shap: x and reference dimension mismatch");

    // Features equal to the reference are dummy players: every hybrid row is
    // unchanged by them, so their value is exactly zero. Solving the reduced
    // problem both removes their sampling noise and often brings the active
    // set under the enumeration threshold.
    std::vector<int> active;
    for (int j = 0; j < m; ++j)
        if (x[j] != reference.x_tilde[j]) active.push_back(j);

    if (static_cast<int>(active.size()) == m)
        return kernel_shap_full(model_fn, x, reference, config);

    KernelShapResult out;
    out.alpha = Vec::Zero(m);
    if (active.empty()) return out;

    if (active.size() == 1) {
        out.alpha[active[0]] = model_fn(x) - model_fn(reference.x_tilde);
        return out;
    }

    Vec xr(static_cast<Index>(active.size())), rr(static_cast<Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
        xr[static_cast<Index>(k)] = x[active[k]];
        rr[static_cast<Index>(k)] = reference.x_tilde[active[k]];
    }
    ModelFn reduced_fn = [&](const Vec& y) {
        Vec full = reference.x_tilde;
        for (std::size_t k = 0; k < active.size(); ++k) full[active[k]] = y[static_cast<Index>(k)];
        return model_fn(full);
    };
    ReferencePoint reduced_ref;
    reduced_ref.x_tilde = rr;
    reduced_ref.provenance = reference.provenance;
    const auto sub = kernel_shap_full(reduced_fn, xr, reduced_ref, config);
    out.ridge_fallback = sub.ridge_fallback;
    for (std::size_t k = 0; k < active.size(); ++k)
        out.alpha[active[k]] = sub.alpha[static_cast<Index>(k)];
    return out;
}

AttributionMatrix explain_cohort(const ModelFn& model_fn, const Mat& raw_rows,
                                 const std::vector<Index>& subject_index,
                                 const ReferencePoint& reference,
                                 const ExplainerConfig& config,
                                 const std::string& model_id, int n_workers) {
    const Index n = raw_rows.rows();
    const Index m = raw_rows.cols();
    if (m != reference.x_tilde.size())
        throw ShapeError("explain_cohort: rows do not match reference dimension");
    if (static_cast<Index>(subject_index.size()) != n)
        throw ShapeError("explain_cohort: subject index length mismatch");

    AttributionMatrix att;
    att.subject_index = subject_index;
    att.reference = reference;
    att.model_id = model_id;
    att.alpha.resize(n, m);
    att.f_x.resize(n);
    att.f_ref = model_fn(reference.x_tilde);

    const bool exact = config.mode == ExplainMode::Exact ||
                       static_cast<int>(m) <= config.exact_threshold;

    std::atomic<Index> next{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (Index i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            if (failed.load()) return;
            try {
                const Vec x = raw_rows.row(i).transpose();
                Vec alpha;
                if (exact) {
                    alpha = exact_shapley(model_fn, x, reference, config.exact_threshold);
                } else {
                    ExplainerConfig row_cfg = config;
                    row_cfg.seed = derive_seed(
                        config.seed,
                        static_cast<std::uint64_t>(subject_index[static_cast<std::size_t>(i)]));
                    alpha = kernel_shap(model_fn, x, reference, row_cfg).alpha;
                }
                const double fx = model_fn(x);
                if (exact &&
                    std::abs(fx - att.f_ref - alpha.sum()) > config.tolerance)
                    throw InternalError(
                        "explain_cohort: completeness violated in exact mode");
                att.alpha.row(i) = alpha.transpose();
                att.f_x[i] = fx;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                failed.store(true);
                failure = e.what();
            }
        }
    };

    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed.load()) throw InternalError("explain_cohort failed: " + failure);
    return att;
}

void write_attributions_csv(const std::string& path, const AttributionMatrix& att,
                            const std::vector<std::string>& feature_names) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write attributions CSV: " + path);
    out << "subject";
    for (const auto& name : feature_names) out << "," << name;
    out << ",f_x,f_ref\n";
    out.precision(12);
    for (Index i = 0; i < att.alpha.rows(); ++i) {
        out << att.subject_index[static_cast<std::size_t>(i)];
        for (Index j = 0; j < att.alpha.cols(); ++j) out << "," << att.alpha(i, j);
        out << "," << att.f_x[i] << "," << att.f_ref << "\n";
    }
}

}  // namespace survrec
