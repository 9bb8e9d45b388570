#pragma once

#include "survrec/common.hpp"
#include "survrec/data.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <utility>
#include <vector>

namespace survrec {

// Which features enter the transparent model and how it is augmented.
struct ModelPlan {
    std::vector<std::string> included_features;
    std::vector<std::string> quadratic_terms;  // continuous/ordinal only
    std::vector<std::pair<std::string, std::string>> interaction_pairs;
};

ModelPlan baseline_plan(const Schema& schema);

enum class TermKind { Base, Quadratic, Interaction };

struct Term {
    TermKind kind = TermKind::Base;
    std::vector<std::string> sources;  // source feature name(s)
    std::string label;
};

// Expanded covariate set: base columns, appended squared columns, and
// elementwise product columns (products taken before standardization).
// Column order is deterministic: base, quadratic, interaction, each block
// alphabetical by source feature name.
struct DesignMatrix {
    std::vector<Term> terms;
    Mat values;          // n x q, unstandardized
    Vec col_mean;        // per-column statistics of these values
    Vec col_sd;
};

DesignMatrix build_design(const SurvivalDataset& data, const ModelPlan& plan);

struct CoxOptions {
    enum class Ties { Efron, Breslow };
    Ties ties = Ties::Efron;
    double tol_loglik = 1e-9;   // relative log-likelihood change
    double tol_gradient = 1e-6; // gradient max-norm
    int max_iter = 100;
    double ridge = 1e-6;        // penalty on standardized coefficients
};

struct CoxFit {
    std::vector<Term> terms;    // kept columns, in design order
    Vec beta;                   // standardized-unit coefficients
    Vec se;
    Vec col_mean;               // training standardization of kept columns
    Vec col_sd;
    double log_partial_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> dropped_columns;
    std::vector<std::string> monotone_columns;  // suspected monotone likelihood
    std::vector<std::pair<double, double>> baseline;  // (time, cumulative hazard)
    double ridge = 0.0;
    CoxOptions::Ties ties = CoxOptions::Ties::Efron;
};

CoxFit fit_cox(const DesignMatrix& design, const Vec& time, const Vec& event,
               const CoxOptions& options = {});

// lp_i = sum_j beta_j * (x_ij - mean_j) / sd_j with the training statistics
// stored in the fit. Design terms are matched to fit terms by label; extra
// design columns (ones the fit dropped) are ignored.
Vec linear_predictor(const CoxFit& fit, const DesignMatrix& design);

// S(t | lp) = exp(-H0(t) * exp(lp)); right-continuous step evaluation.
// Sets *extrapolated when t lies beyond the last baseline step.
double survival_at(const CoxFit& fit, double lp, double t,
                   bool* extrapolated = nullptr);

// Log partial likelihood and its analytic gradient at beta, on standardized
// columns; exposed for gradient checks.
double cox_loglik(const Mat& z, const Vec& time, const Vec& event, const Vec& beta,
                  CoxOptions::Ties ties, double ridge, Vec* gradient = nullptr,
                  Mat* information = nullptr);

nlohmann::json cox_fit_to_json(const CoxFit& fit);

}  // namespace survrec
