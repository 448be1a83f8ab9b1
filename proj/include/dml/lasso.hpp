#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dml/dataset.hpp"
#include "dml/numerics.hpp"

namespace dml {

enum class Family { Logistic, Linear };

enum class PenaltyMethod { Plugin, CrossValidation, Fixed };

const char* to_string(Family f);
const char* to_string(PenaltyMethod m);

struct PenaltyConfig {
    PenaltyMethod method = PenaltyMethod::Plugin;
    /// Plug-in scaling constant.
    double c = 1.1;
    /// Plug-in confidence parameter; 0.1 / log(n) when unset.
    std::optional<double> gamma;
    /// Cross-validation folds and one-standard-error rule.
    int folds = 10;
    bool one_se_rule = false;
    std::uint64_t cv_seed = 0;
    /// Heteroskedastic loading refinements after the pilot fit.
    int refinement_iterations = 1;
    /// Penalty used when method == Fixed.
    double fixed_lambda = 0.0;

    double gamma_for(Index n) const;
};

/// sign(z) * max(|z| - t, 0).
double soft_threshold(double z, double t);

/// c * sqrt(n) * Phi^{-1}(1 - gamma / (2p)).
double plugin_lambda(Index n, Index p, const PenaltyConfig& config);

struct LassoOptions {
    double tolerance = 1e-8;
    int max_sweeps = 10000;
    /// Columns excluded from the penalty (the intercept always is).
    std::vector<Index> unpenalized;
    /// Optional warm start (coefficient vector must match the column count).
    std::optional<double> init_intercept;
    Vector init_coef;
};

struct LassoFit {
    double intercept = 0.0;
    Vector coef;                // one entry per design column
    std::vector<Index> support;  // nonzero penalized columns, ascending
    double lambda = 0.0;
    Vector loadings;
    std::vector<bool> penalized;
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;
    std::vector<double> objective_trace;
    std::vector<std::string> warnings;

    Vector linear_index(const Matrix& x) const;
    /// Intercept, the treatment slot and the remaining columns as controls.
    CoefficientVector split(Index treatment) const;
};

/// Weighted lasso with an unpenalized intercept:
///   mean_i w_i^2 (y_i - b0 - x_i' b)^2 + (lambda / n) sum_j loading_j |b_j|.
/// Coordinate descent with active-set cycling.
LassoFit lasso_wls(const Matrix& x, const Vector& y, const Vector& w, double lambda, const Vector& loadings,
                   const LassoOptions& options = {});

/// l1-penalized logistic regression:
///   mean_i Lambda_i + (lambda / n) sum_j loading_j |b_j|,
/// by proximal Newton steps (coordinate descent on the quadratic model)
/// with backtracking so the objective never increases.
LassoFit lasso_logistic(const Matrix& x, const Vector& y, double lambda, const Vector& loadings,
                        const LassoOptions& options = {});
LassoFit lasso_logistic(const Dataset& data, double lambda, const Vector& loadings,
                        const LassoOptions& options = {});

/// Objective value of a fit under each solver's loss.
double lasso_wls_objective(const Matrix& x, const Vector& y, const Vector& w, double lambda,
                           const Vector& loadings, const std::vector<bool>& penalized, double intercept,
                           const Vector& coef);
double lasso_logistic_objective(const Matrix& x, const Vector& y, double lambda, const Vector& loadings,
                                const std::vector<bool>& penalized, double intercept, const Vector& coef);

/// Smallest penalty that zeroes every penalized column, given the
/// unpenalized columns at their restricted optimum.
double lambda_max(Family family, const Matrix& x, const Vector& y, const Vector& w, const Vector& loadings,
                  const std::vector<Index>& unpenalized);

struct RefitResult {
    double intercept = 0.0;
    Vector coef;                // zeros outside the refit columns
    std::vector<Index> columns;  // support plus kept columns, ascending
    bool ridge_applied = false;
    bool converged = true;
    std::vector<std::string> warnings;

    Vector linear_index(const Matrix& x) const;
    CoefficientVector split(Index treatment) const;
};

/// Unpenalized refit over {intercept} + support + keep. Linear family
/// minimizes mean w^2 (y - fit)^2; the logistic family ignores w.
RefitResult post_refit(const LassoFit& fit, const Matrix& x, const Vector& y, const Vector& w, Family family,
                       const std::vector<Index>& keep = {}, std::span<const std::string> names = {});
RefitResult refit_columns(const std::vector<Index>& columns, const Matrix& x, const Vector& y, const Vector& w,
                          Family family, std::span<const std::string> names = {});

/// Unpenalized logistic MLE on [1, x] by Newton steps with step halving.
RefitResult logistic_mle(const Matrix& x, const Vector& y, std::span<const std::string> names = {});

/// sqrt(mean_i w_i^4 e_i^2 x_ij^2): score-scale loadings for the weighted
/// least-squares lasso, where e is the unweighted residual.
Vector wls_loadings(const Matrix& x, const Vector& w, const Vector& residual);
/// sqrt(mean_i (y_i - p_i)^2 x_ij^2).
Vector logistic_loadings(const Matrix& x, const Vector& y, const Vector& prob);

/// Penalty level selected by K-fold cross-validation over a log-spaced grid
/// from lambda_max down to 1e-3 * lambda_max (deviance loss).
double cv_lambda(Family family, const Matrix& x, const Vector& y, const Vector& w, const Vector& loadings,
                 const PenaltyConfig& config, const LassoOptions& options = {});

/// Full penalized stage: penalty level per config, pilot loadings from the
/// unpenalized baseline, then `refinement_iterations` loading updates from
/// post-lasso residuals. For the least-squares family the plug-in level is
/// doubled to match the gradient of the squared loss.
LassoFit penalized_fit(Family family, const Matrix& x, const Vector& y, const Vector& w,
                       const PenaltyConfig& config, const LassoOptions& options = {});

}  // namespace dml
