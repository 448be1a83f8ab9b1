#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dml {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Probabilities fed into variance formulas are kept inside (kProbClamp, 1 - kProbClamp).
inline constexpr double kProbClamp = 1e-10;

/// One row of a treatment model: outcome, treatment, controls.
struct Observation {
    double y = 0.0;
    double d = 0.0;
    Vector x;
};

/// Intercept (never penalized), treatment slot and control coefficients.
struct CoefficientVector {
    double intercept = 0.0;
    double alpha = 0.0;
    Vector beta;

    bool all_finite() const;
};

/// Logistic link G(t) = exp(t) / (1 + exp(t)).
double link(double t);

/// G'(t) = G(t)(1 - G(t)), evaluated without cancellation for large |t|.
double link_deriv(double t);

/// G(t) clamped into (kProbClamp, 1 - kProbClamp).
double clamped_link(double t);

/// log(1 + exp(t)) without overflow.
double softplus(double t);

/// Mean logistic negative log-likelihood log(1 + e^eta) - y * eta with
/// eta = intercept + d * alpha + x' beta.
///
/// The printed form of this loss in the literature drops the minus sign in
/// front of y * eta; only the subtracted form is convex, so that is what is
/// evaluated here.
double neg_loglik(const CoefficientVector& coeffs, std::span<const Observation> data);
double neg_loglik(const CoefficientVector& coeffs, const Vector& y, const Vector& d, const Matrix& x);

/// Mean logistic loss for a precomputed linear index.
double logistic_loss(const Vector& eta, const Vector& y);

struct WlsResult {
    Vector coef;
    /// True when near-collinearity forced the relative ridge floor.
    bool ridge_applied = false;
};

/// argmin_b sum_i w_i (y_i - x_i' b)^2.
///
/// Solved by column-pivoted QR of sqrt(W) X. Pivots whose squared diagonal
/// falls below 1e-20 * trace(X'WX)/k are treated as exact collinearity and
/// raise RankDeficientError naming those columns. Pivots between that and
/// 1e-10 * trace/k switch to the ridge-regularized normal equations
/// (X'WX + floor * I) b = X'Wy.
WlsResult wls_fit(const Matrix& x, const Vector& y, const Vector& w,
                  std::span<const std::string> column_names = {});

/// Standard normal CDF and quantile.
double normal_cdf(double z);
double normal_quantile(double p);

}  // namespace dml
