#include "dml/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "dml/errors.hpp"

namespace dml {

namespace {

void require_finite(double t, const char* what) {
    if (!std::isfinite(t)) {
        throw InvalidArgument(std::string(what) + ": argument is not finite");
    }
}

std::string column_label(std::span<const std::string> names, Index j) {
    if (static_cast<std::size_t>(j) < names.size()) return names[static_cast<std::size_t>(j)];
    return "column " + std::to_string(j);
}

}  // namespace

bool CoefficientVector::all_finite() const {
    return std::isfinite(intercept) && std::isfinite(alpha) && beta.allFinite();
}

double link(double t) {
    require_finite(t, "link");
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double link_deriv(double t) {
    require_finite(t, "link_deriv");
    const double e = std::exp(-std::abs(t));
    const double denom = 1.0 + e;
    return e / (denom * denom);
}

double clamped_link(double t) {
    return std::clamp(link(t), kProbClamp, 1.0 - kProbClamp);
}

double softplus(double t) {
    return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

double logistic_loss(const Vector& eta, const Vector& y) {
    if (eta.size() != y.size() || eta.size() == 0) {
        throw InvalidArgument("logistic_loss: empty or mismatched inputs");
    }
    double total = 0.0;
    for (Index i = 0; i < eta.size(); ++i) total += softplus(eta[i]) - y[i] * eta[i];
    return total / static_cast<double>(eta.size());
}

double neg_loglik(const CoefficientVector& coeffs, const Vector& y, const Vector& d, const Matrix& x) {
    const Index n = y.size();
    if (n == 0) throw InvalidArgument("neg_loglik: no observations");
    if (d.size() != n || x.rows() != n || x.cols() != coeffs.beta.size()) {
        throw InvalidArgument("neg_loglik: dimension mismatch");
    }
    Vector eta = (x * coeffs.beta).array() + coeffs.intercept;
    eta += coeffs.alpha * d;
    return logistic_loss(eta, y);
}

double neg_loglik(const CoefficientVector& coeffs, std::span<const Observation> data) {
    if (data.empty()) throw InvalidArgument("neg_loglik: no observations");
    const Index p = coeffs.beta.size();
    double total = 0.0;
    for (const auto& obs : data) {
        if (obs.x.size() != p) throw InvalidArgument("neg_loglik: dimension mismatch");
        const double eta = coeffs.intercept + obs.d * coeffs.alpha + obs.x.dot(coeffs.beta);
        total += softplus(eta) - obs.y * eta;
    }
    return total / static_cast<double>(data.size());
}

WlsResult wls_fit(const Matrix& x, const Vector& y, const Vector& w,
                  std::span<const std::string> column_names) {
    const Index n = x.rows();
    const Index k = x.cols();
    if (y.size() != n || w.size() != n) throw InvalidArgument("wls_fit: dimension mismatch");
    if ((w.array() < 0.0).any() || !w.allFinite()) {
        throw InvalidArgument("wls_fit: weights must be finite and nonnegative");
    }
    WlsResult result;
    if (k == 0) {
        result.coef = Vector(0);
        return result;
    }

    const Vector sw = w.array().sqrt();
    const Matrix xw = sw.asDiagonal() * x;
    const Vector yw = sw.cwiseProduct(y);
    const double trace = xw.squaredNorm();
    if (!(trace > 0.0)) {
        std::vector<std::string> all;
        for (Index j = 0; j < k; ++j) all.push_back(column_label(column_names, j));
        throw RankDeficientError("wls_fit: weighted design is identically zero", std::move(all));
    }

    Eigen::ColPivHouseholderQR<Matrix> qr(xw);
    qr.setThreshold(0.0);
    const Matrix& r = qr.matrixR();
    const double floor = 1e-10 * trace / static_cast<double>(k);
    const double hard = 1e-20 * trace / static_cast<double>(k);
    const Index diag = std::min(n, k);

    std::vector<std::string> singular;
    bool near_singular = false;
    for (Index i = 0; i < k; ++i) {
        const double rii2 = i < diag ? r(i, i) * r(i, i) : 0.0;
        if (rii2 <= hard) {
            singular.push_back(column_label(column_names, qr.colsPermutation().indices()[i]));
        } else if (rii2 < floor) {
            near_singular = true;
        }
    }
    if (!singular.empty()) {
        std::ostringstream msg;
        msg << "wls_fit: rank-deficient design; collinear columns:";
        for (const auto& name : singular) msg << ' ' << name;
        throw RankDeficientError(msg.str(), std::move(singular));
    }

    if (near_singular) {
        Matrix gram = xw.transpose() * xw;
        gram.diagonal().array() += floor;
        result.coef = gram.ldlt().solve(xw.transpose() * yw);
        result.ridge_applied = true;
    } else {
        result.coef = qr.solve(yw);
    }
    return result;
}

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal_quantile: probability outside (0,1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace dml
