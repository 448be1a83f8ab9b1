#include "dml/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dml/errors.hpp"

namespace dml {

const char* to_string(Family f) {
    return f == Family::Logistic ? "logit" : "linear";
}

const char* to_string(PenaltyMethod m) {
    switch (m) {
        case PenaltyMethod::Plugin: return "plugin";
        case PenaltyMethod::CrossValidation: return "cv";
        case PenaltyMethod::Fixed: return "fixed";
    }
    return "plugin";
}

double soft_threshold(double z, double t) {
    if (!(t >= 0.0)) throw InvalidArgument("soft_threshold: threshold must be nonnegative");
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

Vector LassoFit::linear_index(const Matrix& x) const {
    return (x * coef).array() + intercept;
}

namespace {

CoefficientVector split_coefficients(double intercept, const Vector& coef, Index treatment) {
    CoefficientVector out;
    out.intercept = intercept;
    out.alpha = coef[treatment];
    out.beta.resize(coef.size() - 1);
    Index k = 0;
    for (Index j = 0; j < coef.size(); ++j) {
        if (j != treatment) out.beta[k++] = coef[j];
    }
    return out;
}

std::vector<bool> penalty_mask(Index k, const std::vector<Index>& unpenalized) {
    std::vector<bool> mask(static_cast<std::size_t>(k), true);
    for (Index j : unpenalized) {
        if (j < 0 || j >= k) throw InvalidArgument("unpenalized column index out of range");
        mask[static_cast<std::size_t>(j)] = false;
    }
    return mask;
}

void validate_penalty(Index k, double lambda, const Vector& loadings, const std::vector<bool>& penalized) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lasso: lambda must be finite and >= 0");
    if (loadings.size() != k) throw InvalidArgument("lasso: loadings length differs from column count");
    for (Index j = 0; j < k; ++j) {
        if (penalized[static_cast<std::size_t>(j)] && !(loadings[j] > 0.0 && std::isfinite(loadings[j]))) {
            throw InvalidArgument("lasso: loadings must be positive and finite");
        }
    }
}

/// Coordinate descent for
///   sum_i u_i (target_i - b0 - x_i' b)^2 + sum_j thresh_j |b_j|.
/// Full sweep, then sweeps over the active set until stable, repeated until
/// a full sweep moves no coordinate by `tol` or more.
struct CdResult {
    int sweeps = 0;
    bool converged = false;
};

class CoordinateDescent {
public:
    CoordinateDescent(const Matrix& x, const Vector& target, const Vector& u, const Vector& thresh)
        : x_(x), target_(target), u_(u), thresh_(thresh), col_curv_(x.cols()), u_sum_(u.sum()) {
        for (Index j = 0; j < x.cols(); ++j) col_curv_[j] = x.col(j).cwiseAbs2().dot(u);
    }

    double objective(double b0, const Vector& b) const {
        const Vector r = target_ - x_ * b - Vector::Constant(target_.size(), b0);
        return r.cwiseAbs2().dot(u_) + thresh_.cwiseProduct(b.cwiseAbs()).sum();
    }

    CdResult solve(double& b0, Vector& b, double tol, int max_sweeps, std::vector<double>* trace) {
        CdResult res;
        Vector r = target_ - x_ * b - Vector::Constant(target_.size(), b0);
        const Index k = x_.cols();
        std::vector<Index> active;
        while (res.sweeps < max_sweeps) {
            double change = sweep_all(b0, b, r);
            ++res.sweeps;
            if (trace) trace->push_back(objective_from_residual(r, b));
            if (change < tol) {
                res.converged = true;
                break;
            }
            active.clear();
            for (Index j = 0; j < k; ++j) {
                if (b[j] != 0.0 || thresh_[j] == 0.0) active.push_back(j);
            }
            while (res.sweeps < max_sweeps) {
                change = sweep(active, b0, b, r);
                ++res.sweeps;
                if (trace) trace->push_back(objective_from_residual(r, b));
                if (change < tol) break;
            }
        }
        return res;
    }

private:
    double objective_from_residual(const Vector& r, const Vector& b) const {
        return r.cwiseAbs2().dot(u_) + thresh_.cwiseProduct(b.cwiseAbs()).sum();
    }

    double update(Index j, Vector& b, Vector& r) const {
        const double a = col_curv_[j];
        if (a <= 0.0) return 0.0;
        const double old = b[j];
        const double g = (x_.col(j).array() * u_.array() * r.array()).sum() + a * old;
        const double next = soft_threshold(g, 0.5 * thresh_[j]) / a;
        if (next != old) {
            r.noalias() -= (next - old) * x_.col(j);
            b[j] = next;
        }
        return std::abs(next - old);
    }

    double update_intercept(double& b0, Vector& r) const {
        if (u_sum_ <= 0.0) return 0.0;
        const double delta = r.dot(u_) / u_sum_;
        b0 += delta;
        r.array() -= delta;
        return std::abs(delta);
    }

    double sweep_all(double& b0, Vector& b, Vector& r) const {
        double change = update_intercept(b0, r);
        for (Index j = 0; j < x_.cols(); ++j) change = std::max(change, update(j, b, r));
        return change;
    }

    double sweep(const std::vector<Index>& set, double& b0, Vector& b, Vector& r) const {
        double change = update_intercept(b0, r);
        for (Index j : set) change = std::max(change, update(j, b, r));
        return change;
    }

    const Matrix& x_;
    const Vector& target_;
    const Vector& u_;
    const Vector& thresh_;
    Vector col_curv_;
    double u_sum_;
};

Vector thresholds(double lambda, Index n, const Vector& loadings, const std::vector<bool>& penalized) {
    Vector t(loadings.size());
    for (Index j = 0; j < t.size(); ++j) {
        t[j] = penalized[static_cast<std::size_t>(j)] ? lambda / static_cast<double>(n) * loadings[j] : 0.0;
    }
    return t;
}

void finalize_support(LassoFit& fit) {
    fit.support.clear();
    for (Index j = 0; j < fit.coef.size(); ++j) {
        if (fit.penalized[static_cast<std::size_t>(j)] && fit.coef[j] != 0.0) fit.support.push_back(j);
    }
}

void check_binary(const Vector& y) {
    if (!(y.array() == 0.0 || y.array() == 1.0).all()) {
        throw InvalidArgument("logistic model requires a 0/1 outcome");
    }
}

std::vector<std::string> refit_names(const std::vector<Index>& cols, std::span<const std::string> names) {
    std::vector<std::string> out{"(intercept)"};
    for (Index j : cols) {
        out.push_back(static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)]
                                                                 : "column " + std::to_string(j));
    }
    return out;
}

Matrix with_intercept(const Matrix& x, const std::vector<Index>& cols) {
    Matrix z(x.rows(), static_cast<Index>(cols.size()) + 1);
    z.col(0).setOnes();
    for (std::size_t k = 0; k < cols.size(); ++k) z.col(static_cast<Index>(k) + 1) = x.col(cols[k]);
    return z;
}

Vector floor_loadings(Vector l) {
    const double top = l.size() > 0 ? l.maxCoeff() : 0.0;
    if (!(top > 0.0)) return Vector::Ones(l.size());
    for (Index j = 0; j < l.size(); ++j) l[j] = std::max(l[j], 1e-6 * top);
    return l;
}

}  // namespace

CoefficientVector LassoFit::split(Index treatment) const {
    return split_coefficients(intercept, coef, treatment);
}

Vector RefitResult::linear_index(const Matrix& x) const {
    return (x * coef).array() + intercept;
}

CoefficientVector RefitResult::split(Index treatment) const {
    return split_coefficients(intercept, coef, treatment);
}

double lasso_wls_objective(const Matrix& x, const Vector& y, const Vector& w, double lambda, const Vector& loadings,
                           const std::vector<bool>& penalized, double intercept, const Vector& coef) {
    const Index n = x.rows();
    const Vector r = y - x * coef - Vector::Constant(n, intercept);
    const Vector t = thresholds(lambda, n, loadings, penalized);
    return r.cwiseAbs2().dot(w.cwiseAbs2()) / static_cast<double>(n) + t.cwiseProduct(coef.cwiseAbs()).sum();
}

double lasso_logistic_objective(const Matrix& x, const Vector& y, double lambda, const Vector& loadings,
                                const std::vector<bool>& penalized, double intercept, const Vector& coef) {
    const Vector eta = (x * coef).array() + intercept;
    const Vector t = thresholds(lambda, x.rows(), loadings, penalized);
    return logistic_loss(eta, y) + t.cwiseProduct(coef.cwiseAbs()).sum();
}

LassoFit lasso_wls(const Matrix& x, const Vector& y, const Vector& w, double lambda, const Vector& loadings,
                   const LassoOptions& options) {
    const Index n = x.rows();
    const Index k = x.cols();
    if (n == 0) throw InvalidArgument("lasso_wls: no observations");
    if (y.size() != n || w.size() != n) throw InvalidArgument("lasso_wls: dimension mismatch");
    if (!w.allFinite() || !y.allFinite() || !x.allFinite()) throw InvalidArgument("lasso_wls: non-finite input");

    LassoFit fit;
    fit.penalized = penalty_mask(k, options.unpenalized);
    validate_penalty(k, lambda, loadings, fit.penalized);
    fit.lambda = lambda;
    fit.loadings = loadings;

    const Vector u = w.cwiseAbs2() / static_cast<double>(n);
    const Vector t = thresholds(lambda, n, loadings, fit.penalized);
    fit.coef = options.init_coef.size() == k ? options.init_coef : Vector::Zero(k);
    fit.intercept = options.init_intercept.value_or(0.0);

    CoordinateDescent cd(x, y, u, t);
    fit.objective_trace.push_back(cd.objective(fit.intercept, fit.coef));
    const CdResult res = cd.solve(fit.intercept, fit.coef, options.tolerance, options.max_sweeps, &fit.objective_trace);
    fit.iterations = res.sweeps;
    fit.converged = res.converged;
    fit.objective = cd.objective(fit.intercept, fit.coef);
    if (!fit.converged) {
        fit.warnings.push_back("lasso_wls: no convergence after " + std::to_string(res.sweeps) + " sweeps");
    }
    finalize_support(fit);
    return fit;
}

LassoFit lasso_logistic(const Matrix& x, const Vector& y, double lambda, const Vector& loadings,
                        const LassoOptions& options) {
    const Index n = x.rows();
    const Index k = x.cols();
    if (n == 0) throw InvalidArgument("lasso_logistic: no observations");
    if (y.size() != n) throw InvalidArgument("lasso_logistic: dimension mismatch");
    if (!x.allFinite()) throw InvalidArgument("lasso_logistic: non-finite design");
    check_binary(y);

    LassoFit fit;
    fit.penalized = penalty_mask(k, options.unpenalized);
    validate_penalty(k, lambda, loadings, fit.penalized);
    fit.lambda = lambda;
    fit.loadings = loadings;
    const Vector t = thresholds(lambda, n, loadings, fit.penalized);

    const double ybar = y.mean();
    fit.coef = options.init_coef.size() == k ? options.init_coef : Vector::Zero(k);
    if (options.init_intercept) {
        fit.intercept = *options.init_intercept;
    } else if (ybar > 0.0 && ybar < 1.0) {
        fit.intercept = std::log(ybar / (1.0 - ybar));
    }

    auto objective = [&](double b0, const Vector& b) {
        return lasso_logistic_objective(x, y, lambda, loadings, fit.penalized, b0, b);
    };
    double current = objective(fit.intercept, fit.coef);
    fit.objective_trace.push_back(current);

    bool warned_separation = false;
    int sweeps = 0;
    while (sweeps < options.max_sweeps) {
        const Vector eta = fit.linear_index(x);
        Vector weight(n);
        Vector work(n);
        for (Index i = 0; i < n; ++i) {
            const double p = link(eta[i]);
            const double v = std::max(p * (1.0 - p), 1e-10);
            weight[i] = v;
            work[i] = eta[i] + (y[i] - p) / v;
        }
        const Vector u = weight / (2.0 * static_cast<double>(n));

        double b0 = fit.intercept;
        Vector b = fit.coef;
        CoordinateDescent cd(x, work, u, t);
        const CdResult inner = cd.solve(b0, b, 0.1 * options.tolerance, options.max_sweeps - sweeps, nullptr);
        sweeps += std::max(inner.sweeps, 1);

        const double d0 = b0 - fit.intercept;
        const Vector db = b - fit.coef;
        double step = 1.0;
        double candidate = objective(fit.intercept + d0, fit.coef + db);
        int halvings = 0;
        while (!(candidate <= current + 1e-15 * std::abs(current)) && halvings < 60) {
            step *= 0.5;
            candidate = objective(fit.intercept + step * d0, fit.coef + step * db);
            ++halvings;
        }
        if (!(candidate <= current + 1e-15 * std::abs(current))) {
            // No descent along the Newton direction: already at the optimum numerically.
            fit.converged = std::max(std::abs(d0), db.cwiseAbs().maxCoeff()) < 1e3 * options.tolerance;
            break;
        }
        const double change = step * std::max(std::abs(d0), db.size() ? db.cwiseAbs().maxCoeff() : 0.0);
        fit.intercept += step * d0;
        fit.coef += step * db;
        const bool shrinking = candidate < current;
        current = std::min(candidate, current);
        fit.objective_trace.push_back(current);

        if (!warned_separation && shrinking) {
            const Vector eta_new = fit.linear_index(x);
            if (eta_new.cwiseAbs().maxCoeff() > 30.0) {
                fit.warnings.push_back("lasso_logistic: separation detected (|eta| > 30 with shrinking loss)");
                warned_separation = true;
            }
        }
        if (change < options.tolerance) {
            fit.converged = true;
            break;
        }
    }
    fit.iterations = sweeps;
    fit.objective = current;
    if (!fit.converged) {
        fit.warnings.push_back("lasso_logistic: no convergence after " + std::to_string(sweeps) + " sweeps");
    }
    finalize_support(fit);
    return fit;
}

LassoFit lasso_logistic(const Dataset& data, double lambda, const Vector& loadings, const LassoOptions& options) {
    return lasso_logistic(data.design(), data.y(), lambda, loadings, options);
}

RefitResult logistic_mle(const Matrix& x, const Vector& y, std::span<const std::string> names) {
    check_binary(y);
    const Index n = x.rows();
    const double ybar = y.mean();
    if (ybar <= 0.0 || ybar >= 1.0) throw DegenerateOutcomeError("outcome is constant; logistic fit undefined");

    std::vector<Index> all(static_cast<std::size_t>(x.cols()));
    for (Index j = 0; j < x.cols(); ++j) all[static_cast<std::size_t>(j)] = j;
    const Matrix z = with_intercept(x, all);
    const std::vector<std::string> znames = [&] {
        std::vector<std::string> out{"(intercept)"};
        for (Index j = 0; j < x.cols(); ++j) {
            out.push_back(static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)]
                                                                     : "column " + std::to_string(j));
        }
        return out;
    }();

    Vector b = Vector::Zero(z.cols());
    b[0] = std::log(ybar / (1.0 - ybar));
    double loss = logistic_loss(z * b, y);

    RefitResult res;
    res.converged = false;
    bool warned = false;
    for (int iter = 0; iter < 200; ++iter) {
        const Vector eta = z * b;
        Vector weight(n);
        Vector work(n);
        for (Index i = 0; i < n; ++i) {
            const double p = link(eta[i]);
            const double v = std::max(p * (1.0 - p), 1e-12);
            weight[i] = v;
            work[i] = eta[i] + (y[i] - p) / v;
        }
        const WlsResult step = wls_fit(z, work, weight, znames);
        res.ridge_applied = res.ridge_applied || step.ridge_applied;
        Vector dir = step.coef - b;
        double t = 1.0;
        double next = logistic_loss(z * (b + dir), y);
        int halvings = 0;
        while (!(next <= loss + 1e-15 * std::abs(loss)) && halvings < 60) {
            t *= 0.5;
            next = logistic_loss(z * (b + t * dir), y);
            ++halvings;
        }
        if (!(next <= loss + 1e-15 * std::abs(loss))) {
            res.converged = dir.cwiseAbs().maxCoeff() < 1e-6 * (1.0 + b.cwiseAbs().maxCoeff());
            break;
        }
        const double change = t * dir.cwiseAbs().maxCoeff();
        b += t * dir;
        const bool shrinking = next < loss;
        loss = std::min(loss, next);
        if (!warned && shrinking && (z * b).cwiseAbs().maxCoeff() > 30.0) {
            res.warnings.push_back("logistic refit: separation detected (|eta| > 30 with shrinking loss)");
            warned = true;
        }
        if (change < 1e-11 * (1.0 + b.cwiseAbs().maxCoeff())) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged) res.warnings.push_back("logistic refit: Newton iterations did not converge");
    res.intercept = b[0];
    res.coef = b.tail(x.cols());
    res.columns = all;
    return res;
}

RefitResult refit_columns(const std::vector<Index>& columns_in, const Matrix& x, const Vector& y, const Vector& w,
                          Family family, std::span<const std::string> names) {
    std::vector<Index> cols = columns_in;
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    for (Index j : cols) {
        if (j < 0 || j >= x.cols()) throw InvalidArgument("refit: column index out of range");
    }
    const Index n = x.rows();
    if (static_cast<Index>(cols.size()) + 1 > n) {
        throw RankDeficientError("refit: more columns than observations", refit_names(cols, names));
    }

    RefitResult res;
    res.coef = Vector::Zero(x.cols());
    res.columns = cols;
    if (family == Family::Linear) {
        const Matrix z = with_intercept(x, cols);
        const auto znames = refit_names(cols, names);
        const WlsResult sol = wls_fit(z, y, w.cwiseAbs2(), znames);
        res.intercept = sol.coef[0];
        for (std::size_t k = 0; k < cols.size(); ++k) res.coef[cols[k]] = sol.coef[static_cast<Index>(k) + 1];
        res.ridge_applied = sol.ridge_applied;
        if (sol.ridge_applied) res.warnings.push_back("refit: ridge floor applied to a near-singular design");
    } else {
        Matrix sub(n, static_cast<Index>(cols.size()));
        std::vector<std::string> sub_names;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            sub.col(static_cast<Index>(k)) = x.col(cols[k]);
            sub_names.push_back(static_cast<std::size_t>(cols[k]) < names.size()
                                    ? names[static_cast<std::size_t>(cols[k])]
                                    : "column " + std::to_string(cols[k]));
        }
        RefitResult mle = logistic_mle(sub, y, sub_names);
        res.intercept = mle.intercept;
        for (std::size_t k = 0; k < cols.size(); ++k) res.coef[cols[k]] = mle.coef[static_cast<Index>(k)];
        res.ridge_applied = mle.ridge_applied;
        res.converged = mle.converged;
        res.warnings = std::move(mle.warnings);
    }
    return res;
}

RefitResult post_refit(const LassoFit& fit, const Matrix& x, const Vector& y, const Vector& w, Family family,
                       const std::vector<Index>& keep, std::span<const std::string> names) {
    std::vector<Index> cols = fit.support;
    cols.insert(cols.end(), keep.begin(), keep.end());
    for (std::size_t j = 0; j < fit.penalized.size(); ++j) {
        if (!fit.penalized[j]) cols.push_back(static_cast<Index>(j));
    }
    return refit_columns(cols, x, y, w, family, names);
}

Vector wls_loadings(const Matrix& x, const Vector& w, const Vector& residual) {
    const Vector score = w.cwiseAbs2().cwiseProduct(residual);
    Vector l(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        l[j] = std::sqrt(x.col(j).cwiseProduct(score).cwiseAbs2().mean());
    }
    return floor_loadings(std::move(l));
}

Vector logistic_loadings(const Matrix& x, const Vector& y, const Vector& prob) {
    const Vector score = y - prob;
    Vector l(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        l[j] = std::sqrt(x.col(j).cwiseProduct(score).cwiseAbs2().mean());
    }
    return floor_loadings(std::move(l));
}

namespace {

/// Fit restricted to the unpenalized columns: the penalized columns' baseline.
RefitResult baseline_fit(Family family, const Matrix& x, const Vector& y, const Vector& w,
                         const std::vector<Index>& unpenalized) {
    return refit_columns(unpenalized, x, y, w, family);
}

Vector fitted_residual(Family family, const RefitResult& fit, const Matrix& x, const Vector& y) {
    const Vector eta = fit.linear_index(x);
    if (family == Family::Linear) return y - eta;
    Vector r(y.size());
    for (Index i = 0; i < y.size(); ++i) r[i] = y[i] - link(eta[i]);
    return r;
}

Vector loadings_from(Family family, const RefitResult& fit, const Matrix& x, const Vector& y, const Vector& w) {
    if (family == Family::Linear) return wls_loadings(x, w, fitted_residual(family, fit, x, y));
    const Vector eta = fit.linear_index(x);
    Vector prob(eta.size());
    for (Index i = 0; i < eta.size(); ++i) prob[i] = link(eta[i]);
    return logistic_loadings(x, y, prob);
}

LassoFit solve(Family family, const Matrix& x, const Vector& y, const Vector& w, double lambda,
               const Vector& loadings, const LassoOptions& options) {
    return family == Family::Linear ? lasso_wls(x, y, w, lambda, loadings, options)
                                    : lasso_logistic(x, y, lambda, loadings, options);
}

}  // namespace

double lambda_max(Family family, const Matrix& x, const Vector& y, const Vector& w, const Vector& loadings,
                  const std::vector<Index>& unpenalized) {
    const RefitResult base = baseline_fit(family, x, y, w, unpenalized);
    const Vector r = fitted_residual(family, base, x, y);
    const auto mask = penalty_mask(x.cols(), unpenalized);
    double best = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        double g = 0.0;
        if (family == Family::Linear) {
            g = 2.0 * std::abs((w.cwiseAbs2().cwiseProduct(r)).dot(x.col(j)));
        } else {
            g = std::abs(r.dot(x.col(j)));
        }
        best = std::max(best, g / loadings[j]);
    }
    return best;
}

LassoFit penalized_fit(Family family, const Matrix& x, const Vector& y, const Vector& w,
                       const PenaltyConfig& config, const LassoOptions& options) {
    const Index n = x.rows();
    const Index k = x.cols();
    const Index penalized_count = k - static_cast<Index>(options.unpenalized.size());

    const RefitResult base = baseline_fit(family, x, y, w, options.unpenalized);
    Vector loadings = loadings_from(family, base, x, y, w);

    double lambda = 0.0;
    switch (config.method) {
        case PenaltyMethod::Plugin:
            lambda = plugin_lambda(n, std::max<Index>(penalized_count, 1), config) *
                     (family == Family::Linear ? 2.0 : 1.0);
            break;
        case PenaltyMethod::Fixed:
            lambda = config.fixed_lambda;
            break;
        case PenaltyMethod::CrossValidation:
            lambda = cv_lambda(family, x, y, w, loadings, config, options);
            break;
    }

    LassoFit fit = solve(family, x, y, w, lambda, loadings, options);
    for (int it = 0; it < config.refinement_iterations; ++it) {
        const RefitResult refit = post_refit(fit, x, y, w, family);
        loadings = loadings_from(family, refit, x, y, w);
        LassoOptions warm = options;
        warm.init_intercept = fit.intercept;
        warm.init_coef = fit.coef;
        fit = solve(family, x, y, w, lambda, loadings, warm);
    }
    if (config.method == PenaltyMethod::Plugin && config.c < 1.0) {
        fit.warnings.push_back("plug-in constant c = " + format_number(config.c) +
                               " is below 1; the penalty may not dominate the score");
    }
    return fit;
}

}  // namespace dml
