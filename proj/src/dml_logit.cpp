#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "dml/dml.hpp"
#include "dml/errors.hpp"
#include "dml_common.hpp"

namespace dml {

const char* to_string(InstrumentScaling s) {
    return s == InstrumentScaling::SqrtSigma ? "v/sqrt(sigma)" : "v/sigma";
}

double iv_logit_objective(double alpha, const NuisanceArtifacts& artifacts, const Vector& y, const Vector& d) {
    const Index n = y.size();
    if (d.size() != n || artifacts.offset.size() != n || artifacts.z_hat.size() != n) {
        throw InvalidArgument("iv_logit_objective: artifacts do not match the data");
    }
    double moment = 0.0;
    double second = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double resid = y[i] - link(d[i] * alpha + artifacts.offset[i]);
        const double rz = resid * artifacts.z_hat[i];
        moment += rz;
        second += rz * rz;
    }
    moment /= static_cast<double>(n);
    second /= static_cast<double>(n);
    if (second < 1e-300) throw DegenerateMomentError("iv_logit_objective: score variance vanishes");
    return moment * moment / second;
}

namespace {

/// Sandwich standard error of the treatment coefficient in an unpenalized
/// logistic fit over [1, d, x_S]; 0 if the information matrix is singular.
double pilot_sandwich_se(const Vector& y, const Vector& eta, const Matrix& z) {
    const Index n = y.size();
    Vector h(n);
    Vector s(n);
    for (Index i = 0; i < n; ++i) {
        const double p = link(eta[i]);
        h[i] = p * (1.0 - p);
        s[i] = (y[i] - p) * (y[i] - p);
    }
    const Matrix info = z.transpose() * h.asDiagonal() * z;
    const Matrix meat = z.transpose() * s.asDiagonal() * z;
    Eigen::LDLT<Matrix> ldlt(info);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) return 0.0;
    const Matrix bread = ldlt.solve(Matrix::Identity(info.rows(), info.cols()));
    const double var = (bread * meat * bread)(1, 1);
    return var > 0.0 && std::isfinite(var) ? std::sqrt(var) : 0.0;
}

struct SearchResult {
    double alpha = 0.0;
    double objective = 0.0;
    bool boundary = false;
};

/// Dense grid over [lo, hi] then golden-section refinement inside the
/// bracket around the best grid point.
SearchResult minimize_on_interval(const std::function<double(double)>& f, double lo, double hi, int points,
                                  double tol, std::vector<double>& grid, std::vector<double>& values) {
    grid.resize(static_cast<std::size_t>(points));
    values.resize(static_cast<std::size_t>(points));
    std::size_t best = 0;
    for (int g = 0; g < points; ++g) {
        const double a = lo + (hi - lo) * g / static_cast<double>(points - 1);
        grid[static_cast<std::size_t>(g)] = a;
        values[static_cast<std::size_t>(g)] = f(a);
        if (values[static_cast<std::size_t>(g)] < values[best]) best = static_cast<std::size_t>(g);
    }
    SearchResult res{grid[best], values[best], best == 0 || best + 1 == grid.size()};

    double a = grid[best == 0 ? 0 : best - 1];
    double b = grid[std::min(best + 1, grid.size() - 1)];
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    const double mid = 0.5 * (a + b);
    const double fmid = f(mid);
    if (fmid <= res.objective) {
        res.alpha = mid;
        res.objective = fmid;
    }
    return res;
}

}  // namespace

DmlEstimate dml_logit(const TreatmentProblem& problem, const DmlConfig& config) {
    const Vector& y = problem.y;
    const Vector& d = problem.d;
    const Matrix& x = problem.x;
    const Index n = y.size();
    const Index p = x.cols();
    detail::validate_problem(problem, Family::Logistic);
    if (!(config.level > 0.0 && config.level < 1.0)) throw InvalidArgument("level must lie in (0,1)");
    if (config.grid_points < 3) throw InvalidArgument("search grid needs at least 3 points");

    DmlEstimate est;
    est.treatment = problem.treatment;
    est.family = Family::Logistic;
    est.level = config.level;
    est.n = n;

    // Step 1: post-lasso logistic regression of y on (d, x); d sits in column 0.
    Matrix design(n, p + 1);
    design.col(0) = d;
    design.rightCols(p) = x;
    std::vector<std::string> names{problem.treatment};
    names.insert(names.end(), problem.control_names.begin(), problem.control_names.end());

    LassoOptions opts1;
    if (!config.penalize_treatment) opts1.unpenalized = {0};
    const Vector ones = Vector::Ones(n);
    const LassoFit fit1 = penalized_fit(Family::Logistic, design, y, ones, config.penalty, opts1);
    detail::append_warnings(est.warnings, fit1.warnings);
    const RefitResult refit1 = post_refit(fit1, design, y, ones, Family::Logistic, {0}, names);
    detail::append_warnings(est.warnings, refit1.warnings);
    est.diagnostics.step1_lambda = fit1.lambda;
    for (Index j : fit1.support) {
        if (j > 0) est.step1_support.push_back(j - 1);
    }

    NuisanceArtifacts& art = est.artifacts;
    art.alpha_tilde = refit1.coef[0];
    est.alpha_tilde = art.alpha_tilde;
    art.offset = (x * refit1.coef.tail(p)).array() + refit1.intercept;
    art.w_hat.resize(n);
    art.sigma2_hat.resize(n);
    art.f_hat.resize(n);
    const double var_floor = kProbClamp * (1.0 - kProbClamp);
    for (Index i = 0; i < n; ++i) {
        const double index = d[i] * art.alpha_tilde + art.offset[i];
        const double g = clamped_link(index);
        art.sigma2_hat[i] = g * (1.0 - g);
        art.w_hat[i] = std::max(link_deriv(index), var_floor);
        art.f_hat[i] = art.w_hat[i] / std::sqrt(art.sigma2_hat[i]);
    }
    {
        std::vector<Index> cols = refit1.columns;
        Matrix z(n, static_cast<Index>(cols.size()) + 1);
        z.col(0).setOnes();
        for (std::size_t k = 0; k < cols.size(); ++k) z.col(static_cast<Index>(k) + 1) = design.col(cols[k]);
        // Column 0 of the design (the treatment) is always the first refit column.
        art.pilot_se = pilot_sandwich_se(y, refit1.linear_index(design), z);
    }

    // Step 2: post-lasso weighted regression of f d on f x.
    const LassoFit fit2 = penalized_fit(Family::Linear, x, d, art.f_hat, config.penalty);
    detail::append_warnings(est.warnings, fit2.warnings);
    const RefitResult refit2 = post_refit(fit2, x, d, art.f_hat, Family::Linear,
                                          config.step2_union ? est.step1_support : std::vector<Index>{},
                                          problem.control_names);
    detail::append_warnings(est.warnings, refit2.warnings);
    est.step2_support = fit2.support;
    detail::check_support_sizes(n, fit1.support.size(), fit2.support.size());
    est.step1_names = detail::pick_names(problem.control_names, est.step1_support);
    est.step2_names = detail::pick_names(problem.control_names, est.step2_support);
    est.diagnostics.step2_lambda = fit2.lambda;

    const Vector d_fit = refit2.linear_index(x);
    art.v_hat = art.f_hat.cwiseProduct(d - d_fit);
    art.z_hat.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double sigma = std::sqrt(art.sigma2_hat[i]);
        art.z_hat[i] = config.instrument == InstrumentScaling::SqrtSigma ? art.v_hat[i] / std::sqrt(sigma)
                                                                         : art.v_hat[i] / sigma;
    }
    est.diagnostics.mean_z2 = art.z_hat.squaredNorm() / static_cast<double>(n);
    {
        const double fsum = art.f_hat.cwiseAbs2().sum();
        const double dbar = art.f_hat.cwiseAbs2().dot(d) / fsum;
        const double spread = art.f_hat.cwiseAbs2().dot((d.array() - dbar).matrix().cwiseAbs2()) / static_cast<double>(n);
        if (art.v_hat.squaredNorm() / static_cast<double>(n) <= 1e-12 * spread) {
            throw WeakInstrumentError("treatment is (almost) perfectly explained by the controls; mean(z^2) = " +
                                          std::to_string(est.diagnostics.mean_z2),
                                      est.diagnostics.mean_z2);
        }
    }
    est.diagnostics.weight_min = art.f_hat.minCoeff();
    est.diagnostics.weight_max = art.f_hat.maxCoeff();
    est.diagnostics.weight_mean = art.f_hat.mean();

    // Step 3: instrumental logistic scoring over the search set.
    const double radius =
        std::max(config.search_c0 / std::log(static_cast<double>(n)), 10.0 * art.pilot_se);
    est.diagnostics.search_low = art.alpha_tilde - radius;
    est.diagnostics.search_high = art.alpha_tilde + radius;
    const auto objective = [&](double a) { return iv_logit_objective(a, art, y, d); };
    const SearchResult sr =
        minimize_on_interval(objective, est.diagnostics.search_low, est.diagnostics.search_high, config.grid_points,
                             config.golden_tolerance, est.diagnostics.grid, est.diagnostics.grid_objective);
    est.alpha_check = sr.alpha;
    est.diagnostics.objective = sr.objective;
    est.diagnostics.boundary_hit = sr.boundary;
    if (sr.boundary) {
        est.warnings.push_back("dml_logit: minimizer of L_n lies on the boundary of the search interval");
    }

    // Sandwich of the orthogonal score at the estimate.
    double meat = 0.0;
    double jac = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double index = d[i] * est.alpha_check + art.offset[i];
        const double resid = y[i] - link(index);
        meat += resid * resid * art.z_hat[i] * art.z_hat[i];
        jac += link_deriv(index) * d[i] * art.z_hat[i];
    }
    meat /= static_cast<double>(n);
    jac /= static_cast<double>(n);
    if (!(std::abs(jac) > 0.0) || !(meat > 0.0)) {
        throw DegenerateMomentError("dml_logit: score Jacobian or variance vanishes at the estimate");
    }
    est.sigma_hat = std::sqrt(meat) / std::abs(jac);
    detail::finish_inference(est);
    return est;
}

DmlEstimate dml_logit(const Dataset& data, Index treatment, const DmlConfig& config) {
    return dml_logit(make_problem(data, treatment), config);
}

}  // namespace dml
