#include <cmath>

#include "dml/errors.hpp"
#include "dml/mc.hpp"
#include "dml/rng.hpp"
#include "dml_common.hpp"

namespace dml {

Vector CoefPattern::materialize(Index p) const {
    Vector v = Vector::Zero(p);
    switch (kind) {
        case Kind::FirstS:
            for (Index j = 0; j < std::min(s, p); ++j) v[j] = magnitude;
            break;
        case Kind::GeometricDecay:
            for (Index j = 0; j < p; ++j) v[j] = magnitude * std::pow(rate, static_cast<double>(j));
            break;
        case Kind::Custom:
            for (std::size_t j = 0; j < custom.size() && static_cast<Index>(j) < p; ++j) {
                v[static_cast<Index>(j)] = custom[j];
            }
            break;
    }
    return v;
}

void DgpSpec::validate() const {
    if (n < 1 || p < 1) throw InvalidArgument("dgp: n and p must be positive");
    for (const CoefPattern* pat : {&beta, &gamma}) {
        if (pat->kind == CoefPattern::Kind::FirstS && (pat->s < 0 || pat->s > p)) {
            throw InvalidArgument("dgp: sparsity s must lie in [0, p]");
        }
        if (pat->kind == CoefPattern::Kind::Custom && static_cast<Index>(pat->custom.size()) > p) {
            throw InvalidArgument("dgp: custom coefficient vector longer than p");
        }
        if (pat->kind == CoefPattern::Kind::GeometricDecay && !(std::abs(pat->rate) < 1.0)) {
            throw InvalidArgument("dgp: geometric decay rate must satisfy |rate| < 1");
        }
    }
    if (!(rho > -1.0 && rho < 1.0)) throw InvalidArgument("dgp: rho must lie in (-1, 1)");
    if (!(nu_scale > 0.0) || !(eps_scale > 0.0)) throw InvalidArgument("dgp: noise scales must be positive");
    if (!std::isfinite(alpha0) || !std::isfinite(intercept)) throw InvalidArgument("dgp: non-finite parameter");
}

Draw gen_dgp(const DgpSpec& spec, std::uint64_t seed) {
    spec.validate();
    const Index n = spec.n;
    const Index p = spec.p;

    Truth truth;
    truth.alpha0 = spec.alpha0;
    truth.intercept = spec.intercept;
    truth.beta = spec.beta.materialize(p);
    truth.gamma = spec.gamma.materialize(p);
    truth.correlation.resize(p, p);
    for (Index a = 0; a < p; ++a) {
        for (Index b = 0; b < p; ++b) {
            truth.correlation(a, b) = a == b ? 1.0
                                      : spec.correlation == CorrelationKind::AR1
                                          ? std::pow(spec.rho, static_cast<double>(std::abs(a - b)))
                                          : spec.rho;
        }
    }
    Matrix chol;
    if (spec.correlation == CorrelationKind::Exchangeable) {
        Eigen::LLT<Matrix> llt(truth.correlation);
        if (llt.info() != Eigen::Success) throw InvalidArgument("dgp: exchangeable correlation is not positive definite");
        chol = llt.matrixL();
    }

    CounterRng rng(seed, 0);
    Matrix design(n, p + 1);
    Vector y(n);
    Vector e(p);
    const double innov = std::sqrt(1.0 - spec.rho * spec.rho);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) e[j] = rng.normal();
        Vector xi(p);
        if (spec.correlation == CorrelationKind::AR1) {
            xi[0] = e[0];
            for (Index j = 1; j < p; ++j) xi[j] = spec.rho * xi[j - 1] + innov * e[j];
        } else {
            xi = chol * e;
        }
        const double d = xi.dot(truth.gamma) + spec.nu_scale * rng.normal();
        const double index = spec.intercept + spec.alpha0 * d + xi.dot(truth.beta);
        if (spec.family == Family::Linear) {
            y[i] = index + spec.eps_scale * rng.normal();
        } else {
            y[i] = rng.uniform() < link(index) ? 1.0 : 0.0;
        }
        design(i, 0) = d;
        design.row(i).tail(p) = xi.transpose();
    }

    std::vector<ColumnInfo> cols;
    ColumnInfo dcol;
    dcol.name = "d";
    dcol.role = Role::Treatment;
    dcol.source = "d";
    cols.push_back(dcol);
    for (Index j = 0; j < p; ++j) {
        ColumnInfo c;
        c.name = "x" + std::to_string(j + 1);
        c.role = Role::Control;
        c.source = c.name;
        cols.push_back(std::move(c));
    }
    return Draw{Dataset("y", std::move(y), std::move(design), std::move(cols)), std::move(truth)};
}

DgpSpec sparse_fixture(Family family, double alpha0) {
    DgpSpec spec;
    spec.family = family;
    spec.n = 500;
    spec.p = 100;
    spec.alpha0 = alpha0;
    spec.beta = {CoefPattern::Kind::FirstS, 5, 1.0, 0.5, {}};
    spec.gamma = {CoefPattern::Kind::FirstS, 5, 0.25, 0.5, {}};
    spec.nu_scale = 1.0;
    spec.correlation = CorrelationKind::AR1;
    spec.rho = 0.5;
    return spec;
}

DgpSpec confounded_fixture() {
    DgpSpec spec;
    spec.family = Family::Linear;
    spec.n = 500;
    spec.p = 200;
    spec.alpha0 = 0.5;
    // Five nonzero controls, magnitude 0.5 halving, except the confounder x1
    // whose direct effect is weak.
    spec.beta.kind = CoefPattern::Kind::Custom;
    spec.beta.custom = {0.15, 0.5, 0.25, 0.125, 0.0625};
    // d = (4/3) x1 + nu with unit-variance nu gives corr(x1, d) = 0.8.
    spec.gamma.kind = CoefPattern::Kind::Custom;
    spec.gamma.custom = {4.0 / 3.0};
    spec.nu_scale = 1.0;
    spec.correlation = CorrelationKind::AR1;
    spec.rho = 0.0;
    spec.eps_scale = 1.0;
    return spec;
}

DmlEstimate naive_fit(const TreatmentProblem& problem, Family family, const DmlConfig& config) {
    detail::validate_problem(problem, family);
    const Index n = problem.y.size();
    const Index p = problem.x.cols();

    DmlEstimate est;
    est.treatment = problem.treatment;
    est.family = family;
    est.level = config.level;
    est.n = n;

    Matrix design(n, p + 1);
    design.col(0) = problem.d;
    design.rightCols(p) = problem.x;
    LassoOptions opts;
    opts.unpenalized = {0};
    const Vector ones = Vector::Ones(n);
    const LassoFit fit = penalized_fit(family, design, problem.y, ones, config.penalty, opts);
    detail::append_warnings(est.warnings, fit.warnings);
    for (Index j : fit.support) est.step1_support.push_back(j - 1);
    est.step1_names = detail::pick_names(problem.control_names, est.step1_support);
    est.diagnostics.step1_lambda = fit.lambda;
    detail::check_support_sizes(n, fit.support.size() + 1, 0);

    const RefitResult refit = post_refit(fit, design, problem.y, ones, family, {0});
    detail::append_warnings(est.warnings, refit.warnings);
    est.alpha_check = refit.coef[0];
    est.alpha_tilde = est.alpha_check;

    // Conventional covariance over [1, refit columns]; the treatment is the first refit column.
    const auto k = static_cast<Index>(refit.columns.size()) + 1;
    Matrix z(n, k);
    z.col(0).setOnes();
    for (std::size_t c = 0; c < refit.columns.size(); ++c) z.col(static_cast<Index>(c) + 1) = design.col(refit.columns[c]);
    const Vector eta = refit.linear_index(design);
    double var = 0.0;
    if (family == Family::Linear) {
        const double s2 = (problem.y - eta).squaredNorm() / static_cast<double>(n - k);
        const Matrix inv = (z.transpose() * z).ldlt().solve(Matrix::Identity(k, k));
        var = s2 * inv(1, 1);
    } else {
        Vector h(n);
        for (Index i = 0; i < n; ++i) h[i] = link_deriv(eta[i]);
        const Matrix info = z.transpose() * h.asDiagonal() * z;
        var = info.ldlt().solve(Matrix::Identity(k, k))(1, 1);
    }
    if (!(var > 0.0) || !std::isfinite(var)) throw DegenerateMomentError("naive_fit: variance of the treatment coefficient vanishes");
    est.sigma_hat = std::sqrt(var * static_cast<double>(n));
    detail::finish_inference(est);
    return est;
}

DmlEstimate naive_fit(const Dataset& data, Index treatment, Family family, const DmlConfig& config) {
    return naive_fit(make_problem(data, treatment), family, config);
}

}  // namespace dml
