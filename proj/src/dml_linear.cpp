#include <algorithm>
#include <cmath>

#include "dml/dml.hpp"
#include "dml/errors.hpp"
#include "dml_common.hpp"

namespace dml {

DmlEstimate dml_linear(const TreatmentProblem& problem, const DmlConfig& config) {
    const Vector& y = problem.y;
    const Vector& d = problem.d;
    const Matrix& x = problem.x;
    const Index n = y.size();
    detail::validate_problem(problem, Family::Linear);
    if (!(config.level > 0.0 && config.level < 1.0)) throw InvalidArgument("level must lie in (0,1)");

    DmlEstimate est;
    est.treatment = problem.treatment;
    est.family = Family::Linear;
    est.level = config.level;
    est.n = n;

    const Vector ones = Vector::Ones(n);
    const LassoFit fit_y = penalized_fit(Family::Linear, x, y, ones, config.penalty);
    const LassoFit fit_d = penalized_fit(Family::Linear, x, d, ones, config.penalty);
    detail::append_warnings(est.warnings, fit_y.warnings);
    detail::append_warnings(est.warnings, fit_d.warnings);
    est.step1_support = fit_y.support;
    est.step2_support = fit_d.support;
    est.step1_names = detail::pick_names(problem.control_names, est.step1_support);
    est.step2_names = detail::pick_names(problem.control_names, est.step2_support);
    est.diagnostics.step1_lambda = fit_y.lambda;
    est.diagnostics.step2_lambda = fit_d.lambda;

    std::vector<Index> keep = fit_y.support;
    keep.insert(keep.end(), fit_d.support.begin(), fit_d.support.end());
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    detail::check_support_sizes(n, keep.size() + 1, 0);

    const auto k = static_cast<Index>(keep.size()) + 2;
    Matrix z(n, k);
    z.col(0).setOnes();
    z.col(1) = d;
    std::vector<std::string> names{"(intercept)", problem.treatment};
    for (std::size_t j = 0; j < keep.size(); ++j) {
        z.col(static_cast<Index>(j) + 2) = x.col(keep[j]);
        names.push_back(static_cast<std::size_t>(keep[j]) < problem.control_names.size()
                            ? problem.control_names[static_cast<std::size_t>(keep[j])]
                            : "column " + std::to_string(keep[j]));
    }

    // Treatment variation left after partialling out the selected controls.
    {
        Matrix zx(n, k - 1);
        zx.col(0).setOnes();
        zx.rightCols(k - 2) = z.rightCols(k - 2);
        const Vector dres = d - zx * wls_fit(zx, d, ones).coef;
        const double dvar = (d.array() - d.mean()).square().mean();
        const double rvar = dres.squaredNorm() / static_cast<double>(n);
        est.diagnostics.mean_z2 = rvar;
        if (rvar <= 1e-12 * dvar) {
            throw WeakInstrumentError("treatment is (almost) perfectly explained by the selected controls; mean(v^2) = " +
                                          std::to_string(rvar),
                                      rvar);
        }
    }

    const WlsResult sol = wls_fit(z, y, ones, names);
    if (sol.ridge_applied) est.warnings.push_back("dml_linear: ridge floor applied to a near-singular final design");
    est.alpha_check = sol.coef[1];
    est.alpha_tilde = est.alpha_check;

    const Vector resid = y - z * sol.coef;
    const Matrix gram = z.transpose() * z;
    Eigen::LDLT<Matrix> ldlt(gram);
    const Matrix bread = ldlt.solve(Matrix::Identity(k, k));
    const Matrix meat = z.transpose() * resid.cwiseAbs2().asDiagonal() * z;
    const double hc1 = static_cast<double>(n) / static_cast<double>(n - k);
    const double var = (bread * meat * bread)(1, 1) * hc1;
    if (!(var > 0.0) || !std::isfinite(var)) {
        throw DegenerateMomentError("dml_linear: robust variance of the treatment coefficient vanishes");
    }
    est.sigma_hat = std::sqrt(var * static_cast<double>(n));
    detail::finish_inference(est);
    return est;
}

DmlEstimate dml_linear(const Dataset& data, Index treatment, const DmlConfig& config) {
    return dml_linear(make_problem(data, treatment), config);
}

}  // namespace dml
