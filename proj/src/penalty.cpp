#include <algorithm>
#include <cmath>
#include <limits>

#include "dml/errors.hpp"
#include "dml/lasso.hpp"
#include "dml/rng.hpp"

namespace dml {

double PenaltyConfig::gamma_for(Index n) const {
    if (gamma) return *gamma;
    return 0.1 / std::log(static_cast<double>(std::max<Index>(n, 3)));
}

double plugin_lambda(Index n, Index p, const PenaltyConfig& config) {
    if (n < 1 || p < 1) throw InvalidArgument("plugin_lambda: n and p must be at least 1");
    const double gamma = config.gamma_for(n);
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("plugin_lambda: gamma must lie in (0,1)");
    if (!(config.c >= 0.0)) throw InvalidArgument("plugin_lambda: c must be nonnegative");
    return config.c * std::sqrt(static_cast<double>(n)) *
           normal_quantile(1.0 - gamma / (2.0 * static_cast<double>(p)));
}

namespace {

double holdout_loss(Family family, const LassoFit& fit, const Matrix& x, const Vector& y, const Vector& w) {
    const Vector eta = fit.linear_index(x);
    if (family == Family::Linear) return (y - eta).cwiseAbs2().dot(w.cwiseAbs2()) / static_cast<double>(y.size());
    return 2.0 * logistic_loss(eta, y);
}

Matrix take_rows(const Matrix& x, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
    return out;
}

Vector take(const Vector& v, const std::vector<Index>& rows) {
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = v[rows[i]];
    return out;
}

}  // namespace

double cv_lambda(Family family, const Matrix& x, const Vector& y, const Vector& w, const Vector& loadings,
                 const PenaltyConfig& config, const LassoOptions& options) {
    const Index n = x.rows();
    const int folds = std::min<int>(config.folds, static_cast<int>(n));
    if (folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");

    const double top = lambda_max(family, x, y, w, loadings, options.unpenalized);
    if (!(top > 0.0)) return 0.0;
    constexpr int kGrid = 50;
    std::vector<double> grid(kGrid);
    for (int g = 0; g < kGrid; ++g) grid[static_cast<std::size_t>(g)] = top * std::pow(1e-3, g / double(kGrid - 1));

    CounterRng rng(config.cv_seed, 0xC5);
    const auto perm = rng.permutation(static_cast<std::size_t>(n));
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    for (std::size_t pos = 0; pos < perm.size(); ++pos) fold_of[perm[pos]] = static_cast<int>(pos % folds);

    std::vector<std::vector<double>> losses(kGrid, std::vector<double>(static_cast<std::size_t>(folds), 0.0));
    for (int f = 0; f < folds; ++f) {
        std::vector<Index> train;
        std::vector<Index> test;
        for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        const Matrix xt = take_rows(x, train);
        const Vector yt = take(y, train);
        const Vector wt = take(w, train);
        const Matrix xv = take_rows(x, test);
        const Vector yv = take(y, test);
        const Vector wv = take(w, test);
        if (family == Family::Logistic) {
            const double m = yt.mean();
            if (m <= 0.0 || m >= 1.0) throw DegenerateOutcomeError("cross-validation fold has a constant outcome");
        }

        LassoOptions warm = options;
        for (int g = 0; g < kGrid; ++g) {
            const double lam = grid[static_cast<std::size_t>(g)];
            const LassoFit fit = family == Family::Linear ? lasso_wls(xt, yt, wt, lam, loadings, warm)
                                                          : lasso_logistic(xt, yt, lam, loadings, warm);
            losses[static_cast<std::size_t>(g)][static_cast<std::size_t>(f)] = holdout_loss(family, fit, xv, yv, wv);
            warm.init_intercept = fit.intercept;
            warm.init_coef = fit.coef;
        }
    }

    std::vector<double> mean(kGrid);
    std::vector<double> se(kGrid);
    for (int g = 0; g < kGrid; ++g) {
        const auto& l = losses[static_cast<std::size_t>(g)];
        double m = 0.0;
        for (double v : l) m += v;
        m /= folds;
        double ss = 0.0;
        for (double v : l) ss += (v - m) * (v - m);
        mean[static_cast<std::size_t>(g)] = m;
        se[static_cast<std::size_t>(g)] = std::sqrt(ss / (folds - 1) / folds);
    }
    const auto best = static_cast<std::size_t>(std::min_element(mean.begin(), mean.end()) - mean.begin());
    if (!config.one_se_rule) return grid[best];
    const double bound = mean[best] + se[best];
    for (std::size_t g = 0; g <= best; ++g) {
        if (mean[g] <= bound) return grid[g];
    }
    return grid[best];
}

}  // namespace dml
