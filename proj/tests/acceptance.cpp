// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "dml/dml.hpp"
#include "dml/encoding.hpp"
#include "dml/lasso.hpp"
#include "dml/mc.hpp"
#include "encoding_support.hpp"
#include "instances.hpp"
#include "kkt.hpp"
#include "oracles.hpp"

using namespace dml;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const CoverageReport& report_for(const std::vector<CoverageReport>& reports, Method m) {
    for (const auto& r : reports) {
        if (r.method == to_string(m)) return r;
    }
    throw std::runtime_error(std::string("no report for ") + to_string(m));
}

Outcome coverage(Family family) {
    StudySpec study;
    study.dgp = sparse_fixture(family, 0.5);
    study.reps = 500;
    study.methods = {family == Family::Logistic ? Method::DmlLogit : Method::DmlLinear};
    study.base_seed = family == Family::Logistic ? 1000 : 2000;
    const CoverageReport r = run_study(study).front();
    // Failed replications count as misses.
    const double c = r.coverage_with_failures;
    return {c >= 0.90 && c <= 0.985,
            "coverage " + fmt("%.3f", c) + " in [0.90, 0.985], failures " + std::to_string(r.failures) + "/500"};
}

Outcome bias_contest() {
    StudySpec study;
    study.dgp = confounded_fixture();
    study.reps = 500;
    study.methods = {Method::DmlLinear, Method::NaiveLinear};
    study.base_seed = 3000;
    const auto reports = run_study(study);
    const CoverageReport& dml = report_for(reports, Method::DmlLinear);
    const CoverageReport& naive = report_for(reports, Method::NaiveLinear);
    const double bd = std::fabs(dml.mean_bias), bn = std::fabs(naive.mean_bias);
    const double bound = 0.1 * std::fabs(study.dgp.alpha0);
    return {dml.failures == 0 && naive.failures == 0 && bn >= 2.0 * bd && bd <= bound,
            "|bias| naive " + fmt("%.4f", bn) + ", dml " + fmt("%.4f", bd) + " (bound " + fmt("%.4f", bound) + ")"};
}

Outcome orthonormal_oracle() {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        CounterRng rng(seed, 40);
        const Index n = 100 + static_cast<Index>(rng.below(200));
        const Index k = 5 + static_cast<Index>(rng.below(30));
        const Matrix x = oracle::orthonormal_design(rng, n, k);
        const Vector beta = oracle::gaussian_vector(rng, k);
        const Vector y = (1.0 + (x * beta).array() + oracle::gaussian_vector(rng, n).array()).matrix();
        Vector loadings(k);
        for (Index j = 0; j < k; ++j) loadings(j) = 0.5 + rng.uniform();
        const double lambda = 2.0 * n * rng.uniform();
        const LassoFit fit = lasso_wls(x, y, Vector::Ones(n), lambda, loadings);
        for (Index j = 0; j < k; ++j) {
            const double closed = oracle::soft(x.col(j).dot(y) / n, lambda * loadings(j) / (2.0 * n));
            worst = std::max(worst, std::fabs(fit.coef(j) - closed));
        }
    }
    return {worst <= 1e-8, "max coefficient gap " + fmt("%.2e", worst) + " over 100 instances"};
}

Outcome kkt_certificates() {
    int bad = 0, unconverged = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const instances::Problem p = instances::wls(seed);
        const LassoFit fit = lasso_wls(p.x, p.y, p.w, p.lambda, p.loadings);
        if (!fit.converged) ++unconverged;
        const kkt::Report rep = kkt::wls(fit, p.x, p.y, p.w);
        worst = std::max(worst, rep.active);
        if (!rep.ok()) ++bad;
    }
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const instances::Problem p = instances::logistic(seed);
        const LassoFit fit = lasso_logistic(p.x, p.y, p.lambda, p.loadings);
        if (!fit.converged) ++unconverged;
        const kkt::Report rep = kkt::logistic(fit, p.x, p.y);
        worst = std::max(worst, rep.active);
        if (!rep.ok()) ++bad;
    }
    return {bad == 0 && unconverged == 0, std::to_string(bad) + " violations, " + std::to_string(unconverged) +
                                              " unconverged of 200, max active gap " + fmt("%.2e", worst)};
}

Outcome unpenalized_equivalence() {
    double logit_gap = 0.0, ols_gap = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CounterRng rng(seed, 60);
        const Index n = 400, k = 6;
        const Matrix x = oracle::gaussian_matrix(rng, n, k);
        const Vector eta = (0.3 + (x * oracle::gaussian_vector(rng, k) * 0.6).array()).matrix();
        Vector y(n);
        for (Index i = 0; i < n; ++i) y(i) = rng.uniform() < oracle::logistic(eta(i)) ? 1.0 : 0.0;
        const LassoFit fit = lasso_logistic(x, y, 0.0, Vector::Ones(k));
        const Vector ref = oracle::irls(x, y);
        logit_gap = std::max({logit_gap, std::fabs(fit.intercept - ref(0)),
                              (fit.coef - ref.tail(k)).cwiseAbs().maxCoeff()});
    }
    DmlConfig zero;
    zero.penalty.method = PenaltyMethod::Fixed;
    zero.penalty.fixed_lambda = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        DgpSpec spec = sparse_fixture(Family::Linear, 0.5);
        spec.n = 200;
        spec.p = 10;
        const TreatmentProblem prob = make_problem(gen_dgp(spec, seed).data, 0);
        Matrix z(prob.y.size(), prob.x.cols() + 1);
        z.col(0) = prob.d;
        z.rightCols(prob.x.cols()) = prob.x;
        const Vector ref = oracle::wls(oracle::with_intercept(z), prob.y, Vector::Ones(prob.y.size()));
        ols_gap = std::max(ols_gap, std::fabs(dml_linear(prob, zero).alpha_check - ref(1)));
    }
    return {logit_gap <= 1e-6 && ols_gap <= 1e-10,
            "IRLS gap " + fmt("%.2e", logit_gap) + ", OLS gap " + fmt("%.2e", ols_gap)};
}

Outcome internal_identities() {
    double weight_gap = 0.0, moment = 0.0, width_gap = 0.0;
    int grid_violations = 0, fits = 0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const TreatmentProblem prob =
            make_problem(gen_dgp(sparse_fixture(Family::Logistic, seed % 2 ? 0.5 : 0.0), 5000 + seed).data, 0);
        DmlConfig cfg;
        cfg.instrument = seed % 3 == 0 ? InstrumentScaling::Sigma : InstrumentScaling::SqrtSigma;
        cfg.step2_union = seed % 4 == 1;
        const DmlEstimate est = dml_logit(prob, cfg);
        const NuisanceArtifacts& a = est.artifacts;
        const Index n = prob.y.size();
        ++fits;
        for (Index i = 0; i < n; ++i) {
            weight_gap = std::max(weight_gap, std::fabs(a.f_hat(i) * a.f_hat(i) * a.sigma2_hat(i) - a.w_hat(i) * a.w_hat(i)));
        }
        for (Index j : est.step2_support) {
            const double m = a.v_hat.cwiseProduct(a.f_hat).dot(prob.x.col(j)) / static_cast<double>(n);
            const double scale = std::max(1.0, std::sqrt(a.v_hat.squaredNorm() / n) *
                                                   std::sqrt(a.f_hat.cwiseProduct(prob.x.col(j)).squaredNorm() / n));
            moment = std::max(moment, std::fabs(m) / scale);
        }
        const double at = iv_logit_objective(est.alpha_check, a, prob.y, prob.d);
        for (double g : est.diagnostics.grid) {
            if (iv_logit_objective(g, a, prob.y, prob.d) < at) ++grid_violations;
        }
        const double q = oracle::normal_quantile(1.0 - est.level / 2.0);
        width_gap = std::max(width_gap, std::fabs((est.ci_high - est.ci_low) - 2.0 * q * est.std_error));
    }
    return {weight_gap <= 1e-12 && moment <= 1e-6 && grid_violations == 0 && width_gap <= 1e-10,
            std::to_string(fits) + " fits: weight " + fmt("%.1e", weight_gap) + ", moment " + fmt("%.1e", moment) +
                ", grid violations " + std::to_string(grid_violations) + ", width " + fmt("%.1e", width_gap)};
}

Outcome null_calibration() {
    StudySpec study;
    study.dgp = sparse_fixture(Family::Logistic, 0.0);
    study.reps = 500;
    study.methods = {Method::DmlLogit};
    study.base_seed = 4000;
    const CoverageReport r = run_study(study).front();
    const double rate = r.rejection_rate;
    return {r.failures == 0 && rate >= 0.025 && rate <= 0.085,
            "rejection rate " + fmt("%.3f", rate) + " in [0.025, 0.085], failures " + std::to_string(r.failures)};
}

Outcome encoding_golden() {
    const fs::path out = fs::temp_directory_path() / "dml_acceptance_golden.csv";
    const Dataset coded = encode(load_table_file(DML_FIXTURE_DIR "/coding_raw.csv"),
                                 load_encoding_spec(DML_FIXTURE_DIR "/coding_spec.yaml"));
    write_dataset(coded, out.string());
    const bool golden = slurp(out) == slurp(DML_FIXTURE_DIR "/coding_expected.csv");
    fs::remove(out);
    fs::remove(out.string() + ".meta.yaml");

    const EncodingSpec schema = load_encoding_spec(DML_DATA_DIR "/synthetic_schema.yaml");
    const Dataset wide = encode(test_support::synthetic_raw(schema, 600, 5), schema);
    const bool shape = wide.p() == 329 && wide.count(Role::Treatment) == 26 && wide.count(Role::Control) == 303;
    return {golden && shape, std::string("golden ") + (golden ? "byte-exact" : "differs") + ", schema " +
                                 std::to_string(wide.p()) + " = " + std::to_string(wide.count(Role::Control)) + " + " +
                                 std::to_string(wide.count(Role::Treatment))};
}

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / "dml_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    DgpSpec spec = sparse_fixture(Family::Logistic, 0.5);
    spec.n = 400;
    spec.p = 40;
    const Draw draw = gen_dgp(spec, 11);
    std::vector<ColumnInfo> cols = draw.data.columns();
    for (std::size_t k = 1; k <= 3; ++k) cols[k].role = Role::Treatment;
    const std::string data = (dir / "data.csv").string();
    write_dataset(Dataset(draw.data.outcome_name(), draw.data.y(), draw.data.design(), cols), data);

    bool ok = true;
    auto run = [&](std::vector<std::string> args) {
        std::ostringstream out, err;
        ok = ok && cli::run(args, out, err) == cli::kExitOk;
    };
    for (const std::string tag : {"a1", "b1", "a4"}) {
        const std::string jobs = tag.substr(1);
        run({"fit", "--data", data, "--seed", "17", "--jobs", jobs, "--out", (dir / ("fit_" + tag)).string()});
        run({"simulate", "--spec", DML_DATA_DIR "/study_smoke.yaml", "--seed", "23", "--jobs", jobs, "--out",
             (dir / ("sim_" + tag)).string()});
    }
    const std::string f = slurp(dir / "fit_a1"), s = slurp(dir / "sim_a1");
    const bool same = !f.empty() && !s.empty() && f == slurp(dir / "fit_b1") && f == slurp(dir / "fit_a4") &&
                      s == slurp(dir / "sim_b1") && s == slurp(dir / "sim_a4");
    fs::remove_all(dir);
    return {ok && same, std::string("fit and simulate outputs ") + (same ? "identical" : "differ") +
                            " across reruns and jobs 1/4" + (ok ? "" : ", a command failed")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"A1 logistic coverage", [] { return coverage(Family::Logistic); }},
        {"A2 linear coverage", [] { return coverage(Family::Linear); }},
        {"A3 bias contest", bias_contest},
        {"A4 orthonormal oracle", orthonormal_oracle},
        {"A5 KKT certificates", kkt_certificates},
        {"A6 unpenalized equivalence", unpenalized_equivalence},
        {"A7 estimator identities", internal_identities},
        {"A8 null calibration", null_calibration},
        {"A9 encoding golden", encoding_golden},
        {"A10 determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt("%.1f", secs) << " s]"
                  << std::endl;
        if (!o.pass) ++failed;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
