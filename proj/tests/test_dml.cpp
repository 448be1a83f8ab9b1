#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "dml/dml.hpp"
#include "dml/encoding.hpp"
#include "dml/errors.hpp"
#include "dml/mc.hpp"
#include "encoding_support.hpp"
#include "oracles.hpp"

using namespace dml;

namespace {

TreatmentProblem sparse_problem(Family family, double alpha0, std::uint64_t seed) {
    return make_problem(gen_dgp(sparse_fixture(family, alpha0), seed).data, 0);
}

DmlConfig zero_penalty() {
    DmlConfig cfg;
    cfg.penalty.method = PenaltyMethod::Fixed;
    cfg.penalty.fixed_lambda = 0.0;
    return cfg;
}

int hardware_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

bool same(const DmlEstimate& a, const DmlEstimate& b) {
    return a.alpha_check == b.alpha_check && a.std_error == b.std_error && a.ci_low == b.ci_low &&
           a.ci_high == b.ci_high && a.p_value == b.p_value && a.step1_support == b.step1_support &&
           a.step2_support == b.step2_support && a.warnings == b.warnings;
}

// Checks that hold for every logistic estimate by construction.
void check_identities(const DmlEstimate& est, const TreatmentProblem& prob) {
    const NuisanceArtifacts& a = est.artifacts;
    const Index n = prob.y.size();
    for (Index i = 0; i < n; ++i) {
        CHECK(a.sigma2_hat(i) > 0.0);
        CHECK(a.sigma2_hat(i) <= 0.25);
        CHECK(std::fabs(a.f_hat(i) * a.f_hat(i) * a.sigma2_hat(i) - a.w_hat(i) * a.w_hat(i)) <= 1e-12);
        CHECK(a.f_hat(i) == doctest::Approx(a.w_hat(i) / std::sqrt(a.sigma2_hat(i))).epsilon(1e-14));
    }
    for (Index j : est.step2_support) {
        const double moment = a.v_hat.cwiseProduct(a.f_hat).dot(prob.x.col(j)) / static_cast<double>(n);
        const double scale = std::max(1.0, std::sqrt(a.v_hat.squaredNorm() / n) *
                                               std::sqrt(a.f_hat.cwiseProduct(prob.x.col(j)).squaredNorm() / n));
        CHECK(std::fabs(moment) <= 1e-6 * scale);
    }
    const double at = iv_logit_objective(est.alpha_check, a, prob.y, prob.d);
    CHECK(at == doctest::Approx(est.diagnostics.objective).epsilon(1e-12));
    for (double g : est.diagnostics.grid) CHECK(at <= iv_logit_objective(g, a, prob.y, prob.d));
    CHECK(est.alpha_check >= est.diagnostics.search_low);
    CHECK(est.alpha_check <= est.diagnostics.search_high);
}

void check_interval(const DmlEstimate& est) {
    CHECK(est.ci_low <= est.alpha_check);
    CHECK(est.alpha_check <= est.ci_high);
    const double q = oracle::normal_quantile(1.0 - est.level / 2.0);
    CHECK(std::fabs((est.ci_high - est.ci_low) - 2.0 * q * est.std_error) <= 1e-10);
    CHECK(est.std_error == doctest::Approx(est.sigma_hat / std::sqrt(static_cast<double>(est.n))).epsilon(1e-14));
    CHECK(est.p_value == doctest::Approx(std::erfc(std::fabs(est.alpha_check) / est.std_error / std::sqrt(2.0)))
                             .epsilon(1e-12));
    const bool excludes_zero = est.ci_low > 0.0 || est.ci_high < 0.0;
    const double edge = std::min(std::fabs(est.ci_low), std::fabs(est.ci_high));
    if (edge > 1e-10 * est.std_error) CHECK((est.p_value < est.level) == excludes_zero);
}

}  // namespace

TEST_CASE("iv_logit_objective examples") {
    NuisanceArtifacts one;
    one.offset = Vector::Constant(1, std::log(3.0));
    one.z_hat = Vector::Constant(1, 2.0);
    const Vector y1 = Vector::Ones(1);
    const Vector d1 = Vector::Zero(1);
    CHECK(iv_logit_objective(0.7, one, y1, d1) == doctest::Approx(1.0).epsilon(1e-14));

    NuisanceArtifacts pair;
    pair.offset = Vector::Constant(2, std::log(3.0));
    pair.z_hat = Vector::Ones(2);
    Vector y2(2);
    y2 << 1.0, 0.5;
    CHECK(iv_logit_objective(0.0, pair, y2, Vector::Zero(2)) == doctest::Approx(0.0).epsilon(1e-30));

    NuisanceArtifacts dead = pair;
    dead.z_hat.setZero();
    CHECK_THROWS_AS(iv_logit_objective(0.0, dead, y2, Vector::Zero(2)), DegenerateMomentError);
}

TEST_CASE("iv_logit_objective is invariant to rescaling the instrument") {
    const TreatmentProblem prob = sparse_problem(Family::Logistic, 0.5, 3);
    const DmlEstimate est = dml_logit(prob);
    for (double k : {-3.0, 0.01, 7.5}) {
        NuisanceArtifacts scaled = est.artifacts;
        scaled.z_hat *= k;
        for (double a : {-1.0, 0.0, 0.4, est.alpha_check, 2.0}) {
            CHECK(iv_logit_objective(a, scaled, prob.y, prob.d) ==
                  doctest::Approx(iv_logit_objective(a, est.artifacts, prob.y, prob.d)).epsilon(1e-12));
        }
    }
}

TEST_CASE("dml_logit identities hold across fits and settings") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const TreatmentProblem prob = sparse_problem(Family::Logistic, seed % 2 == 0 ? 0.0 : 0.5, seed);
        DmlConfig cfg;
        cfg.instrument = seed % 3 == 0 ? InstrumentScaling::Sigma : InstrumentScaling::SqrtSigma;
        cfg.step2_union = seed % 4 == 1;
        cfg.penalize_treatment = seed % 5 == 2;
        cfg.level = seed % 2 == 0 ? 0.05 : 0.1;
        const DmlEstimate est = dml_logit(prob, cfg);
        check_identities(est, prob);
        check_interval(est);
        CHECK(est.diagnostics.grid.size() == 401);
        CHECK(std::is_sorted(est.step1_support.begin(), est.step1_support.end()));
    }
}

TEST_CASE("dml_logit follows the weight and instrument definitions") {
    const TreatmentProblem prob = sparse_problem(Family::Logistic, 0.5, 4);
    const DmlEstimate est = dml_logit(prob);
    const NuisanceArtifacts& a = est.artifacts;
    for (Index i = 0; i < prob.y.size(); ++i) {
        const long double index = prob.d(i) * a.alpha_tilde + a.offset(i);
        const long double g = oracle::logistic(index);
        CHECK(a.w_hat(i) == doctest::Approx(static_cast<double>(g * (1 - g))).epsilon(1e-12));
        CHECK(a.z_hat(i) == doctest::Approx(a.v_hat(i) / std::sqrt(std::sqrt(a.sigma2_hat(i)))).epsilon(1e-14));
    }
    DmlConfig sigma;
    sigma.instrument = InstrumentScaling::Sigma;
    const DmlEstimate alt = dml_logit(prob, sigma);
    for (Index i = 0; i < prob.y.size(); ++i) {
        CHECK(alt.artifacts.z_hat(i) ==
              doctest::Approx(alt.artifacts.v_hat(i) / std::sqrt(alt.artifacts.sigma2_hat(i))).epsilon(1e-14));
    }
    // The scoring variance in closed form at the estimate.
    long double meat = 0.0L, jac = 0.0L;
    for (Index i = 0; i < prob.y.size(); ++i) {
        const long double g = oracle::logistic(prob.d(i) * est.alpha_check + a.offset(i));
        meat += (prob.y(i) - g) * (prob.y(i) - g) * a.z_hat(i) * a.z_hat(i);
        jac += g * (1 - g) * prob.d(i) * a.z_hat(i);
    }
    const double sigma_ref = static_cast<double>(std::sqrt(meat / prob.y.size()) / std::fabs(jac / prob.y.size()));
    CHECK(est.sigma_hat == doctest::Approx(sigma_ref).epsilon(1e-10));
}

TEST_CASE("dml_logit is deterministic") {
    const TreatmentProblem prob = sparse_problem(Family::Logistic, 0.5, 5);
    CHECK(same(dml_logit(prob), dml_logit(prob)));
}

TEST_CASE("dml_logit input errors") {
    TreatmentProblem prob = sparse_problem(Family::Logistic, 0.5, 6);

    TreatmentProblem constant_d = prob;
    constant_d.d.setConstant(1.0);
    CHECK_THROWS_AS(dml_logit(constant_d), DegenerateTreatmentError);

    TreatmentProblem constant_y = prob;
    constant_y.y.setOnes();
    CHECK_THROWS_AS(dml_logit(constant_y), DegenerateOutcomeError);

    TreatmentProblem real_y = prob;
    real_y.y(0) = 0.5;
    CHECK_THROWS_AS(dml_logit(real_y), InvalidArgument);

    TreatmentProblem explained = prob;
    explained.d = explained.x.col(0) - 0.5 * explained.x.col(1);
    try {
        dml_logit(explained);
        FAIL("expected a weak-instrument error");
    } catch (const WeakInstrumentError& e) {
        CHECK(e.mean_z2() >= 0.0);
        CHECK(std::string(e.what()).find("mean(z^2)") != std::string::npos);
    }

    DmlConfig bad_level;
    bad_level.level = 1.5;
    CHECK_THROWS_AS(dml_logit(prob, bad_level), InvalidArgument);

    TreatmentProblem tiny = prob;
    tiny.y = prob.y.head(8);
    tiny.d = prob.d.head(8);
    tiny.x = prob.x.topRows(8);
    CHECK_THROWS_AS(dml_logit(tiny), Error);
}

TEST_CASE("dml_linear with zero penalties equals full least squares") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        DgpSpec spec = sparse_fixture(Family::Linear, 0.5);
        spec.n = 120;
        spec.p = 8;
        const TreatmentProblem prob = make_problem(gen_dgp(spec, seed).data, 0);
        Matrix z(prob.y.size(), prob.x.cols() + 1);
        z.col(0) = prob.d;
        z.rightCols(prob.x.cols()) = prob.x;
        const Vector ref = oracle::wls(oracle::with_intercept(z), prob.y, Vector::Ones(prob.y.size()));

        const DmlEstimate est = dml_linear(prob, zero_penalty());
        CHECK(std::fabs(est.alpha_check - ref(1)) <= 1e-10);
        CHECK(est.step1_support.size() == static_cast<std::size_t>(prob.x.cols()));
        CHECK(est.step2_support.size() == static_cast<std::size_t>(prob.x.cols()));

        // HC1 sandwich on [1, d, x].
        const Matrix full = oracle::with_intercept(z);
        const Vector e = prob.y - full * ref;
        const Matrix bread = (full.transpose() * full).inverse();
        const Matrix meat = full.transpose() * e.cwiseAbs2().asDiagonal() * full;
        const double n = static_cast<double>(full.rows()), k = static_cast<double>(full.cols());
        const double hc1 = std::sqrt((bread * meat * bread)(1, 1) * n / (n - k));
        CHECK(est.std_error == doctest::Approx(hc1).epsilon(1e-8));
        check_interval(est);

        const DmlEstimate naive = naive_fit(prob, Family::Linear, zero_penalty());
        CHECK(std::fabs(naive.alpha_check - est.alpha_check) <= 1e-10);
    }
}

TEST_CASE("dml_linear errors and determinism") {
    TreatmentProblem prob = sparse_problem(Family::Linear, 0.0, 7);
    CHECK(same(dml_linear(prob), dml_linear(prob)));
    TreatmentProblem constant_d = prob;
    constant_d.d.setZero();
    CHECK_THROWS_AS(dml_linear(constant_d), DegenerateTreatmentError);
    TreatmentProblem constant_y = prob;
    constant_y.y.setConstant(2.0);
    CHECK_THROWS_AS(dml_linear(constant_y), DegenerateOutcomeError);
}

TEST_CASE("dml_multi reduces to the single-treatment call and validates its list") {
    const Draw draw = gen_dgp(sparse_fixture(Family::Logistic, 0.5), 8);
    const MultiResult one = dml_multi(draw.data, {"d"}, Family::Logistic);
    REQUIRE(one.rows.size() == 1);
    REQUIRE(one.rows[0].estimate);
    CHECK(same(*one.rows[0].estimate, dml_logit(draw.data, 0)));
    CHECK_FALSE(one.multiplicity_adjusted);

    CHECK_THROWS_AS(dml_multi(draw.data, {"d", "d"}, Family::Logistic), InvalidArgument);
    CHECK_THROWS_AS(dml_multi(draw.data, {}, Family::Logistic), InvalidArgument);
    CHECK_THROWS_AS(dml_multi(draw.data, {"nope"}, Family::Logistic), InvalidArgument);
}

TEST_CASE("dml_multi appends the other treatments to the controls") {
    const Draw draw = gen_dgp(sparse_fixture(Family::Linear, 0.5), 9);
    const MultiResult res = dml_multi(draw.data, {"x2", "d"}, Family::Linear);
    REQUIRE(res.rows.size() == 2);
    CHECK(res.rows[0].treatment == "x2");
    CHECK(res.rows[1].treatment == "d");
    const Index x2 = draw.data.require_index("x2");
    std::vector<Index> controls;
    for (Index j = 0; j < draw.data.p(); ++j)
        if (j != 0 && j != x2) controls.push_back(j);
    controls.push_back(0);
    CHECK(same(*res.rows[0].estimate, dml_linear(make_problem(draw.data, x2, controls))));
}

TEST_CASE("dml_multi records failures and continues unless fail-fast") {
    const Draw draw = gen_dgp(sparse_fixture(Family::Logistic, 0.5), 10);
    Matrix design = draw.data.design();
    std::vector<ColumnInfo> cols = draw.data.columns();
    design.col(1).setConstant(3.0);
    cols[1].role = Role::Treatment;
    const Dataset data(draw.data.outcome_name(), draw.data.y(), design, cols);
    const MultiResult res = dml_multi(data, {"x1", "d"}, Family::Logistic);
    REQUIRE(res.rows.size() == 2);
    CHECK_FALSE(res.rows[0].estimate);
    CHECK_FALSE(res.rows[0].error.empty());
    CHECK(res.rows[1].estimate);

    DmlConfig fast;
    fast.fail_fast = true;
    try {
        dml_multi(data, {"x1", "d"}, Family::Logistic, fast);
        FAIL("expected an estimation error");
    } catch (const EstimationError& e) {
        CHECK(e.treatment() == "x1");
    }
}

TEST_CASE("dml_multi over a 26-treatment layout returns rows in request order") {
    const EncodingSpec spec = load_encoding_spec(DML_DATA_DIR "/synthetic_schema.yaml");
    const Dataset data = encode(test_support::synthetic_raw(spec, 1500, 21), spec);
    std::vector<std::string> treatments;
    for (Index j : data.indices_with_role(Role::Treatment)) treatments.push_back(data.column_info(j).name);
    REQUIRE(treatments.size() == 26);
    std::reverse(treatments.begin(), treatments.end());
    DmlConfig cfg;
    cfg.jobs = hardware_jobs();
    const MultiResult res = dml_multi(data, treatments, Family::Logistic, cfg);
    REQUIRE(res.rows.size() == 26);
    for (std::size_t k = 0; k < 26; ++k) {
        CHECK(res.rows[k].treatment == treatments[k]);
        if (res.rows[k].estimate) check_interval(*res.rows[k].estimate);
    }
    cfg.jobs = 1;
    const MultiResult serial = dml_multi(data, {treatments[0], treatments[5]}, Family::Logistic, cfg);
    REQUIRE(serial.rows[0].estimate);
    cfg.jobs = 3;
    const MultiResult threaded = dml_multi(data, {treatments[0], treatments[5]}, Family::Logistic, cfg);
    CHECK(same(*serial.rows[0].estimate, *threaded.rows[0].estimate));
}

TEST_CASE("Monte Carlo: irrelevant controls and an exogenous treatment") {
    StudySpec study;
    study.dgp.family = Family::Logistic;
    study.dgp.n = 2000;
    study.dgp.p = 50;
    study.dgp.alpha0 = 0.5;
    study.dgp.beta.kind = CoefPattern::Kind::Custom;
    study.dgp.gamma.kind = CoefPattern::Kind::Custom;
    study.reps = 200;
    study.methods = {Method::DmlLogit};
    study.jobs = hardware_jobs();
    const CoverageReport rep = run_study(study).front();
    CHECK(rep.failures == 0);
    CHECK(std::fabs(rep.mean_bias) <= 0.05);
    CHECK(rep.coverage >= 0.90);
}

TEST_CASE("Monte Carlo: p-values are uniform under the null") {
    StudySpec study;
    study.dgp = sparse_fixture(Family::Logistic, 0.0);
    study.reps = 500;
    study.methods = {Method::DmlLogit};
    study.jobs = hardware_jobs();
    const CoverageReport rep = run_study(study).front();
    std::vector<double> p;
    for (double v : rep.p_values)
        if (std::isfinite(v)) p.push_back(v);
    std::sort(p.begin(), p.end());
    double ks = 0.0;
    const double m = static_cast<double>(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        ks = std::max({ks, std::fabs((k + 1) / m - p[k]), std::fabs(p[k] - k / m)});
    }
    CHECK(p.size() >= 490);
    CHECK(ks < 0.1);
}
