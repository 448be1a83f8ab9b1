#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dml/dataset.hpp"
#include "dml/dml.hpp"

namespace dml {

/// Coefficient pattern for the outcome (beta) and treatment (gamma) equations.
struct CoefPattern {
    enum class Kind { FirstS, GeometricDecay, Custom };
    Kind kind = Kind::FirstS;
    Index s = 5;             // FirstS: number of nonzero leading entries
    double magnitude = 0.5;  // FirstS value / GeometricDecay leading value
    double rate = 0.5;       // GeometricDecay: entry j = magnitude * rate^j
    std::vector<double> custom;  // Custom: leading entries, zero beyond

    Vector materialize(Index p) const;
};

enum class CorrelationKind { Exchangeable, AR1 };

/// Synthetic design with known truth:
///   d = x' gamma + nu,
///   linear:   y = intercept + alpha0 d + x' beta + eps,
///   logistic: y ~ Bernoulli(G(intercept + alpha0 d + x' beta)).
struct DgpSpec {
    Family family = Family::Logistic;
    Index n = 500;
    Index p = 100;
    double alpha0 = 0.5;
    CoefPattern beta;
    CoefPattern gamma;
    double nu_scale = 1.0;
    CorrelationKind correlation = CorrelationKind::AR1;
    double rho = 0.5;
    double intercept = 0.0;
    double eps_scale = 1.0;

    void validate() const;
};

struct Truth {
    double alpha0 = 0.0;
    double intercept = 0.0;
    Vector beta;
    Vector gamma;
    Matrix correlation;
};

struct Draw {
    Dataset data;  // column 0 is the treatment "d", then "x1".."xp"
    Truth truth;
};

/// Deterministic in (spec, seed).
Draw gen_dgp(const DgpSpec& spec, std::uint64_t seed);

/// Benchmark fixtures.
DgpSpec sparse_fixture(Family family, double alpha0);  // n=500, p=100, s=5
DgpSpec confounded_fixture();                          // single-selection failure regime

/// Single selection on the outcome equation (treatment unpenalized), refit of
/// y on d plus the selected controls, conventional standard errors. The
/// biased comparator for the debiased estimators.
DmlEstimate naive_fit(const TreatmentProblem& problem, Family family, const DmlConfig& config = {});
DmlEstimate naive_fit(const Dataset& data, Index treatment, Family family, const DmlConfig& config = {});

enum class Method { DmlLogit, DmlLinear, NaiveLogit, NaiveLinear };
const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct StudySpec {
    DgpSpec dgp;
    int reps = 100;
    std::vector<Method> methods{Method::DmlLogit};
    double level = 0.05;
    std::uint64_t base_seed = 1;
    DmlConfig config;
    int jobs = 1;
    /// Upper bound on failed replications per method (fraction of reps).
    double max_failure_rate = 0.1;
};

struct CoverageReport {
    std::string method;
    int reps = 0;
    int successes = 0;
    int failures = 0;
    std::map<std::string, int> failure_reasons;
    double alpha0 = 0.0;
    double level = 0.05;
    double mean_bias = 0.0;
    double median_bias = 0.0;
    double sd = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;  // over successes
    double coverage_with_failures = 0.0;  // failures counted as misses
    double mean_ci_width = 0.0;
    double rejection_rate = 0.0;
    /// Dataset checksum consumed by each replication (paired-seed audit).
    std::vector<std::uint64_t> data_checksums;
    std::vector<double> estimates;  // per replication, NaN on failure
    std::vector<double> p_values;

    double failure_rate() const { return reps > 0 ? static_cast<double>(failures) / reps : 0.0; }
};

/// Replication r of every method consumes gen_dgp(dgp, base_seed + r).
std::vector<CoverageReport> run_study(const StudySpec& study);

StudySpec parse_study_spec(const std::string& yaml_text);
StudySpec load_study_spec(const std::string& path);
std::string dump_study_spec(const StudySpec& study);
std::string dump_coverage_reports(const std::vector<CoverageReport>& reports);
std::vector<CoverageReport> parse_coverage_reports(const std::string& yaml_text);
std::string render_coverage_table(const std::vector<CoverageReport>& reports);

}  // namespace dml
