#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dml/dataset.hpp"
#include "dml/lasso.hpp"

namespace dml {

/// How the step-2 residual is turned into the step-3 instrument.
enum class InstrumentScaling {
    SqrtSigma,  // z = v / sqrt(sigma), the printed algorithm
    Sigma,      // z = v / sigma
};

const char* to_string(InstrumentScaling s);

struct DmlConfig {
    PenaltyConfig penalty;
    /// Penalize the treatment in the step-1 logistic lasso (literal joint l1 norm).
    bool penalize_treatment = false;
    InstrumentScaling instrument = InstrumentScaling::SqrtSigma;
    /// Also keep the step-1 controls in the step-2 refit, so the instrument is
    /// orthogonal to every control entering the offset.
    bool step2_union = false;
    /// Two-sided level xi of the confidence interval.
    double level = 0.05;
    /// Search half-width is max(search_c0 / log n, 10 * pilot se).
    double search_c0 = 1.0;
    int grid_points = 401;
    double golden_tolerance = 1e-10;
    bool fail_fast = false;
    int jobs = 1;
};

/// Per-observation nuisance quantities of the logistic procedure.
struct NuisanceArtifacts {
    Vector offset;      // intercept + x' beta_tilde
    Vector w_hat;       // G'(d alpha_tilde + offset)
    Vector sigma2_hat;  // G(1 - G) at the same index, clamped
    Vector f_hat;       // w_hat / sigma_hat
    Vector v_hat;       // f_hat * (d - x' theta_tilde)
    Vector z_hat;       // instrument
    double alpha_tilde = 0.0;
    double pilot_se = 0.0;
};

struct DmlDiagnostics {
    double search_low = 0.0;
    double search_high = 0.0;
    double objective = 0.0;  // L_n at the estimate
    bool boundary_hit = false;
    std::vector<double> grid;   // search grid
    std::vector<double> grid_objective;
    double weight_min = 0.0;
    double weight_mean = 0.0;
    double weight_max = 0.0;
    double mean_z2 = 0.0;
    double step1_lambda = 0.0;
    double step2_lambda = 0.0;
};

struct DmlEstimate {
    std::string treatment;
    Family family = Family::Logistic;
    double alpha_check = 0.0;
    double alpha_tilde = 0.0;
    double sigma_hat = 0.0;  // Sigma_n; std_error = sigma_hat / sqrt(n)
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;
    double level = 0.05;
    Index n = 0;
    std::vector<Index> step1_support;  // indices into the control block
    std::vector<Index> step2_support;
    std::vector<std::string> step1_names;
    std::vector<std::string> step2_names;
    DmlDiagnostics diagnostics;
    NuisanceArtifacts artifacts;  // logistic family only
    std::vector<std::string> warnings;
};

/// Outcome, treatment and control block for one estimation problem.
struct TreatmentProblem {
    Vector y;
    Vector d;
    Matrix x;
    std::string treatment;
    std::vector<std::string> control_names;
};

/// Extracts treatment `treatment` and `controls` (all other columns when empty).
TreatmentProblem make_problem(const Dataset& data, Index treatment, const std::vector<Index>& controls = {});

/// L_n(alpha) = |mean[(y - G(d alpha + offset)) z]|^2 / mean[(y - G(d alpha + offset))^2 z^2].
double iv_logit_objective(double alpha, const NuisanceArtifacts& artifacts, const Vector& y, const Vector& d);

/// Three-step debiased logistic estimator: post-lasso logit, weighted
/// post-lasso instrument regression, instrumental scoring on a search set.
DmlEstimate dml_logit(const TreatmentProblem& problem, const DmlConfig& config = {});
DmlEstimate dml_logit(const Dataset& data, Index treatment, const DmlConfig& config = {});

/// Double selection for a linear outcome with a heteroskedasticity-robust
/// (HC1) standard error.
DmlEstimate dml_linear(const TreatmentProblem& problem, const DmlConfig& config = {});
DmlEstimate dml_linear(const Dataset& data, Index treatment, const DmlConfig& config = {});

struct TreatmentResult {
    std::string treatment;
    std::optional<DmlEstimate> estimate;
    std::string error;  // set when estimate is empty
};

struct MultiResult {
    std::vector<TreatmentResult> rows;
    /// Always false: p-values and intervals are per-treatment.
    bool multiplicity_adjusted = false;
};

/// Runs the family's single-treatment estimator for each treatment, with all
/// other treatments appended to the controls. `controls` restricts the
/// control block (all control-role columns when empty).
MultiResult dml_multi(const Dataset& data, const std::vector<std::string>& treatments, Family family,
                      const DmlConfig& config = {}, const std::vector<std::string>& controls = {});

}  // namespace dml
