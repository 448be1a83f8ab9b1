#include "dml_common.hpp"

#include <algorithm>
#include <cmath>

#include "dml/errors.hpp"

namespace dml {

namespace detail {

void validate_problem(const TreatmentProblem& problem, Family family) {
    const Index n = problem.y.size();
    if (n == 0) throw InvalidArgument("no observations");
    if (problem.d.size() != n || problem.x.rows() != n) throw InvalidArgument("outcome, treatment and controls differ in length");
    if (static_cast<Index>(problem.control_names.size()) != problem.x.cols() && !problem.control_names.empty()) {
        throw InvalidArgument("control names do not match the control block");
    }
    if (!problem.y.allFinite() || !problem.d.allFinite() || !problem.x.allFinite()) {
        throw InvalidArgument("non-finite values in the estimation problem");
    }
    if (problem.d.maxCoeff() == problem.d.minCoeff()) {
        throw DegenerateTreatmentError("treatment '" + problem.treatment + "' is constant");
    }
    if (family == Family::Logistic && !(problem.y.array() == 0.0 || problem.y.array() == 1.0).all()) {
        throw InvalidArgument("logistic estimation requires a 0/1 outcome");
    }
    if (problem.y.maxCoeff() == problem.y.minCoeff()) throw DegenerateOutcomeError("outcome is constant");
}

void check_support_sizes(Index n, std::size_t step1, std::size_t step2) {
    const auto largest = static_cast<Index>(std::max(step1, step2));
    if (n <= largest + 10) {
        throw InvalidArgument("too few observations (" + std::to_string(n) + ") for selected supports of size " +
                              std::to_string(largest));
    }
}

std::vector<std::string> pick_names(const std::vector<std::string>& names, const std::vector<Index>& idx) {
    std::vector<std::string> out;
    for (Index j : idx) {
        out.push_back(static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)]
                                                                 : "column " + std::to_string(j));
    }
    return out;
}

void append_warnings(std::vector<std::string>& into, const std::vector<std::string>& from) {
    for (const auto& w : from) {
        if (std::find(into.begin(), into.end(), w) == into.end()) into.push_back(w);
    }
}

void finish_inference(DmlEstimate& est) {
    est.std_error = est.sigma_hat / std::sqrt(static_cast<double>(est.n));
    const double q = normal_quantile(1.0 - est.level / 2.0);
    est.ci_low = est.alpha_check - q * est.std_error;
    est.ci_high = est.alpha_check + q * est.std_error;
    const double t = std::abs(est.alpha_check) / est.std_error;
    est.p_value = std::erfc(t / std::sqrt(2.0));
}

}  // namespace detail

TreatmentProblem make_problem(const Dataset& data, Index treatment, const std::vector<Index>& controls) {
    if (treatment < 0 || treatment >= data.p()) throw InvalidArgument("treatment column index out of range");
    std::vector<Index> cols = controls;
    if (cols.empty()) {
        for (Index j = 0; j < data.p(); ++j) {
            if (j != treatment) cols.push_back(j);
        }
    }
    TreatmentProblem prob;
    prob.y = data.y();
    prob.d = data.design().col(treatment);
    prob.treatment = data.column_info(treatment).name;
    prob.x.resize(data.n(), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] == treatment) throw InvalidArgument("treatment column listed among the controls");
        prob.x.col(static_cast<Index>(k)) = data.design().col(cols[k]);
        prob.control_names.push_back(data.column_info(cols[k]).name);
    }
    return prob;
}

}  // namespace dml
