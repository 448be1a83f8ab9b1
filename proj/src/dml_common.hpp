#pragma once

#include <string>
#include <vector>

#include "dml/dml.hpp"

namespace dml::detail {

/// Shape, degeneracy and outcome-type checks shared by every estimator.
void validate_problem(const TreatmentProblem& problem, Family family);

/// Requires n > max(support sizes) + 10.
void check_support_sizes(Index n, std::size_t step1, std::size_t step2);

std::vector<std::string> pick_names(const std::vector<std::string>& names, const std::vector<Index>& idx);

/// Appends warnings not already present.
void append_warnings(std::vector<std::string>& into, const std::vector<std::string>& from);

/// Fills std_error, ci_low/high and p_value from alpha_check, sigma_hat, n, level.
void finish_inference(DmlEstimate& est);

}  // namespace dml::detail
