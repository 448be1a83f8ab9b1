#include <algorithm>
#include <set>

#include "dml/dml.hpp"
#include "dml/errors.hpp"
#include "dml_common.hpp"
#include "parallel.hpp"

namespace dml {

MultiResult dml_multi(const Dataset& data, const std::vector<std::string>& treatments, Family family,
                      const DmlConfig& config, const std::vector<std::string>& controls) {
    if (treatments.empty()) throw InvalidArgument("dml_multi: no treatments requested");
    std::set<std::string> seen;
    std::vector<Index> treat_idx;
    for (const auto& t : treatments) {
        if (!seen.insert(t).second) throw InvalidArgument("dml_multi: treatment '" + t + "' listed twice");
        treat_idx.push_back(data.require_index(t));
    }

    std::vector<Index> base_controls;
    if (controls.empty()) {
        for (Index j : data.indices_with_role(Role::Control)) {
            if (std::find(treat_idx.begin(), treat_idx.end(), j) == treat_idx.end()) base_controls.push_back(j);
        }
    } else {
        for (const auto& c : controls) {
            const Index j = data.require_index(c);
            if (seen.count(c)) throw InvalidArgument("dml_multi: '" + c + "' is both treatment and control");
            base_controls.push_back(j);
        }
    }
    std::set<Index> base_set(base_controls.begin(), base_controls.end());

    MultiResult result;
    result.rows.resize(treatments.size());
    detail::parallel_for(treatments.size(), config.jobs, [&](std::size_t k) {
        TreatmentResult& row = result.rows[k];
        row.treatment = treatments[k];
        std::vector<Index> cols = base_controls;
        for (Index other : treat_idx) {
            if (other != treat_idx[k] && !base_set.count(other)) cols.push_back(other);
        }
        try {
            const TreatmentProblem problem = make_problem(data, treat_idx[k], cols);
            row.estimate = family == Family::Logistic ? dml_logit(problem, config) : dml_linear(problem, config);
        } catch (const Error& e) {
            row.error = e.what();
        }
    });

    if (config.fail_fast) {
        for (const auto& row : result.rows) {
            if (!row.estimate) throw EstimationError(row.treatment, row.error);
        }
    }
    return result;
}

}  // namespace dml
