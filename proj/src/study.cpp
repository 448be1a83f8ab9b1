#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "dml/errors.hpp"
#include "dml/mc.hpp"
#include "parallel.hpp"

namespace dml {

const char* to_string(Method m) {
    switch (m) {
        case Method::DmlLogit: return "dml_logit";
        case Method::DmlLinear: return "dml_linear";
        case Method::NaiveLogit: return "naive_logit";
        case Method::NaiveLinear: return "naive_linear";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    for (Method m : {Method::DmlLogit, Method::DmlLinear, Method::NaiveLogit, Method::NaiveLinear}) {
        if (s == to_string(m)) return m;
    }
    throw InvalidArgument("unknown method '" + s + "'");
}

namespace {

struct Outcome {
    bool ok = false;
    double estimate = std::numeric_limits<double>::quiet_NaN();
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = std::numeric_limits<double>::quiet_NaN();
    std::string reason;
};

std::string failure_kind(const std::exception& e) {
    if (dynamic_cast<const WeakInstrumentError*>(&e)) return "weak_instrument";
    if (dynamic_cast<const RankDeficientError*>(&e)) return "rank_deficient";
    if (dynamic_cast<const DegenerateOutcomeError*>(&e)) return "degenerate_outcome";
    if (dynamic_cast<const DegenerateTreatmentError*>(&e)) return "degenerate_treatment";
    if (dynamic_cast<const DegenerateMomentError*>(&e)) return "degenerate_moment";
    if (dynamic_cast<const InvalidArgument*>(&e)) return "invalid_argument";
    return "error";
}

Outcome run_method(Method m, const TreatmentProblem& problem, const DmlConfig& config) {
    Outcome out;
    try {
        DmlEstimate est;
        switch (m) {
            case Method::DmlLogit: est = dml_logit(problem, config); break;
            case Method::DmlLinear: est = dml_linear(problem, config); break;
            case Method::NaiveLogit: est = naive_fit(problem, Family::Logistic, config); break;
            case Method::NaiveLinear: est = naive_fit(problem, Family::Linear, config); break;
        }
        if (!std::isfinite(est.alpha_check) || !std::isfinite(est.std_error)) {
            out.reason = "non_finite";
            return out;
        }
        out.ok = true;
        out.estimate = est.alpha_check;
        out.se = est.std_error;
        out.ci_low = est.ci_low;
        out.ci_high = est.ci_high;
        out.p_value = est.p_value;
    } catch (const std::exception& e) {
        out.reason = failure_kind(e);
    }
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::vector<CoverageReport> run_study(const StudySpec& study) {
    if (study.reps < 1) throw InvalidArgument("study: reps must be positive");
    if (study.methods.empty()) throw InvalidArgument("study: no methods");
    if (!(study.level > 0.0 && study.level < 1.0)) throw InvalidArgument("study: level must lie in (0,1)");
    study.dgp.validate();

    DmlConfig config = study.config;
    config.level = study.level;
    config.jobs = 1;
    const auto reps = static_cast<std::size_t>(study.reps);
    const std::size_t nm = study.methods.size();

    std::vector<Outcome> outcomes(reps * nm);
    std::vector<std::uint64_t> checksums(reps);
    detail::parallel_for(reps, study.jobs, [&](std::size_t r) {
        try {
            const Draw draw = gen_dgp(study.dgp, study.base_seed + r);
            checksums[r] = draw.data.checksum();
            const TreatmentProblem problem = make_problem(draw.data, 0);
            for (std::size_t m = 0; m < nm; ++m) outcomes[r * nm + m] = run_method(study.methods[m], problem, config);
        } catch (const std::exception& e) {
            for (std::size_t m = 0; m < nm; ++m) outcomes[r * nm + m].reason = failure_kind(e);
        }
    });

    const double a0 = study.dgp.alpha0;
    std::vector<CoverageReport> reports;
    for (std::size_t m = 0; m < nm; ++m) {
        CoverageReport rep;
        rep.method = to_string(study.methods[m]);
        rep.reps = study.reps;
        rep.alpha0 = a0;
        rep.level = study.level;
        rep.data_checksums = checksums;
        std::vector<double> bias;
        double se_sum = 0.0, width_sum = 0.0;
        int covered = 0, rejected = 0;
        for (std::size_t r = 0; r < reps; ++r) {
            const Outcome& o = outcomes[r * nm + m];
            rep.estimates.push_back(o.estimate);
            rep.p_values.push_back(o.p_value);
            if (!o.ok) {
                ++rep.failures;
                ++rep.failure_reasons[o.reason];
                continue;
            }
            ++rep.successes;
            bias.push_back(o.estimate - a0);
            se_sum += o.se;
            width_sum += o.ci_high - o.ci_low;
            if (o.ci_low <= a0 && a0 <= o.ci_high) ++covered;
            if (o.p_value < study.level) ++rejected;
        }
        const double s = rep.successes;
        if (rep.successes > 0) {
            double mean = 0.0;
            for (double b : bias) mean += b;
            mean /= s;
            double ss = 0.0;
            for (double b : bias) ss += (b - mean) * (b - mean);
            rep.mean_bias = mean;
            rep.median_bias = median(bias);
            rep.sd = rep.successes > 1 ? std::sqrt(ss / (s - 1.0)) : 0.0;
            rep.mean_se = se_sum / s;
            rep.coverage = covered / s;
            rep.mean_ci_width = width_sum / s;
            rep.rejection_rate = rejected / s;
        } else {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            rep.mean_bias = rep.median_bias = rep.sd = rep.mean_se = rep.coverage = rep.mean_ci_width =
                rep.rejection_rate = nan;
        }
        rep.coverage_with_failures = static_cast<double>(covered) / study.reps;
        reports.push_back(std::move(rep));
    }
    return reports;
}

// ---------------------------------------------------------------------------
// YAML

namespace {

const char* family_name(Family f) { return f == Family::Logistic ? "logit" : "linear"; }

Family family_from(const std::string& s) {
    if (s == "logit" || s == "logistic") return Family::Logistic;
    if (s == "linear") return Family::Linear;
    throw SchemaError("unknown family '" + s + "'");
}

template <class T>
T get_or(const YAML::Node& node, const char* key, T fallback) {
    return node[key] ? node[key].as<T>() : fallback;
}

CoefPattern parse_pattern(const YAML::Node& node, CoefPattern fallback) {
    if (!node) return fallback;
    CoefPattern pat;
    const auto kind = get_or<std::string>(node, "kind", "first-s");
    if (kind == "first-s") {
        pat.kind = CoefPattern::Kind::FirstS;
        pat.s = get_or<Index>(node, "s", pat.s);
        pat.magnitude = get_or<double>(node, "magnitude", pat.magnitude);
    } else if (kind == "geometric") {
        pat.kind = CoefPattern::Kind::GeometricDecay;
        pat.magnitude = get_or<double>(node, "magnitude", pat.magnitude);
        pat.rate = get_or<double>(node, "rate", pat.rate);
    } else if (kind == "custom") {
        pat.kind = CoefPattern::Kind::Custom;
        pat.custom = node["values"].as<std::vector<double>>();
    } else {
        throw SchemaError("unknown coefficient pattern '" + kind + "'");
    }
    return pat;
}

void emit_pattern(YAML::Emitter& out, const CoefPattern& pat) {
    out << YAML::Flow << YAML::BeginMap;
    switch (pat.kind) {
        case CoefPattern::Kind::FirstS:
            out << YAML::Key << "kind" << YAML::Value << "first-s";
            out << YAML::Key << "s" << YAML::Value << pat.s;
            out << YAML::Key << "magnitude" << YAML::Value << format_number(pat.magnitude);
            break;
        case CoefPattern::Kind::GeometricDecay:
            out << YAML::Key << "kind" << YAML::Value << "geometric";
            out << YAML::Key << "magnitude" << YAML::Value << format_number(pat.magnitude);
            out << YAML::Key << "rate" << YAML::Value << format_number(pat.rate);
            break;
        case CoefPattern::Kind::Custom:
            out << YAML::Key << "kind" << YAML::Value << "custom";
            out << YAML::Key << "values" << YAML::Value << YAML::Flow << YAML::BeginSeq;
            for (double v : pat.custom) out << format_number(v);
            out << YAML::EndSeq;
            break;
    }
    out << YAML::EndMap;
}

std::string num(double v) {
    if (std::isnan(v)) return ".nan";
    if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
    return format_number(v);
}

}  // namespace

static PenaltyConfig parse_penalty_config(const YAML::Node& node) {
    PenaltyConfig pc;
    if (!node) return pc;
    if (node.IsScalar()) {
        const auto m = node.as<std::string>();
        if (m == "plugin") pc.method = PenaltyMethod::Plugin;
        else if (m == "cv") pc.method = PenaltyMethod::CrossValidation;
        else throw SchemaError("unknown penalty method '" + m + "'");
        return pc;
    }
    const auto m = get_or<std::string>(node, "method", "plugin");
    if (m == "plugin") pc.method = PenaltyMethod::Plugin;
    else if (m == "cv") pc.method = PenaltyMethod::CrossValidation;
    else if (m == "fixed") pc.method = PenaltyMethod::Fixed;
    else throw SchemaError("unknown penalty method '" + m + "'");
    pc.c = get_or<double>(node, "c", pc.c);
    if (node["gamma"]) pc.gamma = node["gamma"].as<double>();
    pc.folds = get_or<int>(node, "folds", pc.folds);
    pc.one_se_rule = get_or<bool>(node, "one_se_rule", pc.one_se_rule);
    pc.cv_seed = get_or<std::uint64_t>(node, "cv_seed", pc.cv_seed);
    pc.refinement_iterations = get_or<int>(node, "refinement_iterations", pc.refinement_iterations);
    pc.fixed_lambda = get_or<double>(node, "lambda", pc.fixed_lambda);
    return pc;
}

StudySpec parse_study_spec(const std::string& yaml_text) {
    StudySpec study;
    try {
        const YAML::Node root = YAML::Load(yaml_text);
        if (!root.IsMap()) throw SchemaError("study spec must be a mapping");
        if (!root["version"]) throw SchemaError("study spec lacks a version");
        if (root["version"].as<int>() != 1) throw SchemaError("unsupported study spec version");

        const YAML::Node g = root["dgp"];
        if (!g) throw SchemaError("study spec lacks a dgp section");
        DgpSpec& d = study.dgp;
        if (g["fixture"]) {
            const auto f = g["fixture"].as<std::string>();
            if (f == "sparse-logit") d = sparse_fixture(Family::Logistic, get_or<double>(g, "alpha0", 0.5));
            else if (f == "sparse-linear") d = sparse_fixture(Family::Linear, get_or<double>(g, "alpha0", 0.5));
            else if (f == "confounded") d = confounded_fixture();
            else throw SchemaError("unknown fixture '" + f + "'");
        }
        if (g["family"]) d.family = family_from(g["family"].as<std::string>());
        d.n = get_or<Index>(g, "n", d.n);
        d.p = get_or<Index>(g, "p", d.p);
        d.alpha0 = get_or<double>(g, "alpha0", d.alpha0);
        d.beta = parse_pattern(g["beta"], d.beta);
        d.gamma = parse_pattern(g["gamma"], d.gamma);
        d.nu_scale = get_or<double>(g, "nu_scale", d.nu_scale);
        if (g["correlation"]) {
            const auto c = g["correlation"].as<std::string>();
            if (c == "ar1") d.correlation = CorrelationKind::AR1;
            else if (c == "exchangeable") d.correlation = CorrelationKind::Exchangeable;
            else throw SchemaError("unknown correlation '" + c + "'");
        }
        d.rho = get_or<double>(g, "rho", d.rho);
        d.intercept = get_or<double>(g, "intercept", d.intercept);
        d.eps_scale = get_or<double>(g, "eps_scale", d.eps_scale);

        study.reps = get_or<int>(root, "reps", study.reps);
        if (root["methods"]) {
            study.methods.clear();
            for (const auto& m : root["methods"]) study.methods.push_back(method_from_string(m.as<std::string>()));
        }
        study.level = get_or<double>(root, "level", study.level);
        study.base_seed = get_or<std::uint64_t>(root, "base_seed", study.base_seed);
        study.jobs = get_or<int>(root, "jobs", study.jobs);
        study.max_failure_rate = get_or<double>(root, "max_failure_rate", study.max_failure_rate);
        study.config.penalty = parse_penalty_config(root["penalty"]);
        if (root["instrument"]) {
            const auto s = root["instrument"].as<std::string>();
            if (s == "sqrt-sigma") study.config.instrument = InstrumentScaling::SqrtSigma;
            else if (s == "sigma") study.config.instrument = InstrumentScaling::Sigma;
            else throw SchemaError("unknown instrument scaling '" + s + "'");
        }
        study.config.penalize_treatment = get_or<bool>(root, "penalize_treatment", false);
        study.config.step2_union = get_or<bool>(root, "step2_union", false);
    } catch (const YAML::Exception& e) {
        throw SchemaError(std::string("malformed study spec: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw SchemaError(e.what());
    }
    try {
        study.dgp.validate();
    } catch (const InvalidArgument& e) {
        throw SchemaError(e.what());
    }
    if (study.reps < 1) throw SchemaError("study: reps must be positive");
    if (!(study.level > 0.0 && study.level < 1.0)) throw SchemaError("study: level must lie in (0,1)");
    return study;
}

StudySpec load_study_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open study spec '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_study_spec(buf.str());
}

std::string dump_study_spec(const StudySpec& study) {
    const DgpSpec& d = study.dgp;
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "version" << YAML::Value << 1;
    out << YAML::Key << "dgp" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "family" << YAML::Value << family_name(d.family);
    out << YAML::Key << "n" << YAML::Value << d.n;
    out << YAML::Key << "p" << YAML::Value << d.p;
    out << YAML::Key << "alpha0" << YAML::Value << format_number(d.alpha0);
    out << YAML::Key << "beta" << YAML::Value;
    emit_pattern(out, d.beta);
    out << YAML::Key << "gamma" << YAML::Value;
    emit_pattern(out, d.gamma);
    out << YAML::Key << "nu_scale" << YAML::Value << format_number(d.nu_scale);
    out << YAML::Key << "correlation" << YAML::Value << (d.correlation == CorrelationKind::AR1 ? "ar1" : "exchangeable");
    out << YAML::Key << "rho" << YAML::Value << format_number(d.rho);
    out << YAML::Key << "intercept" << YAML::Value << format_number(d.intercept);
    out << YAML::Key << "eps_scale" << YAML::Value << format_number(d.eps_scale);
    out << YAML::EndMap;
    out << YAML::Key << "reps" << YAML::Value << study.reps;
    out << YAML::Key << "methods" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (Method m : study.methods) out << to_string(m);
    out << YAML::EndSeq;
    out << YAML::Key << "level" << YAML::Value << format_number(study.level);
    out << YAML::Key << "base_seed" << YAML::Value << study.base_seed;
    out << YAML::Key << "jobs" << YAML::Value << study.jobs;
    out << YAML::Key << "max_failure_rate" << YAML::Value << format_number(study.max_failure_rate);
    const PenaltyConfig& pc = study.config.penalty;
    out << YAML::Key << "penalty" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "method" << YAML::Value
        << (pc.method == PenaltyMethod::Plugin ? "plugin" : pc.method == PenaltyMethod::CrossValidation ? "cv" : "fixed");
    out << YAML::Key << "c" << YAML::Value << format_number(pc.c);
    if (pc.gamma) out << YAML::Key << "gamma" << YAML::Value << format_number(*pc.gamma);
    out << YAML::Key << "folds" << YAML::Value << pc.folds;
    out << YAML::Key << "one_se_rule" << YAML::Value << pc.one_se_rule;
    out << YAML::Key << "cv_seed" << YAML::Value << pc.cv_seed;
    out << YAML::Key << "refinement_iterations" << YAML::Value << pc.refinement_iterations;
    if (pc.method == PenaltyMethod::Fixed) out << YAML::Key << "lambda" << YAML::Value << format_number(pc.fixed_lambda);
    out << YAML::EndMap;
    out << YAML::Key << "instrument" << YAML::Value
        << (study.config.instrument == InstrumentScaling::SqrtSigma ? "sqrt-sigma" : "sigma");
    out << YAML::Key << "penalize_treatment" << YAML::Value << study.config.penalize_treatment;
    out << YAML::Key << "step2_union" << YAML::Value << study.config.step2_union;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::string dump_coverage_reports(const std::vector<CoverageReport>& reports) {
    YAML::Emitter out;
    out << YAML::BeginSeq;
    for (const auto& r : reports) {
        out << YAML::BeginMap;
        out << YAML::Key << "method" << YAML::Value << r.method;
        out << YAML::Key << "reps" << YAML::Value << r.reps;
        out << YAML::Key << "successes" << YAML::Value << r.successes;
        out << YAML::Key << "failures" << YAML::Value << r.failures;
        out << YAML::Key << "failure_reasons" << YAML::Value << YAML::BeginMap;
        for (const auto& [k, v] : r.failure_reasons) out << YAML::Key << k << YAML::Value << v;
        out << YAML::EndMap;
        const std::pair<const char*, double> fields[] = {
            {"alpha0", r.alpha0},       {"level", r.level},
            {"mean_bias", r.mean_bias}, {"median_bias", r.median_bias},
            {"sd", r.sd},               {"mean_se", r.mean_se},
            {"coverage", r.coverage},   {"coverage_with_failures", r.coverage_with_failures},
            {"mean_ci_width", r.mean_ci_width}, {"rejection_rate", r.rejection_rate}};
        for (const auto& [k, v] : fields) out << YAML::Key << k << YAML::Value << num(v);
        out << YAML::Key << "data_checksums" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (auto c : r.data_checksums) out << c;
        out << YAML::EndSeq;
        out << YAML::Key << "estimates" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (double v : r.estimates) out << num(v);
        out << YAML::EndSeq;
        out << YAML::Key << "p_values" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (double v : r.p_values) out << num(v);
        out << YAML::EndSeq;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    return std::string(out.c_str()) + "\n";
}

std::vector<CoverageReport> parse_coverage_reports(const std::string& yaml_text) {
    std::vector<CoverageReport> reports;
    try {
        const YAML::Node root = YAML::Load(yaml_text);
        for (const auto& node : root) {
            CoverageReport r;
            r.method = node["method"].as<std::string>();
            r.reps = node["reps"].as<int>();
            r.successes = node["successes"].as<int>();
            r.failures = node["failures"].as<int>();
            for (const auto& kv : node["failure_reasons"]) r.failure_reasons[kv.first.as<std::string>()] = kv.second.as<int>();
            r.alpha0 = node["alpha0"].as<double>();
            r.level = node["level"].as<double>();
            r.mean_bias = node["mean_bias"].as<double>();
            r.median_bias = node["median_bias"].as<double>();
            r.sd = node["sd"].as<double>();
            r.mean_se = node["mean_se"].as<double>();
            r.coverage = node["coverage"].as<double>();
            r.coverage_with_failures = node["coverage_with_failures"].as<double>();
            r.mean_ci_width = node["mean_ci_width"].as<double>();
            r.rejection_rate = node["rejection_rate"].as<double>();
            r.data_checksums = node["data_checksums"].as<std::vector<std::uint64_t>>();
            r.estimates = node["estimates"].as<std::vector<double>>();
            r.p_values = node["p_values"].as<std::vector<double>>();
            reports.push_back(std::move(r));
        }
    } catch (const YAML::Exception& e) {
        throw SchemaError(std::string("malformed coverage report: ") + e.what());
    }
    return reports;
}

std::string render_coverage_table(const std::vector<CoverageReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "method" << std::right << std::setw(7) << "reps" << std::setw(7) << "fail"
       << std::setw(10) << "bias" << std::setw(10) << "med.bias" << std::setw(9) << "sd" << std::setw(9) << "mean.se"
       << std::setw(10) << "coverage" << std::setw(9) << "width" << std::setw(9) << "reject" << "\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& r : reports) {
        os << std::left << std::setw(14) << r.method << std::right << std::setw(7) << r.reps << std::setw(7)
           << r.failures << std::setw(10) << r.mean_bias << std::setw(10) << r.median_bias << std::setw(9) << r.sd
           << std::setw(9) << r.mean_se << std::setw(10) << r.coverage << std::setw(9) << r.mean_ci_width
           << std::setw(9) << r.rejection_rate << "\n";
    }
    for (const auto& r : reports) {
        for (const auto& [k, v] : r.failure_reasons) os << r.method << ": " << v << " failed replication(s) (" << k << ")\n";
    }
    return os.str();
}

}  // namespace dml
