#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dml::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitEstimation = 3;
inline constexpr int kExitStudy = 4;

/// Environment variable consulted when --jobs is absent.
inline constexpr const char* kJobsEnv = "DML_JOBS";

/// Full command-line driver; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dml::cli
