#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rankreg/simgen.hpp"

namespace rankreg::cli {

inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kUsageError = 2;

// Runs one command line (args excludes the program name) and returns the
// exit status.  Primary output goes to `out` unless redirected to a file;
// errors are written to `err` as a JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// key = value scenario file for `simulate`.
struct SimulateSpec {
  StudyConfig study;
  std::map<std::string, std::string> resolved;  // every key with its effective value
};
SimulateSpec parse_simulate_config(std::istream& in);

}  // namespace rankreg::cli
