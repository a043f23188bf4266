#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
// failure. Failures also print one JSON object on `err`:
//
//     {"error":"connect_failed","message":"..."}

#include "bootscope/facade/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace bootscope::facade {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_failure = 2;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err,
            const env_lookup& env);

} // namespace bootscope::facade
