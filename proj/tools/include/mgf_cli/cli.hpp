// tools/include/mgf_cli/cli.hpp
//
// The mgf command-line front end. run() is the whole program behind a thin
// main(), so tests can drive every subcommand in-process with captured
// streams.

#ifndef MGF_CLI_CLI_HPP_
#define MGF_CLI_CLI_HPP_

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace mgf::cli {

// Exit codes: 0 success, 1 usage/validation error, 2 runtime error.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

// Full-model gradient check on a tiny four-objective loss; shared with the
// acceptance tests.
struct GradcheckReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t params = 0;
};
GradcheckReport run_gradcheck(uint64_t seed);

}  // namespace mgf::cli

#endif  // MGF_CLI_CLI_HPP_
