// tools/src/main.cc

#include <iostream>
#include <string>
#include <vector>

#include "mgf_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mgf::cli::run(args, std::cout, std::cerr);
}
