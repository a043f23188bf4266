#include "bootscope/facade/cli.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bootscope::facade::run_cli(args, std::cin, std::cout, std::cerr,
                                    [](const char* name) { return std::getenv(name); });
}
