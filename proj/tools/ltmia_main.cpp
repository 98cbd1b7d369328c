#include <iostream>

#include "ltmia/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return ltmia::cli::run(args, std::cout, std::cerr);
}
