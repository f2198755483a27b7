#include <iostream>

#include "mret/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mret::run_cli(args, std::cout, std::cerr);
}
