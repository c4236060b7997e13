#include <iostream>
#include <string>
#include <vector>

#include "commdyn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return commdyn::run_cli(args, std::cout, std::cerr);
}
