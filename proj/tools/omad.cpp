#include <iostream>
#include <string>
#include <vector>

#include "omad/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return omad::cli::run(args, std::cout, std::cerr);
}
