#include <iostream>
#include <string>
#include <vector>

#include "rewardlab_cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rewardlab::cli::run_cli(args, std::cout, std::cerr);
}
