#include <iostream>

#include "protofew/cli/commands.hpp"

int main(int argc, char** argv) {
  return protofew::cli::run_cli(argc, argv, std::cout, std::cerr);
}
