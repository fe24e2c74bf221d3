#include <iostream>

#include "crossrank/cli.hpp"

int main(int argc, char** argv) {
  return crossrank::cli::run(argc, argv, std::cin, std::cout, std::cerr);
}
