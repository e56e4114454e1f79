#include <iostream>

#include "cot2/cli/app.hpp"

int main(int argc, char** argv) {
  return cot2::cli::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
