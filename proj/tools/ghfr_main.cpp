#include <iostream>

#include "ghfr/cli.hpp"

int main(int argc, char** argv) {
  return ghfr::run_command({argv + 1, argv + argc}, std::cout, std::cerr);
}
