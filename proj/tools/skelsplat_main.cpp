#include <iostream>

#include "skelsplat/cli.hpp"

int main(int argc, char** argv) {
  return skelsplat::run_cli(argc, argv, std::cout, std::cerr);
}
