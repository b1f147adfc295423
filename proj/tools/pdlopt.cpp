#include <iostream>

#include "pdlopt/cli.hpp"

int main(int argc, char** argv) { return pdlopt::run_cli(argc, argv, std::cout, std::cerr); }
