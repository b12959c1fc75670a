#include <iostream>

#include "genprobe/cli.hpp"

int main(int argc, char** argv) { return genprobe::run_cli(argc, argv, std::cout, std::cerr); }
