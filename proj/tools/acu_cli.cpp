#include <iostream>

#include "acu/cli.hpp"

int main(int argc, char** argv) { return acu::run_cli(argc, argv, std::cout, std::cerr); }
