#include <iostream>

#include "urscheck/cli.hpp"

int main(int argc, char** argv) { return urscheck::run_cli(argc, argv, std::cout, std::cerr); }
