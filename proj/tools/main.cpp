#include <iostream>

#include "synres/cli.hpp"

int main(int argc, char** argv) { return synres::run_cli(argc, argv, std::cout, std::cerr); }
