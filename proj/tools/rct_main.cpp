#include <iostream>

#include "rct/cli.hpp"

int main(int argc, char** argv) { return rct::run_cli(argc, argv, std::cout, std::cerr); }
