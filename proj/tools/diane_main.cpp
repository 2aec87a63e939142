#include "diane/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return diane::cli::run(argc, argv, std::cout, std::cerr); }
