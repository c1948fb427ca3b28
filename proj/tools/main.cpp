#include <iostream>

#include "occgeom/cli.hpp"

int main(int argc, char** argv) { return occgeom::cli::run(argc, argv, std::cout, std::cerr); }
