#include <iostream>

#include "lag/cli.hpp"

int main(int argc, char** argv) { return lag::cli::run(argc, argv, std::cout, std::cerr); }
