#include <iostream>

#include "statekit/cli.hpp"

int main(int argc, char** argv) { return statekit::cli::run(argc, argv, std::cout, std::cerr); }
