#include <iostream>

#include "aqualoc/cli.hpp"

int main(int argc, char** argv) { return aqualoc::cli::run(argc, argv, std::cout, std::cerr); }
