#include <iostream>

#include "xlingmap/cli.hpp"

int main(int argc, char** argv) { return xlingmap::cli::run(argc, argv, std::cout, std::cerr); }
