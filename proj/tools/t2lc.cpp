#include <iostream>

#include "t2lc/cli.hpp"

int main(int argc, char** argv) { return t2lc::cli::run(argc, argv, std::cout, std::cerr); }
