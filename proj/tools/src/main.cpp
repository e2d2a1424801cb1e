#include <iostream>

#include "mdcl/cli.hpp"

int main(int argc, char** argv) { return mdcl::cli::run(argc, argv, std::cout, std::cerr); }
