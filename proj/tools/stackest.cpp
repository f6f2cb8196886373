#include <iostream>

#include "stackest/cli.hpp"

int main(int argc, char** argv) { return stackest::cli::run(argc, argv, std::cout, std::cerr); }
