#include "hbvm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hbvm::cli::main(argc, argv, std::cout, std::cerr); }
