#include "kmcex/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return kmcex::cli::main(argc, argv, std::cout, std::cerr); }
