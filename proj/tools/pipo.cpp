#include "pipo/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return pipo::cli::run(argc, argv, std::cout, std::cerr); }
