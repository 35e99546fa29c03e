#include <iostream>

#include "cdgamma/cli.hpp"

int main(int argc, char** argv) { return cdgamma::cli::main_entry(argc, argv, std::cout, std::cerr); }
