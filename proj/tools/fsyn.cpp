#include <iostream>

#include "fsyn/cli.hpp"

int main(int argc, char **argv) { return fsyn::cli::run(argc, argv, std::cout, std::cerr); }
