#include <iostream>

#include "raus/cli.hpp"

int main(int argc, char** argv) { return raus::cli_main(argc, argv, std::cout, std::cerr); }
