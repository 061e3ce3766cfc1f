#include <iostream>

#include "memlens/cli.hpp"

int main(int argc, char** argv) { return memlens::cli::run(argc, argv, std::cout, std::cerr); }
