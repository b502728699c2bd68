#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return hcim::cli::run(argc, argv, std::cout, std::cerr); }
