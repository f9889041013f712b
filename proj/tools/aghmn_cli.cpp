#include <iostream>

#include "aghmn/commands.hpp"

int main(int argc, char** argv) { return aghmn::cli::run_cli(argc, argv, std::cout, std::cerr); }
