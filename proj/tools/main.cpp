#include <iostream>

#include "chainnet/cli/cli.hpp"

int main(int argc, char** argv) { return chainnet::cli::run_cli(argc, argv, std::cout, std::cerr); }
