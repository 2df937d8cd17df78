#include <iostream>

#include "rolecomms/cli.hpp"

int main(int argc, char** argv) { return rolecomms::cli::run(argc, argv, std::cout, std::cerr); }
