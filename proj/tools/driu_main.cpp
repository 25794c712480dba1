#include <iostream>

#include "driu/cli.hpp"

int main(int argc, char** argv) { return driu::run_cli(argc, argv, std::cout, std::cerr); }
