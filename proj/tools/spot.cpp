#include <iostream>

#include "spot/harness.hpp"

int main(int argc, char** argv) { return spot::harness::run_cli(argc, argv, std::cout, std::cerr); }
