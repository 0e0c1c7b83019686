#include <iostream>

#include "knntest/cli.hpp"

int main(int argc, char** argv) { return knntest::run_cli(argc, argv, std::cout, std::cerr); }
