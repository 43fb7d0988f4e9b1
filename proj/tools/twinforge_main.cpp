#include <iostream>

#include "twinforge/cli.hpp"

int main(int argc, char** argv) { return twinforge::cli::dispatch(argc, argv, std::cout, std::cerr); }
