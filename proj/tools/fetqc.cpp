#include <iostream>

#include "fetqc/cli.hpp"

int main(int argc, char** argv) { return fetqc::dispatch(argc, argv, std::cout, std::cerr); }
