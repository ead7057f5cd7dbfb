#include "flowlab/app.hpp"

#include <iostream>

int main(int argc, char** argv) { return flowlab::cli_main(argc, argv, std::cout, std::cerr); }
