#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return pedmr::cli::run(argc, argv, std::cerr); }
