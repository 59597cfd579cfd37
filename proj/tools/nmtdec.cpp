#include <iostream>

#include "nmtdec/app.hpp"

int main(int argc, char** argv) { return nmtdec::run_cli(argc, argv, std::cout, std::cerr); }
