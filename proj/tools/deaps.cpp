#include "deaps/cli.hpp"

int main(int argc, char** argv) { return deaps::cli::run(argc, argv); }
