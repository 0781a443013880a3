#include "curvmf/runner.hpp"

int main(int argc, char** argv) { return curvmf::cli::main_entry(argc, argv); }
