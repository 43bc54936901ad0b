#include "cli.hpp"

int main(int argc, char** argv) { return sparsestab::cli::run_cli(argc, argv); }
