#include "gpcert/experiments.hpp"

int main(int argc, char** argv) { return gpcert::cli::main_cli(argc, argv); }
