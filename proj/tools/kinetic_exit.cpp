#include "kinetic_exit/harness/cli.hpp"

int main(int argc, char** argv) { return kinetic_exit::harness::cli_main(argc, argv); }
