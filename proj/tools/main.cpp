#include "plopt/cli.hpp"

int main(int argc, char** argv) { return plopt::run_cli(argc, argv); }
