#include "hscale/cli.hpp"

int main(int argc, char** argv) { return hscale::cli::run_cli(argc, argv); }
