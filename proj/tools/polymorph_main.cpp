#include "polymorph/cli.hpp"

int main(int argc, char** argv) { return polymorph::cli_run(argc, argv); }
