#include "d4d/cli.hpp"

int main(int argc, char** argv) { return d4d::cli_main(argc, argv); }
