#include "fdsic/cli.hpp"

int main(int argc, char** argv) { return fdsic::cli_main(argc, argv); }
