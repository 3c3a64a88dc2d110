#include "segsum/cli.hpp"

int main(int argc, char** argv) { return segsum::run_cli(argc, argv); }
