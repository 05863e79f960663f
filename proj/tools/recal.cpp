#include "recal/cli.hpp"

int main(int argc, char** argv) { return recal::run_cli(argc, argv); }
