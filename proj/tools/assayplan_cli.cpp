#include "assayplan/cli.hpp"

int main(int argc, char** argv) { return assayplan::run_cli(argc, argv); }
