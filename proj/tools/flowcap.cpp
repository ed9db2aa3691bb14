#include "flowcap/cli.hpp"

int main(int argc, char** argv) { return flowcap::run_cli(argc, argv); }
