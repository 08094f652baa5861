#include "dimkit/cli.hpp"

int main(int argc, char** argv) { return dimkit::run_cli(argc, argv); }
