#include "zldc/cli.hpp"

int main(int argc, char** argv) { return zldc::run_cli(argc, argv); }
