#include "haptic/cli.hpp"

int main(int argc, char** argv) { return haptic::run_cli(argc, argv); }
