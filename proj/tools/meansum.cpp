#include "meansum/cli.hpp"

int main(int argc, char** argv) { return meansum::cli::run_cli(argc, argv); }
