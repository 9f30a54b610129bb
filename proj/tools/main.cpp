#include "auscult/cli.hpp"

int main(int argc, char** argv) { return auscult::cli::run_cli(argc, argv); }
