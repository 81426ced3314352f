#include "distacc/cli.hpp"

int main(int argc, char** argv) { return distacc::cli::run(argc, argv); }
