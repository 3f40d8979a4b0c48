#include "kgc/cli.hpp"

int main(int argc, char** argv) { return kgc::cli::run(argc, argv); }
