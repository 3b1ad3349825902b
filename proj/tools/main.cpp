#include "dgfd/cli.hpp"

int main(int argc, char** argv) { return dgfd::cli::run(argc, argv); }
