#include "ecgrom/cli.hpp"

int main(int argc, char** argv) { return ecgrom::cli::run(argc, argv); }
