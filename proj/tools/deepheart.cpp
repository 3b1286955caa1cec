#include "deepheart/cli.hpp"

int main(int argc, char** argv) { return deepheart::cli::dispatch(argc, argv); }
