#include "cli.hpp"

int main(int argc, char** argv) { return pvd::cli::dispatch(argc, argv); }
