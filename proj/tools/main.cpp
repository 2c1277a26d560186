#include "cli.hpp"

int main(int argc, char** argv) { return factor::cli::run(argc, argv); }
