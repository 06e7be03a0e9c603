#include "commeval/cli.hpp"

int main(int argc, char **argv) { return commeval::cli::run(argc, argv); }
