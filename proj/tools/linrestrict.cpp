#include "linrestrict/cli.hpp"

int main(int argc, char** argv) { return linrestrict::cli::run(argc, argv); }
