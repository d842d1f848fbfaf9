#include "cli.hpp"

int main(int argc, char** argv) { return malkit::cli::run(argc, argv); }
