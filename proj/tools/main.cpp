#include "cli.hpp"

int main(int argc, char** argv) { return langsurf::cli::run(argc, argv); }
