#include "cli.hpp"

int main(int argc, char** argv) { return capqe::cli::run(argc, argv); }
