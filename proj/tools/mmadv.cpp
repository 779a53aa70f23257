#include "cli.hpp"

int main(int argc, char** argv) { return mmadv::cli::run(argc, argv); }
