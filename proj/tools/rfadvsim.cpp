#include "rfadv/cli.hpp"

int main(int argc, char **argv) { return rfadv::cli::run(argc, argv); }
