#include "fdnet/cli.hpp"

int main(int argc, char** argv) { return fdnet::cli::run(argc, argv); }
