#include "divtopic/cli.hpp"

int main(int argc, char** argv) { return divtopic::cli::run(argc, argv); }
