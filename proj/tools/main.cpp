#include "evalkit/cli.hpp"

int main(int argc, char** argv) { return evalkit::cli_main(argc, argv); }
