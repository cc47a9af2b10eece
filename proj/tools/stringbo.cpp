#include "stringbo/cli.hpp"

int main(int argc, char** argv) { return stringbo::cli_main(argc, argv); }
