#include "raretok/cli.hpp"

int main(int argc, char** argv) { return raretok::cli_main(argc, argv); }
