#include "cli.hpp"

int main(int argc, char** argv) { return becaptcha::cli_main(argc, argv); }
