#include "glyconet/cli.hpp"

int main(int argc, char** argv) { return glyconet::cli::dispatch(argc, argv); }
