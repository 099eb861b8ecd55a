#include "gridvla/cli/commands.hpp"

int main(int argc, char** argv) { return gridvla::cli::main_entry(argc, argv); }
