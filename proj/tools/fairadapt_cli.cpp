#include "fairadapt/commands.hpp"

int main(int argc, char** argv) { return fairadapt::cli::main_entry(argc, argv); }
