#include "cli.hpp"

int main(int argc, char** argv) { return mdmf::cli::main_entry(argc, argv); }
