#include "commands.hpp"

int main(int argc, char** argv) { return sccv::cli::run(argc, argv); }
