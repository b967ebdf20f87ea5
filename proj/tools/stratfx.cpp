#include "stratfx/cli.hpp"

int main(int argc, char** argv) { return stratfx::cli::main(argc, argv); }
