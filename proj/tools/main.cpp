#include "ncd/cli/app.hpp"

int main(int argc, char** argv) { return ncd::cli::run(argc, argv); }
