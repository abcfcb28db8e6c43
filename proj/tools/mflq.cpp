#include "mflq/cli.hpp"

int main(int argc, char** argv) { return mflq::cli::run(argc, argv); }
