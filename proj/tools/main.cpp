#include "mldiag/cli.hpp"

int main(int argc, char** argv) { return mldiag::cli::run(argc, argv); }
