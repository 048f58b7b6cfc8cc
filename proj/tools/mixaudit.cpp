#include "mixaudit/cli.hpp"

int main(int argc, char** argv) { return mixaudit::cli::dispatch(argc, argv); }
