#include "sqsos/bench.hpp"

int main(int argc, char** argv) { return sqsos::cli_main(argc, argv); }
