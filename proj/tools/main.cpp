#include "cli.hpp"

int main(int argc, char** argv) { return ncdw::cli::dispatch(argc, argv); }
