#include "contalign/cli.hpp"

int main(int argc, char** argv) { return contalign::cli::dispatch(argc, argv); }
