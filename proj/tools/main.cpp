#include "riskenv/cli.hpp"

int main(int argc, char** argv) { return riskenv::cli::Run(argc, argv); }
