#include <iostream>

#include "poseprior/cli.hpp"

int main(int argc, char** argv) { return poseprior::run_cli(argc, argv, std::cout, std::cerr); }
