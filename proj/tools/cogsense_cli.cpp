#include "cogsense/cli.hpp"

int main(int argc, char** argv) { return cogsense::cli(argc, argv); }
