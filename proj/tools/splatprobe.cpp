#include "splatprobe/cli.hpp"

int main(int argc, char** argv) { return splatprobe::run(argc, argv); }
