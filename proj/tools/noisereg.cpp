#include <noisereg/cli.hpp>

int main(int argc, char** argv) { return noisereg::run(argc, argv); }
