#include "multilift/harness.hpp"

int main(int argc, char** argv) { return multilift::harness::cli(argc, argv); }
