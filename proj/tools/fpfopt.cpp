#include "fpf/app.hpp"

int main(int argc, char** argv) { return fpf::run_cli(argc, argv); }
