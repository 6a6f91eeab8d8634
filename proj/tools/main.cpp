#include "fadvlp/cli.hpp"

int main(int argc, char** argv) { return fadvlp::run(argc, argv); }
