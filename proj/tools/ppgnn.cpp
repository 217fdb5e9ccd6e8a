#include "ppgnn/cli.hpp"

int main(int argc, char** argv) { return ppgnn::cmd_dispatch(argc, argv); }
