#include "wmx2/cli.hpp"

int main(int argc, char** argv) {
    return wmx2::run_cli(argc, argv);
}
