#include "cli.hpp"

int main(int argc, char** argv) {
    return dsgate::cli::run({argv + 1, argv + argc});
}
