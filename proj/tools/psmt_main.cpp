#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
    return psmt::cli::run(std::vector<std::string>(argv, argv + argc));
}
