#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dsgate::cli {

// Command-line misuse distinct from data errors; maps to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Range {
    double min;
    double max;
    int steps;
};

// Grammar "min:max:steps". Throws UsageError when malformed, min > max, or
// steps < 2.
Range parse_range(const std::string& text);

// Entry point shared by the binary and the tests. `args` excludes the
// program name, natural order. Returns 0 on success, 1 on usage errors,
// 2 on data/format errors.
int run(std::vector<std::string> args);

}  // namespace dsgate::cli
