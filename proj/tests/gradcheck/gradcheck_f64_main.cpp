#include "../support/gradcheck.hpp"

#include <cstdio>

// double-precision build of the gradient checks; tolerance 1e-6
int main() {
    static_assert(sizeof(synthamt::nn::Real) == 8, "must link the double test build");
    std::vector<std::string> report;
    double worst = synthamt::gradcheck::run_all(report);
    for (const auto& line : report) std::printf("  %s\n", line.c_str());
    std::printf("worst relative error: %.3g (tolerance %.0e)\n", worst,
                synthamt::gradcheck::kTol);
    if (worst > synthamt::gradcheck::kTol) {
        std::printf("FAIL\n");
        return 1;
    }
    std::printf("PASS\n");
    return 0;
}
