#pragma once

// Minimal check helpers shared by the test executables: count failures,
// print one line per failed expectation, return nonzero from main.

#include <cmath>
#include <cstdio>
#include <string>

namespace testing {

inline int g_failures = 0;
inline int g_checks = 0;

inline void check(bool ok, const std::string& what) {
    ++g_checks;
    if (!ok) {
        ++g_failures;
        std::printf("FAIL: %s\n", what.c_str());
    }
}

inline void check_close(double got, double want, double tol, const std::string& what) {
    ++g_checks;
    if (!(std::abs(got - want) <= tol)) {
        ++g_failures;
        std::printf("FAIL: %s (got %.12g, want %.12g, tol %.3g)\n", what.c_str(), got, want,
                    tol);
    }
}

inline void check_lt(double a, double b, const std::string& what) {
    ++g_checks;
    if (!(a < b)) {
        ++g_failures;
        std::printf("FAIL: %s (%.12g !< %.12g)\n", what.c_str(), a, b);
    }
}

inline int summary(const char* suite) {
    if (g_failures == 0)
        std::printf("%s: %d checks passed\n", suite, g_checks);
    else
        std::printf("%s: %d of %d checks FAILED\n", suite, g_failures, g_checks);
    return g_failures == 0 ? 0 : 1;
}

} // namespace testing
