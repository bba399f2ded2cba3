#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace oshape {

// One evaluated (x, y) series: MI vs SNR, SER vs SNR, or CCDF vs PAPR0.
struct MetricCurve {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<std::size_t> n_samples;
    std::uint64_t seed = 0;
};

} // namespace oshape
