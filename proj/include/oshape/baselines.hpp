#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "oshape/ofdm.hpp"

namespace oshape {

// Square M-QAM on the odd-integer grid, scaled to unit average energy,
// uniform probabilities. Index order is row-major over (re, im).
struct UniformQam {
    std::size_t m = 0;
    std::vector<std::complex<double>> points;
    std::vector<double> probs;
};

UniformQam qam_constellation(std::size_t m); // m in {4, 16, 64}

// Minimum-distance detection of one received data subcarrier. The factor 2
// undoes the ACO clipping loss; ties go to the lowest index.
std::size_t ml_detect(std::complex<double> y_sub,
                      const std::vector<std::complex<double>>& points);

// Amplitude clipping of a nonnegative signal at
// A = sqrt(mean power) * 10^(cr_db/20).
std::vector<double> amp_clip(std::span<const double> x, double cr_db);

struct SlmConfig {
    std::size_t u = 128; // number of candidate phase sequences
    std::uint64_t seed = 0;
};

struct SlmResult {
    OfdmFrame frame;
    std::size_t chosen = 0;
    std::vector<std::complex<double>> phase; // applied sequence, length N
};

// Selected mapping: candidate 0 is the identity, the other u-1 candidates
// draw per-subcarrier rotations from {+1,-1,+j,-j}; the minimum-PAPR frame
// wins. Rotations act on the data before the Hermitian map, so frames stay
// real-valued.
SlmResult slm_select(const ComplexVector& data, const SlmConfig& cfg, Rng& rng);

} // namespace oshape
