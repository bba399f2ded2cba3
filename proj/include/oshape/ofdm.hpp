#pragma once

#include <span>

#include "oshape/fft.hpp"
#include "oshape/metric_curve.hpp"
#include "oshape/rng.hpp"
#include "oshape/tape.hpp"

namespace oshape {

// One ACO-OFDM symbol. With N data symbols the frame spans 4N subcarriers:
// odd indices carry the data, the upper half carries the conjugates, all
// even indices are null. Only the positive half-wave survives clipping,
// which costs a factor 1/2 on the data subcarriers and nothing else.
struct OfdmFrame {
    std::size_t n_data = 0;            // N
    ComplexVector data;                // length N
    ComplexVector freq;                // length 4N
    std::vector<double> time_unclipped; // length 4N
    std::vector<double> time_clipped;   // length 4N
};

struct NoiseSpec {
    double sigma2 = 0.0;
    double snr_db = 0.0;

    // Average electrical power of the clipped signal is 1/4 under unit
    // average symbol power, so sigma2 = 0.25 / 10^(snr_db/10).
    static NoiseSpec from_snr_db(double snr_db);
};

struct PaprSample {
    double value_linear = 1.0;
    double value_db = 0.0;
};

// [0, X0, 0, X1, ..., 0, X_{N-1}, 0, X*_{N-1}, ..., 0, X*_1, 0, X*_0]
ComplexVector hermitian_map(const ComplexVector& data);

// Hermitian map + unitary IFFT + zero clipping. Throws if the residual
// imaginary part of the IFFT exceeds 1e-10 (broken symmetry).
OfdmFrame modulate(const ComplexVector& data);

// y = x + z with z iid zero-mean Gaussian of variance sigma2.
std::vector<double> channel(std::span<const double> x, const NoiseSpec& noise, Rng& rng);

// Unitary FFT, then the N data subcarriers at odd indices 1,3,...,2N-1.
ComplexVector demodulate(std::span<const double> y);

// max|x|^2 / mean|x|^2. Throws on an identically zero signal.
PaprSample papr(std::span<const double> x);

// curve.y[t] = #{p >= thresholds[t]} / #samples.
MetricCurve ccdf(std::span<const double> paprs_db, std::span<const double> thresholds_db);

// --- differentiable chain (tensors of shape [N,2] for symbol pairs and
// [2,L] for frequency/time complex pairs) ---

// [N,2] -> [2,4N]
Var hermitian_map_node(Tape& tape, Var data_ri);

// Unitary IFFT of a Hermitian-symmetric [2,4N] input; checks the imaginary
// residue < 1e-10 and returns the real part as [4N].
Var modulate_real_node(Tape& tape, Var freq_c);

// max(0,x) elementwise; the adjoint passes where x >= 0.
Var clip_nonneg_node(Tape& tape, Var x);

// [L] -> [2,L] with zero imaginary row.
Var real_to_complex_node(Tape& tape, Var x);

// [2,4N] -> [N,2]: data subcarriers at odd indices of the first half.
Var extract_data_node(Tape& tape, Var yc);

// Linear PAPR of a [L] signal as a scalar node (max / mean of x^2).
Var papr_linear_node(Tape& tape, Var x);

} // namespace oshape
