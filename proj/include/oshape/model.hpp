#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oshape/rng.hpp"
#include "oshape/tape.hpp"

namespace oshape {

// Layer widths of the three fully connected networks:
//   NN1 (distribution logits):  1 -> 128 -> 512 -> 128 -> M
//   NN2 (geometry mapper):      M -> 128 -> 512 -> 128 -> 2
//   NN3 (demapper):             2 -> 128 -> 512 -> 128 -> M
// ReLU on the hidden layers, linear output.
struct NetConfig {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<std::size_t> hidden{128, 512, 128};

    static NetConfig nn1(std::size_t m) { return {1, m, {128, 512, 128}}; }
    static NetConfig nn2(std::size_t m) { return {m, 2, {128, 512, 128}}; }
    static NetConfig nn3(std::size_t m) { return {2, m, {128, 512, 128}}; }

    std::vector<std::size_t> widths() const;
};

// Parameter Vars of one Mlp on a tape, in layer order.
struct MlpVars {
    std::vector<Var> w, b;
};

struct Mlp {
    NetConfig cfg;
    std::vector<Tensor> weights; // [in_i, out_i]
    std::vector<Tensor> biases;  // [out_i]

    void init(const NetConfig& c, Rng& rng); // Glorot-uniform weights, zero biases

    MlpVars make_params(Tape& tape) const;
    MlpVars make_constants(Tape& tape) const;

    // Graph forward for a [B, in] input.
    Var apply(Tape& tape, const MlpVars& vars, Var x) const;

    // Value-only forward (no tape); used by the Monte-Carlo paths.
    Tensor forward_values(const Tensor& x) const;

    std::size_t n_tensors() const { return weights.size() + biases.size(); }
};

// The learned transmit alphabet: gamma-scaled points with probabilities.
struct ShapedConstellation {
    std::vector<std::complex<double>> points;
    std::vector<double> probs;
    double gamma = 1.0;

    double entropy_bits() const;
};

// gamma = (sum_i p_i |c_i|^2)^(-1/2); scaled points have unit average power.
ShapedConstellation normalize(const std::vector<std::complex<double>>& raw_points,
                              const std::vector<double>& probs);

// One Gumbel-max draw: hard one-hot at argmax(g_i + log p_i) plus the
// temperature-softened relaxation softmax((log p_i + g_i)/tau).
struct SymbolDraw {
    std::vector<double> hard;
    std::vector<double> soft;
    std::size_t index = 0;
};

SymbolDraw gumbel_draw(std::span<const double> probs, double tau, Rng& rng);

// Number of probability entries clamped to the 1e-30 floor so far.
std::uint64_t gumbel_clamp_count();
void reset_gumbel_clamp_count();

// Forward value is the hard one-hot; the adjoint flows to the soft vector
// unchanged (straight-through estimator). soft is [B,M], hard matches.
Var ste_combine_node(Tape& tape, Var soft, const Tensor& hard);

// --- whole-model helpers ---

struct ShapingModel {
    std::size_t m = 0;
    Mlp nn1, nn2, nn3;

    void init(std::size_t m_points, Rng& rng);

    // Value-level heads.
    std::vector<double> distribution(double snr_db) const;              // NN1 + softmax
    std::vector<std::complex<double>> raw_constellation() const;        // NN2 on identity
    ShapedConstellation constellation(double snr_db) const;             // normalized
    Tensor demap(const Tensor& y_ri) const;                             // [K,2] -> [K,M] posteriors

    std::vector<std::pair<std::string, Tensor*>> named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
};

} // namespace oshape
