#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "oshape/model.hpp"
#include "oshape/ofdm.hpp"

namespace oshape {

struct TrainConfig {
    std::size_t m = 16;
    std::size_t n_data = 16;   // data subcarriers per frame (4N total)
    double snr_db = 10.0;
    double lambda = 0.01;
    double tau = 1.0;
    double lr = 0.01;
    std::size_t batch_symbols = 3008; // whole frames: divisible by n_data
    std::size_t steps_phase1 = 4500;
    std::size_t steps_phase2 = 4500;
    std::uint64_t seed = 1;

    void validate() const; // throws std::invalid_argument naming the field
};

struct LossBreakdown {
    double cross_entropy = 0.0; // nats
    double entropy = 0.0;       // nats
    double papr_term = 0.0;     // batch-mean PAPR, linear
    double total = 0.0;

    double mi_nats() const { return entropy - cross_entropy; }
    double mi_bits() const { return mi_nats() / std::log(2.0); }
    double papr_db() const { return 10.0 * std::log10(papr_term); }
};

struct TraceRow {
    std::size_t step = 0;
    int phase = 1;
    LossBreakdown loss;
};

struct TrainRun {
    TrainConfig cfg;
    ShapingModel model;
    std::vector<TraceRow> trace;
    int final_phase = 1;
    // Loss of one deterministic held-out batch, for replay verification.
    double final_eval_loss = 0.0;
};

// Per-step noise: standard Gumbel draws for the sampler and pre-scaled
// AWGN for the channel, both consumed row-major in that order.
struct BatchNoise {
    Tensor gumbel; // [batch_symbols, m]
    Tensor awgn;   // [frames, 4*n_data], already scaled by sigma
};

BatchNoise draw_batch_noise(const TrainConfig& cfg, Rng& rng);

// Handles into one built loss graph.
struct LossGraph {
    Var total;
    Var cross_entropy;
    Var entropy;
    Var papr_mean;
    std::vector<std::size_t> labels;
    std::vector<Var> frame_time; // unclipped time signal per frame, [4N]
};

// Canonical parameter order: nn1.w0, nn1.b0, ..., nn1.w3, nn1.b3, then nn2,
// then nn3 (matches ShapingModel::named_tensors()).
std::vector<Tensor> canonical_params(const ShapingModel& model);
void assign_canonical_params(ShapingModel& model, const std::vector<Tensor>& params);

// Builds the full differentiable chain on the tape:
//   NN1 -> Gumbel-Softmax draw -> symbol vector -> NN2 -> normalization ->
//   Hermitian map -> IFFT -> clip -> AWGN -> FFT -> NN3 -> cross entropy,
// plus the analytic source entropy and the per-frame PAPR average.
// include_papr adds lambda * mean-PAPR to the total. relaxed replaces the
// straight-through symbol by its soft relaxation (a smooth forward, used
// for finite-difference verification).
LossGraph build_loss_graph(Tape& tape, const std::vector<Var>& params, const TrainConfig& cfg,
                           const BatchNoise& noise, bool include_papr, bool relaxed);

// Convenience single evaluation; phase selects whether the PAPR term is
// part of the total (phase 2 with lambda > 0).
LossBreakdown forward_batch(const ShapingModel& model, const TrainConfig& cfg, Rng& rng,
                            int phase);

// Raised when training hits a non-finite loss or the divergence guard.
struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& what, std::vector<TraceRow> trace_so_far = {})
        : std::runtime_error(what), trace(std::move(trace_so_far)) {}
    std::vector<TraceRow> trace;
};

using StepCallback = std::function<void(const TraceRow&)>;

// Phase 1 minimizes CE - H; phase 2 continues with CE - H + lambda*PAPR.
TrainRun train_two_phase(const TrainConfig& cfg, const StepCallback& on_step = nullptr);

// --- checkpoint / trace persistence ---

struct CheckpointError : std::runtime_error {
    CheckpointError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset;
};

struct Checkpoint {
    TrainConfig cfg;
    int phase = 1;
    ShapingModel model;
};

void checkpoint_save(const TrainRun& run, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

// CSV: step,phase,cross_entropy,entropy,papr_db,total. header_comment, when
// nonempty, is written first as a '#' line.
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows,
                     const std::string& header_comment = "");

} // namespace oshape
