#pragma once

#include <functional>
#include <iosfwd>

#include "oshape/baselines.hpp"
#include "oshape/metric_curve.hpp"
#include "oshape/model.hpp"
#include "oshape/trainer.hpp"

namespace oshape {

// Produces the clipped transmit signal of one frame. Each frame gets an
// independent substream Rng derived from (seed, frame index), so results do
// not depend on the worker count.
using FrameTx = std::function<std::vector<double>(std::size_t frame_idx, Rng& rng)>;

FrameTx shaped_frame_tx(const ShapingModel& model, double snr_db, std::size_t n_data);
FrameTx uniform_frame_tx(const UniformQam& qam, std::size_t n_data);
FrameTx slm_frame_tx(const UniformQam& qam, std::size_t n_data, SlmConfig slm);
FrameTx clip_frame_tx(const UniformQam& qam, std::size_t n_data, double cr_db);

MetricCurve eval_papr_ccdf(const FrameTx& tx, std::size_t n_frames,
                           std::span<const double> thresholds_db, std::uint64_t seed,
                           int threads = 1);

// Raw per-frame PAPR samples (dB), frame i from substream (seed, i).
std::vector<double> collect_papr_db(const FrameTx& tx, std::size_t n_frames,
                                    std::uint64_t seed, int threads = 1);

// Empirical PAPR0 at which the CCDF crosses p (order statistic).
double papr_at_ccdf(std::vector<double> paprs_db, double p);

struct MiEstimate {
    double mi_bits = 0.0;
    double entropy_bits = 0.0;
    std::size_t n_symbols = 0;
};

// H(p) - E[-log2 posterior] over fresh noise at snr_db.
MiEstimate eval_mi(const ShapingModel& model, double snr_db, std::size_t n_symbols,
                   std::size_t n_data, std::uint64_t seed, int threads = 1);

// Uniform-signaling reference: fixed QAM geometry, uniform probabilities,
// an auxiliary demapper trained for detection only.
Mlp train_uniform_demapper(const UniformQam& qam, double snr_db, std::size_t n_data,
                           std::size_t steps, std::size_t batch_symbols, std::uint64_t seed);

MiEstimate eval_mi_uniform(const UniformQam& qam, const Mlp& demapper, double snr_db,
                           std::size_t n_symbols, std::size_t n_data, std::uint64_t seed,
                           int threads = 1);

// SER estimates; values are exact ratios of integer counters.
struct SerEstimate {
    std::size_t errors = 0;
    std::size_t n_symbols = 0;
    double value() const {
        return static_cast<double>(errors) / static_cast<double>(n_symbols);
    }
    double std_error() const {
        double p = value();
        return std::sqrt(p * (1.0 - p) / static_cast<double>(n_symbols));
    }
};

SerEstimate eval_ser_shaped(const ShapingModel& model, double snr_db, std::size_t n_symbols,
                            std::size_t n_data, std::uint64_t seed, int threads = 1);
SerEstimate eval_ser_uniform(const UniformQam& qam, double snr_db, std::size_t n_symbols,
                             std::size_t n_data, std::uint64_t seed, int threads = 1);
SerEstimate eval_ser_clip(const UniformQam& qam, double cr_db, double snr_db,
                          std::size_t n_symbols, std::size_t n_data, std::uint64_t seed,
                          int threads = 1);
SerEstimate eval_ser_slm(const UniformQam& qam, SlmConfig slm, double snr_db,
                         std::size_t n_symbols, std::size_t n_data, std::uint64_t seed,
                         int threads = 1);

// One line per point: `index re im prob`, gamma-normalized; the entropy is
// printed in the header.
void write_constellation(std::ostream& out, const ShapedConstellation& c,
                         const std::string& header_comment = "");

// CSV writers (schemas: snr_db,mi_bits,n_symbols,seed / snr_db,ser,n_symbols,seed
// / papr0_db,ccdf,n_frames,seed).
void write_mi_csv(std::ostream& out, const MetricCurve& curve,
                  const std::string& header_comment = "");
void write_ser_csv(std::ostream& out, const MetricCurve& curve,
                   const std::string& header_comment = "");
void write_ccdf_csv(std::ostream& out, const MetricCurve& curve,
                    const std::string& header_comment = "");

} // namespace oshape
