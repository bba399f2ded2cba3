#include "oshape/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>
#include <thread>

#include "oshape/adam.hpp"

namespace oshape {

namespace {

// Runs fn(i, rng_i) for i in [0, n) with per-index substreams; slots are
// written independently so the result is identical for any thread count.
void parallel_frames(std::size_t n, std::uint64_t seed, int threads,
                     const std::function<void(std::size_t, Rng&)>& fn) {
    int workers = std::max(1, threads);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            Rng rng = Rng::substream(seed, i);
            fn(i, rng);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, seed, &fn] {
            for (std::size_t i = lo; i < hi; ++i) {
                Rng rng = Rng::substream(seed, i);
                fn(i, rng);
            }
        });
    }
    for (auto& t : pool) t.join();
}

std::size_t draw_categorical(std::span<const double> probs, Rng& rng) {
    double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

ComplexVector pick_symbols(const std::vector<std::complex<double>>& points,
                           std::span<const std::size_t> idx) {
    ComplexVector v(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) v.set(k, points[idx[k]]);
    return v;
}

} // namespace

FrameTx shaped_frame_tx(const ShapingModel& model, double snr_db, std::size_t n_data) {
    auto shaped = std::make_shared<ShapedConstellation>(model.constellation(snr_db));
    return [shaped, n_data](std::size_t, Rng& rng) {
        std::vector<std::size_t> idx(n_data);
        for (auto& i : idx) i = draw_categorical(shaped->probs, rng);
        return modulate(pick_symbols(shaped->points, idx)).time_clipped;
    };
}

FrameTx uniform_frame_tx(const UniformQam& qam, std::size_t n_data) {
    return [qam, n_data](std::size_t, Rng& rng) {
        std::vector<std::size_t> idx(n_data);
        for (auto& i : idx) i = rng.uniform_index(qam.m);
        return modulate(pick_symbols(qam.points, idx)).time_clipped;
    };
}

FrameTx slm_frame_tx(const UniformQam& qam, std::size_t n_data, SlmConfig slm) {
    return [qam, n_data, slm](std::size_t, Rng& rng) {
        std::vector<std::size_t> idx(n_data);
        for (auto& i : idx) i = rng.uniform_index(qam.m);
        return slm_select(pick_symbols(qam.points, idx), slm, rng).frame.time_clipped;
    };
}

FrameTx clip_frame_tx(const UniformQam& qam, std::size_t n_data, double cr_db) {
    return [qam, n_data, cr_db](std::size_t, Rng& rng) {
        std::vector<std::size_t> idx(n_data);
        for (auto& i : idx) i = rng.uniform_index(qam.m);
        return amp_clip(modulate(pick_symbols(qam.points, idx)).time_clipped, cr_db);
    };
}

std::vector<double> collect_papr_db(const FrameTx& tx, std::size_t n_frames,
                                    std::uint64_t seed, int threads) {
    std::vector<double> out(n_frames);
    parallel_frames(n_frames, seed, threads, [&](std::size_t i, Rng& rng) {
        out[i] = papr(tx(i, rng)).value_db;
    });
    return out;
}

MetricCurve eval_papr_ccdf(const FrameTx& tx, std::size_t n_frames,
                           std::span<const double> thresholds_db, std::uint64_t seed,
                           int threads) {
    std::vector<double> paprs = collect_papr_db(tx, n_frames, seed, threads);
    MetricCurve c = ccdf(paprs, thresholds_db);
    c.seed = seed;
    return c;
}

double papr_at_ccdf(std::vector<double> paprs_db, double p) {
    if (paprs_db.empty()) throw std::invalid_argument("papr_at_ccdf: empty sample set");
    std::sort(paprs_db.begin(), paprs_db.end(), std::greater<double>());
    auto k = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(p * static_cast<double>(paprs_db.size()))));
    k = std::min(k, paprs_db.size());
    return paprs_db[k - 1];
}

namespace {

struct ChainedFrame {
    Tensor rx;                      // [N,2] received data subcarriers
    std::vector<std::size_t> idx;   // transmitted indices
};

ChainedFrame run_chain(const std::vector<std::complex<double>>& points,
                       std::span<const double> probs, bool uniform, double snr_db,
                       std::size_t n_data, Rng& rng) {
    ChainedFrame f;
    f.idx.resize(n_data);
    for (auto& i : f.idx)
        i = uniform ? rng.uniform_index(points.size()) : draw_categorical(probs, rng);
    OfdmFrame frame = modulate(pick_symbols(points, f.idx));
    NoiseSpec noise = NoiseSpec::from_snr_db(snr_db);
    std::vector<double> y = channel(frame.time_clipped, noise, rng);
    ComplexVector rx = demodulate(y);
    f.rx = Tensor::matrix(n_data, 2);
    for (std::size_t k = 0; k < n_data; ++k) {
        f.rx(k, 0) = rx.re[k];
        f.rx(k, 1) = rx.im[k];
    }
    return f;
}

std::size_t frames_for(std::size_t n_symbols, std::size_t n_data) {
    return (n_symbols + n_data - 1) / n_data;
}

} // namespace

MiEstimate eval_mi(const ShapingModel& model, double snr_db, std::size_t n_symbols,
                   std::size_t n_data, std::uint64_t seed, int threads) {
    ShapedConstellation c = model.constellation(snr_db);
    std::size_t n_frames = frames_for(n_symbols, n_data);
    std::vector<double> frame_nll(n_frames, 0.0); // sum of -log2 posterior per frame
    parallel_frames(n_frames, seed, threads, [&](std::size_t i, Rng& rng) {
        ChainedFrame f = run_chain(c.points, c.probs, false, snr_db, n_data, rng);
        Tensor post = model.demap(f.rx);
        double acc = 0.0;
        for (std::size_t k = 0; k < n_data; ++k)
            acc += -std::log2(std::max(post(k, f.idx[k]), 1e-300));
        frame_nll[i] = acc;
    });
    double ce_bits = 0.0;
    for (double v : frame_nll) ce_bits += v;
    ce_bits /= static_cast<double>(n_frames * n_data);
    MiEstimate e;
    e.entropy_bits = c.entropy_bits();
    e.mi_bits = e.entropy_bits - ce_bits;
    e.n_symbols = n_frames * n_data;
    return e;
}

Mlp train_uniform_demapper(const UniformQam& qam, double snr_db, std::size_t n_data,
                           std::size_t steps, std::size_t batch_symbols, std::uint64_t seed) {
    if (batch_symbols % n_data != 0)
        throw std::invalid_argument("train_uniform_demapper: batch not a multiple of n_data");
    Rng rng(seed);
    Mlp dem;
    dem.init(NetConfig::nn3(qam.m), rng);

    std::vector<std::pair<std::string, const Tensor*>> reg;
    for (std::size_t l = 0; l < dem.weights.size(); ++l) {
        reg.emplace_back("aux.w" + std::to_string(l), &dem.weights[l]);
        reg.emplace_back("aux.b" + std::to_string(l), &dem.biases[l]);
    }
    Adam opt(AdamConfig{}, reg);

    std::size_t frames = batch_symbols / n_data;
    for (std::size_t step = 0; step < steps; ++step) {
        Tensor rx = Tensor::matrix(batch_symbols, 2);
        std::vector<std::size_t> labels(batch_symbols);
        for (std::size_t f = 0; f < frames; ++f) {
            ChainedFrame cf = run_chain(qam.points, qam.probs, true, snr_db, n_data, rng);
            for (std::size_t k = 0; k < n_data; ++k) {
                labels[f * n_data + k] = cf.idx[k];
                rx(f * n_data + k, 0) = cf.rx(k, 0);
                rx(f * n_data + k, 1) = cf.rx(k, 1);
            }
        }
        Tape tape;
        MlpVars vars = dem.make_params(tape);
        Var logits = dem.apply(tape, vars, tape.constant(rx));
        Var ce = tape.neg(tape.mean(tape.pick(tape.log_softmax_rows(logits), labels)));
        tape.backward(ce);
        std::vector<Tensor*> params;
        std::vector<const Tensor*> grads;
        for (std::size_t l = 0; l < dem.weights.size(); ++l) {
            params.push_back(&dem.weights[l]);
            grads.push_back(&tape.grad(vars.w[l]));
            params.push_back(&dem.biases[l]);
            grads.push_back(&tape.grad(vars.b[l]));
        }
        opt.step(params, grads);
    }
    return dem;
}

MiEstimate eval_mi_uniform(const UniformQam& qam, const Mlp& demapper, double snr_db,
                           std::size_t n_symbols, std::size_t n_data, std::uint64_t seed,
                           int threads) {
    std::size_t n_frames = frames_for(n_symbols, n_data);
    std::vector<double> frame_nll(n_frames, 0.0);
    parallel_frames(n_frames, seed, threads, [&](std::size_t i, Rng& rng) {
        ChainedFrame f = run_chain(qam.points, qam.probs, true, snr_db, n_data, rng);
        Tensor logits = demapper.forward_values(f.rx);
        double acc = 0.0;
        for (std::size_t k = 0; k < n_data; ++k) {
            double mx = logits(k, 0);
            for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits(k, c));
            double sum = 0.0;
            for (std::size_t c = 0; c < logits.cols(); ++c)
                sum += std::exp(logits(k, c) - mx);
            double logpost = logits(k, f.idx[k]) - mx - std::log(sum);
            acc += -logpost / std::log(2.0);
        }
        frame_nll[i] = acc;
    });
    double ce_bits = 0.0;
    for (double v : frame_nll) ce_bits += v;
    ce_bits /= static_cast<double>(n_frames * n_data);
    MiEstimate e;
    e.entropy_bits = std::log2(static_cast<double>(qam.m));
    e.mi_bits = e.entropy_bits - ce_bits;
    e.n_symbols = n_frames * n_data;
    return e;
}

SerEstimate eval_ser_shaped(const ShapingModel& model, double snr_db, std::size_t n_symbols,
                            std::size_t n_data, std::uint64_t seed, int threads) {
    ShapedConstellation c = model.constellation(snr_db);
    std::size_t n_frames = frames_for(n_symbols, n_data);
    std::vector<std::size_t> frame_errors(n_frames, 0);
    parallel_frames(n_frames, seed, threads, [&](std::size_t i, Rng& rng) {
        ChainedFrame f = run_chain(c.points, c.probs, false, snr_db, n_data, rng);
        Tensor post = model.demap(f.rx);
        std::size_t errs = 0;
        for (std::size_t k = 0; k < n_data; ++k) {
            std::size_t arg = 0;
            for (std::size_t q = 1; q < post.cols(); ++q)
                if (post(k, q) > post(k, arg)) arg = q;
            if (arg != f.idx[k]) ++errs;
        }
        frame_errors[i] = errs;
    });
    SerEstimate e;
    for (std::size_t v : frame_errors) e.errors += v;
    e.n_symbols = n_frames * n_data;
    return e;
}

SerEstimate eval_ser_uniform(const UniformQam& qam, double snr_db, std::size_t n_symbols,
                             std::size_t n_data, std::uint64_t seed, int threads) {
    std::size_t n_frames = frames_for(n_symbols, n_data);
    std::vector<std::size_t> frame_errors(n_frames, 0);
    parallel_frames(n_frames, seed, threads, [&](std::size_t i, Rng& rng) {
        ChainedFrame f = run_chain(qam.points, qam.probs, true, snr_db, n_data, rng);
        std::size_t errs = 0;
        for (std::size_t k = 0; k < n_data; ++k) {
            std::complex<double> y{f.rx(k, 0), f.rx(k, 1)};
            if (ml_detect(y, qam.points) != f.idx[k]) ++errs;
        }
        frame_errors[i] = errs;
    });
    SerEstimate e;
    for (std::size_t v : frame_errors) e.errors += v;
    e.n_symbols = n_frames * n_data;
    return e;
}

SerEstimate eval_ser_clip(const UniformQam& qam, double cr_db, double snr_db,
                          std::size_t n_symbols, std::size_t n_data, std::uint64_t seed,
                          int threads) {
    std::size_t n_frames = frames_for(n_symbols, n_data);
    std::vector<std::size_t> frame_errors(n_frames, 0);
    NoiseSpec noise = NoiseSpec::from_snr_db(snr_db);
    parallel_frames(n_frames, seed, threads, [&](std::size_t i, Rng& rng) {
        std::vector<std::size_t> idx(n_data);
        for (auto& q : idx) q = rng.uniform_index(qam.m);
        OfdmFrame frame = modulate(pick_symbols(qam.points, idx));
        std::vector<double> clipped = amp_clip(frame.time_clipped, cr_db);
        std::vector<double> y = channel(clipped, noise, rng);
        ComplexVector rx = demodulate(y);
        std::size_t errs = 0;
        for (std::size_t k = 0; k < n_data; ++k)
            if (ml_detect(rx.at(k), qam.points) != idx[k]) ++errs;
        frame_errors[i] = errs;
    });
    SerEstimate e;
    for (std::size_t v : frame_errors) e.errors += v;
    e.n_symbols = n_frames * n_data;
    return e;
}

SerEstimate eval_ser_slm(const UniformQam& qam, SlmConfig slm, double snr_db,
                         std::size_t n_symbols, std::size_t n_data, std::uint64_t seed,
                         int threads) {
    std::size_t n_frames = frames_for(n_symbols, n_data);
    std::vector<std::size_t> frame_errors(n_frames, 0);
    NoiseSpec noise = NoiseSpec::from_snr_db(snr_db);
    parallel_frames(n_frames, seed, threads, [&](std::size_t i, Rng& rng) {
        std::vector<std::size_t> idx(n_data);
        for (auto& q : idx) q = rng.uniform_index(qam.m);
        SlmResult sel = slm_select(pick_symbols(qam.points, idx), slm, rng);
        std::vector<double> y = channel(sel.frame.time_clipped, noise, rng);
        ComplexVector rx = demodulate(y);
        std::size_t errs = 0;
        for (std::size_t k = 0; k < n_data; ++k) {
            // side information: undo the selected rotation before detection
            std::complex<double> derot = rx.at(k) * std::conj(sel.phase[k]);
            if (ml_detect(derot, qam.points) != idx[k]) ++errs;
        }
        frame_errors[i] = errs;
    });
    SerEstimate e;
    for (std::size_t v : frame_errors) e.errors += v;
    e.n_symbols = n_frames * n_data;
    return e;
}

void write_constellation(std::ostream& out, const ShapedConstellation& c,
                         const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out.precision(12);
    out << "# entropy_bits=" << c.entropy_bits() << " gamma=" << c.gamma << "\n";
    out << "# index re im prob\n";
    for (std::size_t i = 0; i < c.points.size(); ++i)
        out << i << " " << c.points[i].real() << " " << c.points[i].imag() << " "
            << c.probs[i] << "\n";
}

namespace {

void write_curve_csv(std::ostream& out, const MetricCurve& curve, const char* xname,
                     const char* yname, const char* nname,
                     const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << xname << "," << yname << "," << nname << ",seed\n";
    out.precision(12);
    for (std::size_t i = 0; i < curve.x.size(); ++i)
        out << curve.x[i] << "," << curve.y[i] << "," << curve.n_samples[i] << ","
            << curve.seed << "\n";
}

} // namespace

void write_mi_csv(std::ostream& out, const MetricCurve& curve,
                  const std::string& header_comment) {
    write_curve_csv(out, curve, "snr_db", "mi_bits", "n_symbols", header_comment);
}

void write_ser_csv(std::ostream& out, const MetricCurve& curve,
                   const std::string& header_comment) {
    write_curve_csv(out, curve, "snr_db", "ser", "n_symbols", header_comment);
}

void write_ccdf_csv(std::ostream& out, const MetricCurve& curve,
                    const std::string& header_comment) {
    write_curve_csv(out, curve, "papr0_db", "ccdf", "n_frames", header_comment);
}

} // namespace oshape
