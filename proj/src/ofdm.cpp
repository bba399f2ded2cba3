#include "oshape/ofdm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oshape {

NoiseSpec NoiseSpec::from_snr_db(double snr_db) {
    NoiseSpec n;
    n.snr_db = snr_db;
    n.sigma2 = 0.25 / std::pow(10.0, snr_db / 10.0);
    return n;
}

ComplexVector hermitian_map(const ComplexVector& data) {
    std::size_t n = data.size();
    if (n == 0) throw std::invalid_argument("hermitian_map: empty data");
    ComplexVector out(4 * n);
    for (std::size_t k = 0; k < n; ++k) {
        out.re[2 * k + 1] = data.re[k];
        out.im[2 * k + 1] = data.im[k];
        out.re[4 * n - 2 * k - 1] = data.re[k];
        out.im[4 * n - 2 * k - 1] = -data.im[k];
    }
    return out;
}

OfdmFrame modulate(const ComplexVector& data) {
    OfdmFrame f;
    f.n_data = data.size();
    f.data = data;
    f.freq = hermitian_map(data);
    ComplexVector t = unitary_dft(f.freq, true);
    std::size_t L = t.size();
    for (std::size_t i = 0; i < L; ++i) {
        if (std::abs(t.im[i]) >= 1e-10)
            throw std::runtime_error("modulate: residual imaginary part " +
                                     std::to_string(t.im[i]) + " at sample " +
                                     std::to_string(i));
    }
    f.time_unclipped = std::move(t.re);
    f.time_clipped.resize(L);
    for (std::size_t i = 0; i < L; ++i)
        f.time_clipped[i] = f.time_unclipped[i] > 0.0 ? f.time_unclipped[i] : 0.0;
    return f;
}

std::vector<double> channel(std::span<const double> x, const NoiseSpec& noise, Rng& rng) {
    if (noise.sigma2 < 0.0) throw std::invalid_argument("channel: negative variance");
    std::vector<double> y(x.begin(), x.end());
    if (noise.sigma2 == 0.0) return y;
    double sd = std::sqrt(noise.sigma2);
    for (double& v : y) v += sd * rng.gaussian();
    return y;
}

ComplexVector demodulate(std::span<const double> y) {
    std::size_t L = y.size();
    if (L % 4 != 0) throw std::invalid_argument("demodulate: length not a multiple of 4");
    std::size_t n = L / 4;
    ComplexVector t(L);
    std::copy(y.begin(), y.end(), t.re.begin());
    ComplexVector Y = unitary_dft(t, false);
    ComplexVector out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.re[k] = Y.re[2 * k + 1];
        out.im[k] = Y.im[2 * k + 1];
    }
    return out;
}

PaprSample papr(std::span<const double> x) {
    double peak = 0.0, acc = 0.0;
    for (double v : x) {
        double p = v * v;
        if (p > peak) peak = p;
        acc += p;
    }
    if (acc == 0.0) throw std::invalid_argument("papr: undefined for an all-zero signal");
    PaprSample s;
    s.value_linear = peak / (acc / static_cast<double>(x.size()));
    s.value_db = 10.0 * std::log10(s.value_linear);
    return s;
}

MetricCurve ccdf(std::span<const double> paprs_db, std::span<const double> thresholds_db) {
    if (paprs_db.empty()) throw std::invalid_argument("ccdf: empty sample set");
    MetricCurve c;
    c.label = "ccdf";
    for (double t : thresholds_db) {
        std::size_t count = 0;
        for (double p : paprs_db)
            if (p >= t) ++count;
        c.x.push_back(t);
        c.y.push_back(static_cast<double>(count) / static_cast<double>(paprs_db.size()));
        c.n_samples.push_back(paprs_db.size());
    }
    return c;
}

// --- differentiable chain ---

Var hermitian_map_node(Tape& tape, Var data_ri) {
    const Tensor& d = tape.value(data_ri);
    d.require_rank(2);
    if (d.cols() != 2) throw std::invalid_argument("hermitian_map_node: expected [N,2]");
    std::size_t n = d.rows();
    std::size_t L = 4 * n;
    Tensor out = Tensor::matrix(2, L);
    for (std::size_t k = 0; k < n; ++k) {
        out(0, 2 * k + 1) = d(k, 0);
        out(1, 2 * k + 1) = d(k, 1);
        out(0, L - 2 * k - 1) = d(k, 0);
        out(1, L - 2 * k - 1) = -d(k, 1);
    }
    return tape.custom({data_ri}, std::move(out), [n, L](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        Tensor gd = Tensor::matrix(n, 2);
        for (std::size_t k = 0; k < n; ++k) {
            gd(k, 0) = g(0, 2 * k + 1) + g(0, L - 2 * k - 1);
            gd(k, 1) = g(1, 2 * k + 1) - g(1, L - 2 * k - 1);
        }
        t.accumulate(p, gd);
    });
}

Var modulate_real_node(Tape& tape, Var freq_c) {
    Var xc = unitary_dft_node(tape, freq_c, true);
    const Tensor& v = tape.value(xc);
    std::size_t L = v.cols();
    for (std::size_t i = 0; i < L; ++i) {
        if (std::abs(v(1, i)) >= 1e-10)
            throw std::runtime_error("modulate_real_node: residual imaginary part " +
                                     std::to_string(v(1, i)) + " at sample " +
                                     std::to_string(i));
    }
    Tensor out({L});
    for (std::size_t i = 0; i < L; ++i) out[i] = v(0, i);
    return tape.custom({xc}, std::move(out), [L](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        Tensor gp = Tensor::matrix(2, L);
        for (std::size_t i = 0; i < L; ++i) gp(0, i) = g[i];
        t.accumulate(p, gp);
    });
}

Var clip_nonneg_node(Tape& tape, Var x) {
    Tensor out = tape.value(x);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return tape.custom({x}, std::move(out), [](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        const Tensor& xv = t.value_of(p);
        Tensor gx(xv.shape);
        // subgradient at exactly zero passes
        for (std::size_t i = 0; i < gx.data.size(); ++i)
            gx.data[i] = xv.data[i] >= 0.0 ? g.data[i] : 0.0;
        t.accumulate(p, gx);
    });
}

Var real_to_complex_node(Tape& tape, Var x) {
    const Tensor& xv = tape.value(x);
    xv.require_rank(1);
    std::size_t L = xv.numel();
    Tensor out = Tensor::matrix(2, L);
    for (std::size_t i = 0; i < L; ++i) out(0, i) = xv[i];
    return tape.custom({x}, std::move(out), [L](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        Tensor gx({L});
        for (std::size_t i = 0; i < L; ++i) gx[i] = g(0, i);
        t.accumulate(p, gx);
    });
}

Var extract_data_node(Tape& tape, Var yc) {
    const Tensor& v = tape.value(yc);
    v.require_rank(2);
    if (v.rows() != 2 || v.cols() % 4 != 0)
        throw std::invalid_argument("extract_data_node: expected [2,4N]");
    std::size_t n = v.cols() / 4;
    Tensor out = Tensor::matrix(n, 2);
    for (std::size_t k = 0; k < n; ++k) {
        out(k, 0) = v(0, 2 * k + 1);
        out(k, 1) = v(1, 2 * k + 1);
    }
    return tape.custom({yc}, std::move(out), [n](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        Tensor gy(t.value_of(p).shape);
        for (std::size_t k = 0; k < n; ++k) {
            gy(0, 2 * k + 1) = g(k, 0);
            gy(1, 2 * k + 1) = g(k, 1);
        }
        t.accumulate(p, gy);
    });
}

Var papr_linear_node(Tape& tape, Var x) {
    Var sq = tape.mul(x, x);
    return tape.div(tape.max_all(sq), tape.mean(sq));
}

} // namespace oshape
