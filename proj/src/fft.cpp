#include "oshape/fft.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace oshape {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

struct Twiddles {
    std::vector<double> cos_fwd, sin_fwd; // exp(-j 2 pi i / n), i < n/2
};

// Tables are small (largest L in use is ~1k) and reused heavily by the
// Monte-Carlo paths, so cache per length.
const Twiddles& twiddles_for(std::size_t n) {
    thread_local std::map<std::size_t, Twiddles> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Twiddles tw;
    tw.cos_fwd.resize(n / 2);
    tw.sin_fwd.resize(n / 2);
    for (std::size_t i = 0; i < n / 2; ++i) {
        double a = -2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
        tw.cos_fwd[i] = std::cos(a);
        tw.sin_fwd[i] = std::sin(a);
    }
    return cache.emplace(n, std::move(tw)).first->second;
}

} // namespace

void unitary_dft_inplace(double* re, double* im, std::size_t n, bool inverse) {
    if (!is_pow2(n))
        throw std::invalid_argument("unitary_dft: length " + std::to_string(n) +
                                    " is not a power of two");
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    // stored twiddles are the forward kernel exp(-j 2 pi i / n); the inverse
    // direction conjugates them
    const Twiddles& tw = twiddles_for(n);
    double sign = inverse ? -1.0 : 1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        std::size_t stride = n / len;
        std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                double wr = tw.cos_fwd[k * stride];
                double wi = sign * tw.sin_fwd[k * stride];
                std::size_t a = i + k, b = i + k + half;
                double xr = re[b] * wr - im[b] * wi;
                double xi = re[b] * wi + im[b] * wr;
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
        }
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        re[i] *= scale;
        im[i] *= scale;
    }
}

ComplexVector unitary_dft(const ComplexVector& v, bool inverse) {
    ComplexVector out = v;
    unitary_dft_inplace(out.re.data(), out.im.data(), out.size(), inverse);
    return out;
}

Var unitary_dft_node(Tape& tape, Var xc, bool inverse) {
    const Tensor& xv = tape.value(xc);
    xv.require_rank(2);
    if (xv.rows() != 2) throw std::invalid_argument("unitary_dft_node: expected [2,L] tensor");
    std::size_t n = xv.cols();
    Tensor out = xv;
    unitary_dft_inplace(out.data.data(), out.data.data() + n, n, inverse);
    return tape.custom({xc}, std::move(out), [inverse, n](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        Tensor g = t.out_grad(self);
        unitary_dft_inplace(g.data.data(), g.data.data() + n, n, !inverse);
        t.accumulate(p, g);
    });
}

} // namespace oshape
