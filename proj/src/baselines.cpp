#include "oshape/baselines.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace oshape {

UniformQam qam_constellation(std::size_t m) {
    std::size_t side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(m))));
    if (side * side != m || m < 4)
        throw std::invalid_argument("qam_constellation: M must be a perfect square >= 4");
    // odd-coordinate grid: per-axis mean square of {±1, ±3, ...} is (side^2-1)/3
    double scale = 1.0 / std::sqrt(2.0 * (static_cast<double>(side * side) - 1.0) / 3.0);
    UniformQam q;
    q.m = m;
    q.probs.assign(m, 1.0 / static_cast<double>(m));
    q.points.reserve(m);
    for (std::size_t r = 0; r < side; ++r) {
        double re = (2.0 * static_cast<double>(r) - static_cast<double>(side - 1));
        for (std::size_t c = 0; c < side; ++c) {
            double im = (2.0 * static_cast<double>(c) - static_cast<double>(side - 1));
            q.points.emplace_back(re * scale, im * scale);
        }
    }
    return q;
}

std::size_t ml_detect(std::complex<double> y_sub,
                      const std::vector<std::complex<double>>& points) {
    std::complex<double> y = 2.0 * y_sub;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
        double d = std::norm(y - points[i]);
        if (d < best_d) { // strict <, first minimum wins ties
            best_d = d;
            best = i;
        }
    }
    return best;
}

std::vector<double> amp_clip(std::span<const double> x, double cr_db) {
    double mean = 0.0;
    for (double v : x) mean += v * v;
    mean /= static_cast<double>(x.size());
    double a = std::sqrt(mean) * std::pow(10.0, cr_db / 20.0);
    std::vector<double> out(x.begin(), x.end());
    for (double& v : out)
        if (v > a) v = a;
    return out;
}

SlmResult slm_select(const ComplexVector& data, const SlmConfig& cfg, Rng& rng) {
    if (cfg.u == 0) throw std::invalid_argument("slm_select: need at least one candidate");
    std::size_t n = data.size();
    static const std::complex<double> alphabet[4] = {
        {1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};

    SlmResult best;
    double best_papr = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < cfg.u; ++u) {
        std::vector<std::complex<double>> phase(n, {1.0, 0.0});
        if (u > 0)
            for (std::size_t k = 0; k < n; ++k) phase[k] = alphabet[rng.uniform_index(4)];
        ComplexVector rotated(n);
        for (std::size_t k = 0; k < n; ++k) rotated.set(k, data.at(k) * phase[k]);
        OfdmFrame f = modulate(rotated);
        double p = papr(f.time_clipped).value_linear;
        if (p < best_papr) {
            best_papr = p;
            best.frame = std::move(f);
            best.chosen = u;
            best.phase = std::move(phase);
        }
    }
    return best;
}

} // namespace oshape
