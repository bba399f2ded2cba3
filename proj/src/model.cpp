#include "oshape/model.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace oshape {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::atomic<std::uint64_t> g_gumbel_clamps{0};

} // namespace

std::vector<std::size_t> NetConfig::widths() const {
    std::vector<std::size_t> w;
    w.push_back(in);
    for (std::size_t h : hidden) w.push_back(h);
    w.push_back(out);
    return w;
}

void Mlp::init(const NetConfig& c, Rng& rng) {
    cfg = c;
    weights.clear();
    biases.clear();
    auto w = c.widths();
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        Tensor wt = Tensor::matrix(w[l], w[l + 1]);
        double limit = std::sqrt(6.0 / static_cast<double>(w[l] + w[l + 1]));
        for (double& v : wt.data) v = (2.0 * rng.uniform01() - 1.0) * limit;
        weights.push_back(std::move(wt));
        biases.push_back(Tensor({w[l + 1]}));
    }
}

MlpVars Mlp::make_params(Tape& tape) const {
    MlpVars v;
    for (const Tensor& w : weights) v.w.push_back(tape.param(w));
    for (const Tensor& b : biases) v.b.push_back(tape.param(b));
    return v;
}

MlpVars Mlp::make_constants(Tape& tape) const {
    MlpVars v;
    for (const Tensor& w : weights) v.w.push_back(tape.constant(w));
    for (const Tensor& b : biases) v.b.push_back(tape.constant(b));
    return v;
}

Var Mlp::apply(Tape& tape, const MlpVars& vars, Var x) const {
    Var h = x;
    for (std::size_t l = 0; l < vars.w.size(); ++l) {
        h = tape.affine(h, vars.w[l], vars.b[l]);
        if (l + 1 < vars.w.size()) h = tape.relu(h);
    }
    return h;
}

Tensor Mlp::forward_values(const Tensor& x) const {
    x.require_rank(2);
    EMat h = Eigen::Map<const EMat>(x.data.data(), x.rows(), x.cols());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const Tensor& w = weights[l];
        EMat z = h * Eigen::Map<const EMat>(w.data.data(), w.rows(), w.cols());
        for (Eigen::Index r = 0; r < z.rows(); ++r)
            for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) += biases[l].data[c];
        if (l + 1 < weights.size()) z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    Tensor out = Tensor::matrix(h.rows(), h.cols());
    Eigen::Map<EMat>(out.data.data(), h.rows(), h.cols()) = h;
    return out;
}

double ShapedConstellation::entropy_bits() const {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log2(p);
    return h;
}

ShapedConstellation normalize(const std::vector<std::complex<double>>& raw_points,
                              const std::vector<double>& probs) {
    if (raw_points.size() != probs.size())
        throw std::invalid_argument("normalize: size mismatch");
    double avg = 0.0;
    for (std::size_t i = 0; i < raw_points.size(); ++i)
        avg += probs[i] * std::norm(raw_points[i]);
    if (avg <= 0.0)
        throw std::invalid_argument("normalize: degenerate all-zero geometry");
    ShapedConstellation c;
    c.gamma = 1.0 / std::sqrt(avg);
    c.probs = probs;
    c.points.reserve(raw_points.size());
    for (const auto& p : raw_points) c.points.push_back(p * c.gamma);
    return c;
}

SymbolDraw gumbel_draw(std::span<const double> probs, double tau, Rng& rng) {
    if (tau <= 0.0) throw std::invalid_argument("gumbel_draw: tau must be positive");
    std::size_t m = probs.size();
    SymbolDraw d;
    d.hard.assign(m, 0.0);
    d.soft.resize(m);
    std::vector<double> z(m);
    for (std::size_t i = 0; i < m; ++i) {
        double p = probs[i];
        if (p < 1e-30) {
            p = 1e-30;
            g_gumbel_clamps.fetch_add(1, std::memory_order_relaxed);
        }
        z[i] = std::log(p) + rng.gumbel();
    }
    d.index = 0;
    for (std::size_t i = 1; i < m; ++i)
        if (z[i] > z[d.index]) d.index = i;
    d.hard[d.index] = 1.0;
    double mx = z[d.index] / tau;
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        d.soft[i] = std::exp(z[i] / tau - mx);
        sum += d.soft[i];
    }
    for (double& s : d.soft) s /= sum;
    return d;
}

std::uint64_t gumbel_clamp_count() { return g_gumbel_clamps.load(); }
void reset_gumbel_clamp_count() { g_gumbel_clamps.store(0); }

Var ste_combine_node(Tape& tape, Var soft, const Tensor& hard) {
    const Tensor& s = tape.value(soft);
    if (!s.same_shape(hard))
        throw std::invalid_argument("ste_combine: hard/soft shape mismatch");
    return tape.custom({soft}, hard, [](Tape& t, int self) {
        t.accumulate(t.parents_of(self)[0], t.out_grad(self));
    });
}

void ShapingModel::init(std::size_t m_points, Rng& rng) {
    m = m_points;
    nn1.init(NetConfig::nn1(m), rng);
    nn2.init(NetConfig::nn2(m), rng);
    nn3.init(NetConfig::nn3(m), rng);
}

std::vector<double> ShapingModel::distribution(double snr_db) const {
    Tensor in = Tensor::matrix(1, 1);
    in(0, 0) = snr_db;
    Tensor logits = nn1.forward_values(in);
    double mx = logits[0];
    for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, logits[i]);
    std::vector<double> p(m);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::vector<std::complex<double>> ShapingModel::raw_constellation() const {
    Tensor eye = Tensor::matrix(m, m);
    for (std::size_t i = 0; i < m; ++i) eye(i, i) = 1.0;
    Tensor pts = nn2.forward_values(eye);
    std::vector<std::complex<double>> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = {pts(i, 0), pts(i, 1)};
    return out;
}

ShapedConstellation ShapingModel::constellation(double snr_db) const {
    return normalize(raw_constellation(), distribution(snr_db));
}

Tensor ShapingModel::demap(const Tensor& y_ri) const {
    Tensor logits = nn3.forward_values(y_ri);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        double mx = logits(r, 0);
        for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            logits(r, c) = std::exp(logits(r, c) - mx);
            sum += logits(r, c);
        }
        for (std::size_t c = 0; c < logits.cols(); ++c) logits(r, c) /= sum;
    }
    return logits;
}

std::vector<std::pair<std::string, Tensor*>> ShapingModel::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    Mlp* nets[3] = {&nn1, &nn2, &nn3};
    const char* names[3] = {"nn1", "nn2", "nn3"};
    for (int i = 0; i < 3; ++i) {
        for (std::size_t l = 0; l < nets[i]->weights.size(); ++l) {
            out.emplace_back(std::string(names[i]) + ".w" + std::to_string(l),
                             &nets[i]->weights[l]);
            out.emplace_back(std::string(names[i]) + ".b" + std::to_string(l),
                             &nets[i]->biases[l]);
        }
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ShapingModel::named_tensors() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<ShapingModel*>(this)->named_tensors())
        out.emplace_back(name, t);
    return out;
}

} // namespace oshape
