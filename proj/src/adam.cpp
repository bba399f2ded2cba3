#include "oshape/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace oshape {

Adam::Adam(AdamConfig cfg, const std::vector<std::pair<std::string, const Tensor*>>& params)
    : cfg_(cfg) {
    slots_.reserve(params.size());
    for (const auto& [name, t] : params) {
        Slot s;
        s.name = name;
        s.m = Tensor(t->shape);
        s.v = Tensor(t->shape);
        slots_.push_back(std::move(s));
    }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != slots_.size() || grads.size() != slots_.size())
        throw std::invalid_argument("adam: parameter list does not match registration");
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        Slot& s = slots_[i];
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(s.m) || !g.same_shape(s.m))
            throw std::invalid_argument("adam: shape mismatch for " + s.name);
        for (std::size_t k = 0; k < p.numel(); ++k) {
            double gk = g.data[k];
            if (!std::isfinite(gk))
                throw std::runtime_error("adam: non-finite gradient in " + s.name +
                                         " at step " + std::to_string(step_));
            s.m.data[k] = cfg_.beta1 * s.m.data[k] + (1.0 - cfg_.beta1) * gk;
            s.v.data[k] = cfg_.beta2 * s.v.data[k] + (1.0 - cfg_.beta2) * gk * gk;
            double mhat = s.m.data[k] / bc1;
            double vhat = s.v.data[k] / bc2;
            p.data[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

} // namespace oshape
