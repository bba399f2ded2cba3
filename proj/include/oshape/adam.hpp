#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oshape/tensor.hpp"

namespace oshape {

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction over a fixed set of named parameter tensors.
// Moment buffers are created at registration time and match the parameter
// shapes for the lifetime of the optimizer.
class Adam {
public:
    Adam(AdamConfig cfg, const std::vector<std::pair<std::string, const Tensor*>>& params);

    // One update over all registered parameters. params[i] must alias the
    // tensor registered at index i; grads[i] holds dL/dparam. A non-finite
    // gradient aborts with the parameter name and the current step index.
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    long step_count() const { return step_; }

private:
    struct Slot {
        std::string name;
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::vector<Slot> slots_;
    long step_ = 0;
};

} // namespace oshape
