#pragma once

#include <functional>
#include <vector>

#include "oshape/tape.hpp"

namespace oshape {

// Builds a scalar-valued graph from the current parameter values. The
// builder must be deterministic: two calls with the same parameter values
// have to produce the same scalar (freeze any noise outside).
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_param = 0;   // index into the flattened parameter list
    std::size_t worst_elem = 0;
    double analytic = 0.0;
    double central_diff = 0.0;
    std::size_t n_checked = 0;
};

// Compares the tape gradient of build(...) against central finite
// differences for every element of every parameter. Relative error is
// |analytic - cd| / (|analytic| + |cd| + 1e-12).
GradCheckReport grad_check(const GraphBuilder& build, std::vector<Tensor>& params, double h);

// Same comparison restricted to chosen (param, element) positions.
GradCheckReport grad_check_subset(const GraphBuilder& build, std::vector<Tensor>& params,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& elems,
                                  double h);

} // namespace oshape
