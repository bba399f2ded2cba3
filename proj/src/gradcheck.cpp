#include "oshape/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace oshape {

namespace {

double eval_scalar(const GraphBuilder& build, const std::vector<Tensor>& params) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(tape.constant(p));
    Var out = build(tape, vars);
    if (tape.value(out).numel() != 1)
        throw std::invalid_argument("grad_check: builder output is not scalar");
    return tape.value(out).data[0];
}

GradCheckReport run_check(const GraphBuilder& build, std::vector<Tensor>& params,
                          const std::vector<std::pair<std::size_t, std::size_t>>& elems,
                          double h) {
    // analytic pass
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(tape.param(p));
    Var out = build(tape, vars);
    tape.backward(out);

    GradCheckReport rep;
    for (const auto& [pi, ei] : elems) {
        if (pi >= params.size() || ei >= params[pi].numel())
            throw std::invalid_argument("grad_check: element index out of range");
        double analytic = tape.grad(vars[pi]).data[ei];
        double saved = params[pi].data[ei];
        params[pi].data[ei] = saved + h;
        double fp = eval_scalar(build, params);
        params[pi].data[ei] = saved - h;
        double fm = eval_scalar(build, params);
        params[pi].data[ei] = saved;
        double cd = (fp - fm) / (2.0 * h);
        double rel = std::abs(analytic - cd) / (std::abs(analytic) + std::abs(cd) + 1e-12);
        ++rep.n_checked;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_param = pi;
            rep.worst_elem = ei;
            rep.analytic = analytic;
            rep.central_diff = cd;
        }
    }
    return rep;
}

} // namespace

GradCheckReport grad_check(const GraphBuilder& build, std::vector<Tensor>& params, double h) {
    std::vector<std::pair<std::size_t, std::size_t>> elems;
    for (std::size_t pi = 0; pi < params.size(); ++pi)
        for (std::size_t ei = 0; ei < params[pi].numel(); ++ei) elems.emplace_back(pi, ei);
    return run_check(build, params, elems, h);
}

GradCheckReport grad_check_subset(const GraphBuilder& build, std::vector<Tensor>& params,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& elems,
                                  double h) {
    return run_check(build, params, elems, h);
}

} // namespace oshape
