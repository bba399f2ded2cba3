#include "oshape/tape.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace oshape {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

MapC as_mat(const Tensor& t) { return MapC(t.data.data(), t.rows(), t.cols()); }
MapM as_mat(Tensor& t) { return MapM(t.data.data(), t.rows(), t.cols()); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

} // namespace

Var Tape::add_node(Tensor value, std::vector<int> parents, BackwardFn backward, bool is_param) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    n.needs_grad = is_param || any_needs_grad(n.parents);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

bool Tape::any_needs_grad(const std::vector<int>& parents) const {
    for (int p : parents)
        if (nodes_[p].needs_grad) return true;
    return false;
}

void Tape::accumulate(int id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    n.touched = true;
    for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
}

void Tape::backward(Var root) {
    if (root.tape != this) throw std::invalid_argument("backward: foreign var");
    if (nodes_[root.id].value.numel() != 1)
        throw std::invalid_argument("backward: root is not a scalar");
    for (Node& n : nodes_) {
        n.touched = false;
        if (n.needs_grad) {
            n.grad.shape = n.value.shape;
            n.grad.data.assign(n.value.data.size(), 0.0);
        }
    }
    Node& r = nodes_[root.id];
    if (!r.needs_grad) return; // nothing reachable depends on a param
    r.grad.data[0] = 1.0;
    r.touched = true;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.needs_grad && n.touched && n.backward) n.backward(*this, i);
    }
}

// --- elementwise ---

Var Tape::relu(Var x) {
    Tensor out = nodes_[x.id].value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return custom({x}, std::move(out), [](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        const Tensor& xin = t.value_of(p);
        Tensor gx(xin.shape);
        for (std::size_t i = 0; i < gx.data.size(); ++i)
            gx.data[i] = xin.data[i] > 0.0 ? g.data[i] : 0.0;
        t.accumulate(p, gx);
    });
}

Var Tape::add(Var a, Var b) {
    require_same_shape(nodes_[a.id].value, nodes_[b.id].value, "add");
    Tensor out = nodes_[a.id].value;
    const Tensor& bv = nodes_[b.id].value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    return custom({a, b}, std::move(out), [](Tape& t, int self) {
        const Tensor& g = t.out_grad(self);
        t.accumulate(t.parents_of(self)[0], g);
        t.accumulate(t.parents_of(self)[1], g);
    });
}

Var Tape::sub(Var a, Var b) {
    require_same_shape(nodes_[a.id].value, nodes_[b.id].value, "sub");
    Tensor out = nodes_[a.id].value;
    const Tensor& bv = nodes_[b.id].value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
    return custom({a, b}, std::move(out), [](Tape& t, int self) {
        const Tensor& g = t.out_grad(self);
        t.accumulate(t.parents_of(self)[0], g);
        int pb = t.parents_of(self)[1];
        if (!t.wants_grad(pb)) return;
        Tensor gn = g;
        for (double& v : gn.data) v = -v;
        t.accumulate(pb, gn);
    });
}

Var Tape::mul(Var a, Var b) {
    require_same_shape(nodes_[a.id].value, nodes_[b.id].value, "mul");
    Tensor out = nodes_[a.id].value;
    const Tensor& bv = nodes_[b.id].value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
    return custom({a, b}, std::move(out), [](Tape& t, int self) {
        const Tensor& g = t.out_grad(self);
        int pa = t.parents_of(self)[0];
        int pb = t.parents_of(self)[1];
        const Tensor& av = t.value_of(pa);
        const Tensor& bvv = t.value_of(pb);
        if (t.wants_grad(pa)) {
            Tensor ga(av.shape);
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] = g.data[i] * bvv.data[i];
            t.accumulate(pa, ga);
        }
        if (t.wants_grad(pb)) {
            Tensor gb(bvv.shape);
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] = g.data[i] * av.data[i];
            t.accumulate(pb, gb);
        }
    });
}

Var Tape::scale(Var x, double c) {
    Tensor out = nodes_[x.id].value;
    for (double& v : out.data) v *= c;
    return custom({x}, std::move(out), [c](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        Tensor g = t.out_grad(self);
        for (double& v : g.data) v *= c;
        t.accumulate(p, g);
    });
}

Var Tape::add_const(Var x, const Tensor& c) {
    require_same_shape(nodes_[x.id].value, c, "add_const");
    Tensor out = nodes_[x.id].value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += c.data[i];
    return custom({x}, std::move(out), [](Tape& t, int self) {
        t.accumulate(t.parents_of(self)[0], t.out_grad(self));
    });
}

Var Tape::pow_scalar(Var x, double p) {
    Tensor out = nodes_[x.id].value;
    for (double& v : out.data) {
        if (v <= 0.0) throw std::invalid_argument("pow_scalar: nonpositive base");
        v = std::pow(v, p);
    }
    return custom({x}, std::move(out), [p](Tape& t, int self) {
        int px = t.parents_of(self)[0];
        if (!t.wants_grad(px)) return;
        const Tensor& g = t.out_grad(self);
        const Tensor& xv = t.value_of(px);
        Tensor gx(xv.shape);
        for (std::size_t i = 0; i < gx.data.size(); ++i)
            gx.data[i] = g.data[i] * p * std::pow(xv.data[i], p - 1.0);
        t.accumulate(px, gx);
    });
}

// --- linear algebra ---

Var Tape::affine(Var x, Var w, Var b) {
    const Tensor& xv = nodes_[x.id].value;
    const Tensor& wv = nodes_[w.id].value;
    const Tensor& bv = nodes_[b.id].value;
    xv.require_rank(2);
    wv.require_rank(2);
    bv.require_rank(1);
    if (xv.cols() != wv.rows() || wv.cols() != bv.shape[0])
        throw std::invalid_argument("affine: dimension mismatch " + xv.shape_str() + " * " +
                                    wv.shape_str() + " + " + bv.shape_str());
    Tensor out = Tensor::matrix(xv.rows(), wv.cols());
    as_mat(out).noalias() = as_mat(xv) * as_mat(wv);
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
    return custom({x, w, b}, std::move(out), [](Tape& t, int self) {
        const auto& ps = t.parents_of(self);
        const Tensor& g = t.out_grad(self);
        const Tensor& xv2 = t.value_of(ps[0]);
        const Tensor& wv2 = t.value_of(ps[1]);
        if (t.wants_grad(ps[0])) {
            Tensor gx(xv2.shape);
            as_mat(gx).noalias() = as_mat(g) * as_mat(wv2).transpose();
            t.accumulate(ps[0], gx);
        }
        if (t.wants_grad(ps[1])) {
            Tensor gw(wv2.shape);
            as_mat(gw).noalias() = as_mat(xv2).transpose() * as_mat(g);
            t.accumulate(ps[1], gw);
        }
        if (t.wants_grad(ps[2])) {
            Tensor gb({g.cols()});
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
            t.accumulate(ps[2], gb);
        }
    });
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = nodes_[a.id].value;
    const Tensor& bv = nodes_[b.id].value;
    av.require_rank(2);
    bv.require_rank(2);
    if (av.cols() != bv.rows())
        throw std::invalid_argument("matmul: dimension mismatch " + av.shape_str() + " * " +
                                    bv.shape_str());
    Tensor out = Tensor::matrix(av.rows(), bv.cols());
    as_mat(out).noalias() = as_mat(av) * as_mat(bv);
    return custom({a, b}, std::move(out), [](Tape& t, int self) {
        const auto& ps = t.parents_of(self);
        const Tensor& g = t.out_grad(self);
        const Tensor& av2 = t.value_of(ps[0]);
        const Tensor& bv2 = t.value_of(ps[1]);
        if (t.wants_grad(ps[0])) {
            Tensor ga(av2.shape);
            as_mat(ga).noalias() = as_mat(g) * as_mat(bv2).transpose();
            t.accumulate(ps[0], ga);
        }
        if (t.wants_grad(ps[1])) {
            Tensor gb(bv2.shape);
            as_mat(gb).noalias() = as_mat(av2).transpose() * as_mat(g);
            t.accumulate(ps[1], gb);
        }
    });
}

// --- softmax family ---

Var Tape::softmax_rows(Var x) {
    const Tensor& xv = nodes_[x.id].value;
    xv.require_rank(2);
    Tensor out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double mx = out(r, 0);
        for (std::size_t c = 1; c < out.cols(); ++c) mx = std::max(mx, out(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = std::exp(out(r, c) - mx);
            sum += out(r, c);
        }
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) /= sum;
    }
    return custom({x}, std::move(out), [](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        const Tensor& s = t.value_of(self);
        Tensor gx(s.shape);
        for (std::size_t r = 0; r < s.rows(); ++r) {
            double dotgs = 0.0;
            for (std::size_t c = 0; c < s.cols(); ++c) dotgs += g(r, c) * s(r, c);
            for (std::size_t c = 0; c < s.cols(); ++c)
                gx(r, c) = s(r, c) * (g(r, c) - dotgs);
        }
        t.accumulate(p, gx);
    });
}

Var Tape::log_softmax_rows(Var x) {
    const Tensor& xv = nodes_[x.id].value;
    xv.require_rank(2);
    Tensor out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double mx = out(r, 0);
        for (std::size_t c = 1; c < out.cols(); ++c) mx = std::max(mx, out(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < out.cols(); ++c) sum += std::exp(out(r, c) - mx);
        double lse = mx + std::log(sum);
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) -= lse;
    }
    return custom({x}, std::move(out), [](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        const Tensor& lp = t.value_of(self);
        Tensor gx(lp.shape);
        for (std::size_t r = 0; r < lp.rows(); ++r) {
            double gsum = 0.0;
            for (std::size_t c = 0; c < lp.cols(); ++c) gsum += g(r, c);
            for (std::size_t c = 0; c < lp.cols(); ++c)
                gx(r, c) = g(r, c) - std::exp(lp(r, c)) * gsum;
        }
        t.accumulate(p, gx);
    });
}

// --- reductions ---

Var Tape::sum(Var x) {
    double s = 0.0;
    for (double v : nodes_[x.id].value.data) s += v;
    return custom({x}, Tensor::scalar(s), [](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        double g = t.out_grad(self).data[0];
        Tensor gx(t.value_of(p).shape, g);
        t.accumulate(p, gx);
    });
}

Var Tape::mean(Var x) {
    const Tensor& xv = nodes_[x.id].value;
    double s = 0.0;
    for (double v : xv.data) s += v;
    double n = static_cast<double>(xv.numel());
    return custom({x}, Tensor::scalar(s / n), [n](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        double g = t.out_grad(self).data[0] / n;
        Tensor gx(t.value_of(p).shape, g);
        t.accumulate(p, gx);
    });
}

Var Tape::sum_rows(Var x) {
    const Tensor& xv = nodes_[x.id].value;
    xv.require_rank(2);
    Tensor out({xv.rows()});
    for (std::size_t r = 0; r < xv.rows(); ++r)
        for (std::size_t c = 0; c < xv.cols(); ++c) out[r] += xv(r, c);
    return custom({x}, std::move(out), [](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        const Tensor& xv2 = t.value_of(p);
        Tensor gx(xv2.shape);
        for (std::size_t r = 0; r < xv2.rows(); ++r)
            for (std::size_t c = 0; c < xv2.cols(); ++c) gx(r, c) = g[r];
        t.accumulate(p, gx);
    });
}

Var Tape::dot(Var a, Var b) {
    const Tensor& av = nodes_[a.id].value;
    const Tensor& bv = nodes_[b.id].value;
    if (av.numel() != bv.numel())
        throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < av.numel(); ++i) s += av.data[i] * bv.data[i];
    return custom({a, b}, Tensor::scalar(s), [](Tape& t, int self) {
        const auto& ps = t.parents_of(self);
        double g = t.out_grad(self).data[0];
        const Tensor& av2 = t.value_of(ps[0]);
        const Tensor& bv2 = t.value_of(ps[1]);
        if (t.wants_grad(ps[0])) {
            Tensor ga(av2.shape);
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] = g * bv2.data[i];
            t.accumulate(ps[0], ga);
        }
        if (t.wants_grad(ps[1])) {
            Tensor gb(bv2.shape);
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] = g * av2.data[i];
            t.accumulate(ps[1], gb);
        }
    });
}

Var Tape::max_all(Var x) {
    const Tensor& xv = nodes_[x.id].value;
    if (xv.numel() == 0) throw std::invalid_argument("max_all: empty tensor");
    std::size_t arg = 0;
    for (std::size_t i = 1; i < xv.numel(); ++i)
        if (xv.data[i] > xv.data[arg]) arg = i; // strict >, first argmax wins ties
    return custom({x}, Tensor::scalar(xv.data[arg]), [arg](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        Tensor gx(t.value_of(p).shape);
        gx.data[arg] = t.out_grad(self).data[0];
        t.accumulate(p, gx);
    });
}

Var Tape::div(Var a, Var b) {
    const Tensor& av = nodes_[a.id].value;
    const Tensor& bv = nodes_[b.id].value;
    if (av.numel() != 1 || bv.numel() != 1)
        throw std::invalid_argument("div: scalar operands required");
    double q = av.data[0] / bv.data[0];
    return custom({a, b}, Tensor::scalar(q), [](Tape& t, int self) {
        const auto& ps = t.parents_of(self);
        double g = t.out_grad(self).data[0];
        double a0 = t.value_of(ps[0]).data[0];
        double b0 = t.value_of(ps[1]).data[0];
        if (t.wants_grad(ps[0])) t.accumulate(ps[0], Tensor::scalar(g / b0));
        if (t.wants_grad(ps[1])) t.accumulate(ps[1], Tensor::scalar(-g * a0 / (b0 * b0)));
    });
}

Var Tape::mean_of(const std::vector<Var>& scalars) {
    if (scalars.empty()) throw std::invalid_argument("mean_of: empty list");
    std::vector<int> ids;
    double s = 0.0;
    for (Var v : scalars) {
        if (nodes_[v.id].value.numel() != 1)
            throw std::invalid_argument("mean_of: non-scalar element");
        s += nodes_[v.id].value.data[0];
        ids.push_back(v.id);
    }
    double n = static_cast<double>(scalars.size());
    std::vector<Var> parents = scalars;
    return custom(std::move(parents), Tensor::scalar(s / n), [n](Tape& t, int self) {
        double g = t.out_grad(self).data[0] / n;
        for (int p : t.parents_of(self)) t.accumulate(p, Tensor::scalar(g));
    });
}

// --- shape / selection ---

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
    const Tensor& xv = nodes_[x.id].value;
    if (Tensor::count(shape) != xv.numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out;
    out.shape = shape;
    out.data = xv.data;
    return custom({x}, std::move(out), [](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        Tensor g = t.out_grad(self);
        g.shape = t.value_of(p).shape;
        t.accumulate(p, g);
    });
}

Var Tape::add_rowvec(Var x, Var v) {
    const Tensor& xv = nodes_[x.id].value;
    const Tensor& vv = nodes_[v.id].value;
    xv.require_rank(2);
    if (vv.numel() != xv.cols())
        throw std::invalid_argument("add_rowvec: width mismatch");
    Tensor out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += vv.data[c];
    return custom({x, v}, std::move(out), [](Tape& t, int self) {
        const auto& ps = t.parents_of(self);
        const Tensor& g = t.out_grad(self);
        t.accumulate(ps[0], g);
        if (!t.wants_grad(ps[1])) return;
        Tensor gv(t.value_of(ps[1]).shape);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gv.data[c] += g(r, c);
        t.accumulate(ps[1], gv);
    });
}

Var Tape::mul_rowvec(Var x, Var v) {
    const Tensor& xv = nodes_[x.id].value;
    const Tensor& vv = nodes_[v.id].value;
    xv.require_rank(2);
    if (vv.numel() != xv.cols())
        throw std::invalid_argument("mul_rowvec: width mismatch");
    Tensor out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= vv.data[c];
    return custom({x, v}, std::move(out), [](Tape& t, int self) {
        const auto& ps = t.parents_of(self);
        const Tensor& g = t.out_grad(self);
        const Tensor& xv2 = t.value_of(ps[0]);
        const Tensor& vv2 = t.value_of(ps[1]);
        if (t.wants_grad(ps[0])) {
            Tensor gx(xv2.shape);
            for (std::size_t r = 0; r < xv2.rows(); ++r)
                for (std::size_t c = 0; c < xv2.cols(); ++c)
                    gx(r, c) = g(r, c) * vv2.data[c];
            t.accumulate(ps[0], gx);
        }
        if (t.wants_grad(ps[1])) {
            Tensor gv(vv2.shape);
            for (std::size_t r = 0; r < xv2.rows(); ++r)
                for (std::size_t c = 0; c < xv2.cols(); ++c)
                    gv.data[c] += g(r, c) * xv2(r, c);
            t.accumulate(ps[1], gv);
        }
    });
}

Var Tape::mul_scalar(Var x, Var s) {
    const Tensor& sv = nodes_[s.id].value;
    if (sv.numel() != 1) throw std::invalid_argument("mul_scalar: s must be scalar");
    Tensor out = nodes_[x.id].value;
    double sc = sv.data[0];
    for (double& v : out.data) v *= sc;
    return custom({x, s}, std::move(out), [](Tape& t, int self) {
        const auto& ps = t.parents_of(self);
        const Tensor& g = t.out_grad(self);
        const Tensor& xv = t.value_of(ps[0]);
        double sc2 = t.value_of(ps[1]).data[0];
        if (t.wants_grad(ps[0])) {
            Tensor gx(xv.shape);
            for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] = g.data[i] * sc2;
            t.accumulate(ps[0], gx);
        }
        if (t.wants_grad(ps[1])) {
            double acc = 0.0;
            for (std::size_t i = 0; i < xv.data.size(); ++i) acc += g.data[i] * xv.data[i];
            t.accumulate(ps[1], Tensor::scalar(acc));
        }
    });
}

Var Tape::pick(Var x, std::vector<std::size_t> cols) {
    const Tensor& xv = nodes_[x.id].value;
    xv.require_rank(2);
    if (cols.size() != xv.rows())
        throw std::invalid_argument("pick: one column index per row required");
    Tensor out({xv.rows()});
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        if (cols[r] >= xv.cols()) throw std::invalid_argument("pick: column out of range");
        out[r] = xv(r, cols[r]);
    }
    return custom({x}, std::move(out), [cols = std::move(cols)](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        Tensor gx(t.value_of(p).shape);
        for (std::size_t r = 0; r < gx.rows(); ++r) gx(r, cols[r]) = g[r];
        t.accumulate(p, gx);
    });
}

Var Tape::slice_rows(Var x, std::size_t r0, std::size_t r1) {
    const Tensor& xv = nodes_[x.id].value;
    xv.require_rank(2);
    if (r0 > r1 || r1 > xv.rows()) throw std::invalid_argument("slice_rows: bad range");
    Tensor out = Tensor::matrix(r1 - r0, xv.cols());
    std::copy(xv.data.begin() + r0 * xv.cols(), xv.data.begin() + r1 * xv.cols(),
              out.data.begin());
    return custom({x}, std::move(out), [r0](Tape& t, int self) {
        int p = t.parents_of(self)[0];
        if (!t.wants_grad(p)) return;
        const Tensor& g = t.out_grad(self);
        Tensor gx(t.value_of(p).shape);
        std::copy(g.data.begin(), g.data.end(), gx.data.begin() + r0 * gx.cols());
        t.accumulate(p, gx);
    });
}

Var Tape::concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty list");
    std::size_t cols = nodes_[xs[0].id].value.cols();
    std::size_t rows = 0;
    for (Var v : xs) {
        const Tensor& tv = nodes_[v.id].value;
        tv.require_rank(2);
        if (tv.cols() != cols) throw std::invalid_argument("concat_rows: width mismatch");
        rows += tv.rows();
    }
    Tensor out = Tensor::matrix(rows, cols);
    std::size_t at = 0;
    std::vector<std::size_t> offsets;
    for (Var v : xs) {
        const Tensor& tv = nodes_[v.id].value;
        offsets.push_back(at);
        std::copy(tv.data.begin(), tv.data.end(), out.data.begin() + at * cols);
        at += tv.rows();
    }
    return custom(xs, std::move(out), [offsets = std::move(offsets), cols](Tape& t, int self) {
        const Tensor& g = t.out_grad(self);
        const auto& ps = t.parents_of(self);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (!t.wants_grad(ps[i])) continue;
            const Tensor& pv = t.value_of(ps[i]);
            Tensor gp(pv.shape);
            std::copy(g.data.begin() + offsets[i] * cols,
                      g.data.begin() + (offsets[i] + pv.rows()) * cols, gp.data.begin());
            t.accumulate(ps[i], gp);
        }
    });
}

Var Tape::custom(std::vector<Var> parents, Tensor value, BackwardFn backward) {
    std::vector<int> ids;
    ids.reserve(parents.size());
    for (Var v : parents) {
        if (v.tape != this) throw std::invalid_argument("custom: foreign var");
        ids.push_back(v.id);
    }
    return add_node(std::move(value), std::move(ids), std::move(backward), false);
}

} // namespace oshape
