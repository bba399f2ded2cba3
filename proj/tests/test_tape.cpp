// Unit tests for the tensor tape: forward values against hand arithmetic,
// adjoints against central finite differences.

#include "oshape/gradcheck.hpp"
#include "oshape/rng.hpp"
#include "oshape/tape.hpp"

#include "checks.hpp"

using namespace oshape;
using namespace testing;

static void test_affine_values() {
    Tape t;
    Tensor x = Tensor::matrix(1, 2);
    x(0, 0) = 1;
    x(0, 1) = 2;
    Tensor w = Tensor::matrix(2, 2);
    w(0, 0) = 1;
    w(1, 1) = 1;
    Tensor b({2});
    Var out = t.affine(t.constant(x), t.constant(w), t.constant(b));
    check_close(t.value(out)(0, 0), 1.0, 0.0, "affine identity [0]");
    check_close(t.value(out)(0, 1), 2.0, 0.0, "affine identity [1]");

    Tensor x2 = Tensor::matrix(1, 2, 1.0);
    Tensor w2 = Tensor::matrix(2, 1);
    w2(0, 0) = 2;
    w2(1, 0) = 3;
    Tensor b2({1});
    b2[0] = 1;
    Var out2 = t.affine(t.constant(x2), t.constant(w2), t.constant(b2));
    check_close(t.value(out2)(0, 0), 6.0, 0.0, "affine [[1,1]]*[[2],[3]]+[1]");

    // shape mismatch is a dimension error
    bool threw = false;
    try {
        Tensor wbad = Tensor::matrix(3, 1);
        t.affine(t.constant(x2), t.constant(wbad), t.constant(b2));
    } catch (const std::invalid_argument&) {
        threw = true;
    }
    check(threw, "affine shape mismatch throws");
}

static void test_affine_gradients() {
    Rng rng(42);
    Tensor x = Tensor::matrix(3, 4);
    for (double& v : x.data) v = rng.gaussian();
    Tensor w = Tensor::matrix(4, 5);
    for (double& v : w.data) v = rng.gaussian();
    Tensor b({5});
    for (double& v : b.data) v = rng.gaussian();
    std::vector<Tensor> params{x, w, b};
    auto build = [](Tape& t, const std::vector<Var>& vs) {
        return t.sum(t.affine(vs[0], vs[1], vs[2]));
    };
    GradCheckReport rep = grad_check(build, params, 1e-6);
    check_lt(rep.max_rel_err, 1e-6, "affine gradient vs central differences");
}

static void test_activations() {
    Tape t;
    Tensor x = Tensor::vector({-1, 0, 2});
    Var r = t.relu(t.constant(x));
    check_close(t.value(r)[0], 0, 0, "relu(-1)");
    check_close(t.value(r)[1], 0, 0, "relu(0)");
    check_close(t.value(r)[2], 2, 0, "relu(2)");

    Tensor z = Tensor::matrix(1, 4); // zeros
    Var s = t.softmax_rows(t.constant(z));
    for (int i = 0; i < 4; ++i)
        check_close(t.value(s)(0, i), 0.25, 1e-15, "softmax of zeros is uniform");

    // stability for magnitudes up to 1e3
    Tensor big = Tensor::matrix(1, 3);
    big(0, 0) = 1e3;
    big(0, 1) = -1e3;
    big(0, 2) = 999.5;
    Var sb = t.softmax_rows(t.constant(big));
    Var lb = t.log_softmax_rows(t.constant(big));
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
        check(std::isfinite(t.value(sb)(0, i)), "softmax stays finite for large inputs");
        check(std::isfinite(t.value(lb)(0, i)), "log_softmax stays finite for large inputs");
        sum += t.value(sb)(0, i);
    }
    check_close(sum, 1.0, 1e-12, "softmax row sums to one");
}

static void test_softmax_gradients() {
    Rng rng(7);
    Tensor x = Tensor::matrix(3, 5);
    for (double& v : x.data) v = rng.gaussian();
    std::vector<Tensor> params{x};

    auto build_s = [](Tape& t, const std::vector<Var>& vs) {
        Var s = t.softmax_rows(vs[0]);
        return t.sum(t.mul(s, s));
    };
    check_lt(grad_check(build_s, params, 1e-6).max_rel_err, 1e-6, "softmax adjoint");

    auto build_ls = [](Tape& t, const std::vector<Var>& vs) {
        Var s = t.log_softmax_rows(vs[0]);
        return t.mean(t.mul(s, s));
    };
    check_lt(grad_check(build_ls, params, 1e-6).max_rel_err, 1e-6, "log_softmax adjoint");
}

static void test_relu_mlp_gradcheck() {
    // 3-layer ReLU net with pre-activations kept away from the kink
    Rng rng(123);
    for (int attempt = 0; attempt < 50; ++attempt) {
        Tensor x = Tensor::matrix(2, 3);
        for (double& v : x.data) v = rng.gaussian();
        std::vector<Tensor> params;
        std::vector<std::size_t> widths{3, 6, 6, 6, 2};
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            Tensor w = Tensor::matrix(widths[l], widths[l + 1]);
            for (double& v : w.data) v = rng.gaussian() * 0.7;
            Tensor b({widths[l + 1]});
            for (double& v : b.data) v = rng.gaussian() * 0.3;
            params.push_back(w);
            params.push_back(b);
        }
        auto build = [&x](Tape& t, const std::vector<Var>& vs) {
            Var h = t.constant(x);
            for (std::size_t l = 0; l * 2 < vs.size(); ++l) {
                h = t.affine(h, vs[2 * l], vs[2 * l + 1]);
                if (2 * (l + 1) < vs.size()) h = t.relu(h);
            }
            return t.mean(t.mul(h, h));
        };
        // require all pre-activations at least 1e-3 from zero
        bool near_kink = false;
        {
            Tape probe;
            std::vector<Var> vars;
            for (const Tensor& p : params) vars.push_back(probe.constant(p));
            Var h = probe.constant(x);
            for (std::size_t l = 0; l * 2 < vars.size(); ++l) {
                h = probe.affine(h, vars[2 * l], vars[2 * l + 1]);
                for (double v : probe.value(h).data)
                    if (std::abs(v) < 1e-3) near_kink = true;
                if (2 * (l + 1) < vars.size()) h = probe.relu(h);
            }
        }
        if (near_kink) continue;
        GradCheckReport rep = grad_check(build, params, 1e-6);
        check_lt(rep.max_rel_err, 1e-5, "3-layer ReLU MLP gradient");
        return;
    }
    check(false, "could not find kink-free MLP instance");
}

static void test_reductions_and_selection() {
    Rng rng(5);

    // quadratic form: central differences are exact up to roundoff
    {
        Tensor x = Tensor::vector({0.3, -1.2, 2.0});
        std::vector<Tensor> params{x};
        auto build = [](Tape& t, const std::vector<Var>& vs) {
            return t.dot(vs[0], vs[0]);
        };
        check_lt(grad_check(build, params, 1e-5).max_rel_err, 1e-9, "quadratic form gradient");
    }

    // composite through pick / mean / max / div / pow / rowvec ops
    {
        Tensor x = Tensor::matrix(4, 3);
        for (double& v : x.data) v = rng.gaussian() + 3.0; // positive, away from ties
        Tensor v({3});
        for (double& q : v.data) q = rng.gaussian();
        std::vector<Tensor> params{x, v};
        auto build = [](Tape& t, const std::vector<Var>& vs) {
            Var a = t.add_rowvec(vs[0], vs[1]);
            Var m = t.mul_rowvec(a, vs[1]);
            Var p = t.pick(m, {0, 2, 1, 0});
            Var s = t.pow_scalar(t.sum(t.mul(p, p)), 0.5);
            Var q = t.div(t.max_all(vs[0]), t.mean(vs[0]));
            return t.add(t.mul_scalar(s, q), t.mean(a));
        };
        check_lt(grad_check(build, params, 1e-6).max_rel_err, 1e-6,
                 "composite selection/reduction gradient");
    }

    // diamond graph accumulates both paths: d(x*x + x)/dx = 2x + 1
    {
        Tape t;
        Var x = t.param(Tensor::scalar(1.5));
        Var y = t.add(t.mul(x, x), x);
        t.backward(y);
        check_close(t.grad(x).data[0], 4.0, 1e-14, "diamond graph adjoint accumulation");
    }

    // slice/concat round trip
    {
        Tape t;
        Tensor x = Tensor::matrix(4, 2);
        for (std::size_t i = 0; i < 8; ++i) x.data[i] = static_cast<double>(i);
        Var xv = t.param(x);
        Var a = t.slice_rows(xv, 0, 2);
        Var b = t.slice_rows(xv, 2, 4);
        Var joined = t.concat_rows({a, b});
        Var loss = t.sum(t.mul(joined, joined));
        t.backward(loss);
        const Tensor& g = t.grad(xv);
        bool ok = true;
        for (std::size_t i = 0; i < 8; ++i)
            if (std::abs(g.data[i] - 2.0 * x.data[i]) > 1e-14) ok = false;
        check(ok, "slice/concat adjoint");
    }

    // mean_of spreads the adjoint evenly
    {
        Tape t;
        Var a = t.param(Tensor::scalar(2.0));
        Var b = t.param(Tensor::scalar(4.0));
        Var m = t.mean_of({a, b, a});
        t.backward(m);
        check_close(t.value(m).data[0], 8.0 / 3.0, 1e-15, "mean_of value");
        check_close(t.grad(a).data[0], 2.0 / 3.0, 1e-15, "mean_of adjoint (repeated input)");
        check_close(t.grad(b).data[0], 1.0 / 3.0, 1e-15, "mean_of adjoint");
    }
}

static void test_determinism() {
    auto run = [] {
        Rng rng(99);
        Tape t;
        Tensor x = Tensor::matrix(8, 8);
        for (double& v : x.data) v = rng.gaussian();
        Var out = t.mean(t.softmax_rows(t.constant(x)));
        return t.value(out).data[0];
    };
    check(run() == run(), "identical seeds give bitwise identical graph values");
}

int main() {
    test_affine_values();
    test_affine_gradients();
    test_activations();
    test_softmax_gradients();
    test_relu_mlp_gradcheck();
    test_reductions_and_selection();
    test_determinism();
    return summary("test_tape");
}
