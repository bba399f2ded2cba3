// Unitary transform tests: hand examples, round trips, isometry, adjoint.

#include "oshape/fft.hpp"
#include "oshape/gradcheck.hpp"
#include "oshape/rng.hpp"

#include "checks.hpp"

using namespace oshape;
using namespace testing;

static void test_impulse() {
    ComplexVector v(4);
    v.re[0] = 1.0;
    ComplexVector x = unitary_dft(v, true);
    for (int i = 0; i < 4; ++i) {
        check_close(x.re[i], 0.5, 1e-15, "impulse -> constant (re)");
        check_close(x.im[i], 0.0, 1e-15, "impulse -> constant (im)");
    }
}

static void test_round_trip_and_parseval() {
    Rng rng(11);
    for (std::size_t L = 4; L <= 1024; L *= 2) {
        ComplexVector v(L);
        for (std::size_t i = 0; i < L; ++i) v.set(i, {rng.gaussian(), rng.gaussian()});
        ComplexVector x = unitary_dft(v, true);
        ComplexVector back = unitary_dft(x, false);
        double max_err = 0.0, e_in = 0.0, e_out = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            max_err = std::max(max_err, std::abs(back.at(i) - v.at(i)));
            e_in += std::norm(v.at(i));
            e_out += std::norm(x.at(i));
        }
        check_lt(max_err, 1e-12, "fft(ifft(v)) = v, L=" + std::to_string(L));
        check_close(e_out, e_in, 1e-12 * e_in + 1e-12,
                    "Parseval, L=" + std::to_string(L));
    }
}

static void test_bad_length() {
    bool threw = false;
    try {
        ComplexVector v(12);
        unitary_dft(v, false);
    } catch (const std::invalid_argument&) {
        threw = true;
    }
    check(threw, "non-power-of-two length throws");
}

static void test_adjoint_gradients() {
    Rng rng(3);
    Tensor x = Tensor::matrix(2, 32);
    for (double& v : x.data) v = rng.gaussian();
    std::vector<Tensor> params{x};

    auto build_inv = [](Tape& t, const std::vector<Var>& vs) {
        Var y = unitary_dft_node(t, vs[0], true);
        return t.sum(t.mul(y, y));
    };
    check_lt(grad_check(build_inv, params, 1e-5).max_rel_err, 1e-6,
             "inverse transform adjoint");

    auto build_fwd = [](Tape& t, const std::vector<Var>& vs) {
        Var y = unitary_dft_node(t, vs[0], false);
        Var z = unitary_dft_node(t, y, true);
        return t.mean(t.mul(y, t.add(z, y)));
    };
    check_lt(grad_check(build_fwd, params, 1e-5).max_rel_err, 1e-6,
             "forward transform adjoint (chained)");
}

int main() {
    test_impulse();
    test_round_trip_and_parseval();
    test_bad_length();
    test_adjoint_gradients();
    return summary("test_fft");
}
