#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "oshape/tape.hpp"

namespace oshape {

// Split-storage complex vector (re/im arrays of equal length).
struct ComplexVector {
    std::vector<double> re, im;

    ComplexVector() = default;
    explicit ComplexVector(std::size_t n) : re(n, 0.0), im(n, 0.0) {}

    std::size_t size() const { return re.size(); }

    std::complex<double> at(std::size_t i) const { return {re[i], im[i]}; }
    void set(std::size_t i, std::complex<double> v) {
        re[i] = v.real();
        im[i] = v.imag();
    }

    static ComplexVector from_points(const std::vector<std::complex<double>>& pts) {
        ComplexVector v(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) v.set(i, pts[i]);
        return v;
    }
};

// Unitary DFT pair, radix-2, in the convention
//   inverse=true:   x(n) = (1/sqrt(L)) sum_k V(k) exp(+j 2 pi n k / L)
//   inverse=false:  X(k) = (1/sqrt(L)) sum_n v(n) exp(-j 2 pi n k / L)
// Both directions scale by 1/sqrt(L), so the transform is an isometry and
// forward/inverse are exact inverses of each other. Throws on lengths that
// are not powers of two.
ComplexVector unitary_dft(const ComplexVector& v, bool inverse);

// In-place variant on split re/im arrays of length n.
void unitary_dft_inplace(double* re, double* im, std::size_t n, bool inverse);

// Tape node: input and output are [2,L] tensors (row 0 = re, row 1 = im).
// The transform is complex-linear and unitary, so the adjoint map is the
// transform in the opposite direction applied to the adjoint pair.
Var unitary_dft_node(Tape& tape, Var xc, bool inverse);

} // namespace oshape
