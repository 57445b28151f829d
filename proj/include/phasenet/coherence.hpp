#pragma once

// Phase Coherence Index: for sensors i, j the modulus of the mean unit phasor
// of their phase difference across frequency bins. 1 means the relative phase
// is identical at every bin, ~0 means it is scattered around the circle.

#include <cmath>
#include <span>

#include "phasenet/autodiff.hpp"
#include "phasenet/tensor.hpp"

namespace phasenet {

struct PciMatrix {
    Matrix values;  // C x C, symmetric, unit diagonal, entries in [0, 1]

    std::size_t size() const noexcept { return values.rows; }
    double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

inline double pci_pair(std::span<const double> phase_i, std::span<const double> phase_j) {
    double re = 0.0, im = 0.0;
    for (std::size_t f = 0; f < phase_i.size(); ++f) {
        const double d = phase_i[f] - phase_j[f];
        re += std::cos(d);
        im += std::sin(d);
    }
    return std::sqrt(re * re + im * im) / static_cast<double>(phase_i.size());
}

// `phase` is C x F. Upper triangle evaluated, lower mirrored.
inline PciMatrix pci(const Matrix& phase) {
    const std::size_t C = phase.rows;
    PciMatrix A{Matrix(C, C)};
    for (std::size_t i = 0; i < C; ++i) {
        A.values(i, i) = 1.0;
        for (std::size_t j = i + 1; j < C; ++j) {
            const double a = pci_pair(phase.row(i), phase.row(j));
            A.values(i, j) = a;
            A.values(j, i) = a;
        }
    }
    return A;
}

inline constexpr double kPciModulusEps = 1e-12;

// Differentiable re-estimate from a (C, F) phase Var. Uses
//   sum_f cos(a_f - b_f) = (cos cos^T + sin sin^T)_ij
//   sum_f sin(a_f - b_f) = (sin cos^T - cos sin^T)_ij
// and |.| = sqrt(x^2 + y^2 + eps) so the gradient stays finite at the origin.
inline ad::Var pci_differentiable(const ad::Var& phase) {
    if (phase.shape().size() != 2) throw ShapeError("pci_differentiable: expected (C, F), got " + to_string(phase.shape()));
    const double F = static_cast<double>(phase.shape()[1]);
    const ad::Var c = ad::cos(phase);
    const ad::Var s = ad::sin(phase);
    const ad::Var ct = ad::transpose(c);
    const ad::Var st = ad::transpose(s);
    const ad::Var re = ad::add(ad::matmul(c, ct), ad::matmul(s, st));
    const ad::Var im = ad::sub(ad::matmul(s, ct), ad::matmul(c, st));
    const ad::Var r2 = ad::add(ad::mul(re, re), ad::mul(im, im));
    return ad::scale(ad::sqrt(ad::add_scalar(r2, kPciModulusEps)), 1.0 / F);
}

// 1 - cos(a - b), in [0, 2] and 2*pi periodic.
inline double circular_distance(double a, double b) { return 1.0 - std::cos(a - b); }

}  // namespace phasenet
