#pragma once

// Single-frame windowed DFT of each sensor channel and its magnitude/phase
// decomposition.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "phasenet/error.hpp"
#include "phasenet/ingest.hpp"
#include "phasenet/tensor.hpp"

namespace phasenet {

enum class AnalysisWindow { hann, rectangular };

inline std::string to_string(AnalysisWindow w) { return w == AnalysisWindow::hann ? "hann" : "rectangular"; }

inline AnalysisWindow analysis_window_from_string(const std::string& s) {
    if (s == "hann") return AnalysisWindow::hann;
    if (s == "rectangular") return AnalysisWindow::rectangular;
    throw ConfigError("unknown analysis window '" + s + "' (expected hann or rectangular)");
}

struct SpectralConfig {
    std::size_t n_fft = 128;
    AnalysisWindow window = AnalysisWindow::hann;

    std::size_t bins() const noexcept { return n_fft / 2 + 1; }

    void validate() const {
        if (n_fft < 2 || n_fft % 2 != 0) throw ConfigError("n_fft must be even and >= 2");
    }
};

// Periodic Hann of length W (g(0) = 0, symmetric about W/2), or all ones.
inline std::vector<double> analysis_window(std::size_t W, AnalysisWindow kind) {
    std::vector<double> g(W, 1.0);
    if (kind == AnalysisWindow::hann) {
        for (std::size_t n = 0; n < W; ++n)
            g[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(W));
    }
    return g;
}

// Bins 0..F-1 of the n_fft-point DFT of the windowed, zero-padded signal.
inline std::vector<std::complex<double>> dft_single_frame(std::span<const double> signal, const SpectralConfig& cfg) {
    cfg.validate();
    const std::size_t W = signal.size();
    const std::size_t N = cfg.n_fft;
    if (W > N) {
        throw ShapeError("dft: window length " + std::to_string(W) + " exceeds n_fft " + std::to_string(N));
    }
    const auto g = analysis_window(W, cfg.window);
    // Twiddles indexed by (f * n) mod N keep every bin on the exact unit circle grid.
    std::vector<std::complex<double>> tw(N);
    for (std::size_t k = 0; k < N; ++k)
        tw[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(N));
    std::vector<std::complex<double>> z(cfg.bins());
    for (std::size_t f = 0; f < z.size(); ++f) {
        std::complex<double> acc = 0.0;
        for (std::size_t n = 0; n < W; ++n) acc += signal[n] * g[n] * tw[(f * n) % N];
        z[f] = acc;
    }
    return z;
}

struct SpectralTensor {
    Matrix magnitude;  // C x F
    Matrix phase;      // C x F, radians in [-pi, pi]

    std::size_t channels() const noexcept { return magnitude.rows; }
    std::size_t bins() const noexcept { return magnitude.cols; }

    // (C, 2, F): channel 0 magnitude, channel 1 phase.
    Tensor stacked() const {
        const std::size_t C = channels(), F = bins();
        Tensor t(Shape{C, 2, F});
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t f = 0; f < F; ++f) {
                t[(c * 2 + 0) * F + f] = magnitude(c, f);
                t[(c * 2 + 1) * F + f] = phase(c, f);
            }
        return t;
    }
};

// Modulus and principal argument; an exactly-zero bin has phase 0.
inline void polar_parts(std::complex<double> z, double& mag, double& phase) {
    mag = std::abs(z);
    phase = (z.real() == 0.0 && z.imag() == 0.0) ? 0.0 : std::arg(z);
}

inline SpectralTensor to_spectral_tensor(const SensorWindow& w, const SpectralConfig& cfg) {
    const std::size_t C = w.channels(), W = w.length(), F = cfg.bins();
    SpectralTensor s{Matrix(C, F), Matrix(C, F)};
    std::vector<double> column(W);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < W; ++t) column[t] = w.data(t, c);
        const auto z = dft_single_frame(column, cfg);
        for (std::size_t f = 0; f < F; ++f) polar_parts(z[f], s.magnitude(c, f), s.phase(c, f));
    }
    return s;
}

}  // namespace phasenet
