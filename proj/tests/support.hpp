#pragma once

// Shared helpers for the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "phasenet/phasenet.hpp"

namespace testing_support {

using namespace phasenet;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.vec()) v = u(rng);
    return t;
}

// Values with |v| >= margin so piecewise-linear ops are checked away from kinks.
inline Tensor away_from_zero(Shape shape, std::mt19937_64& rng, double margin = 1e-2) {
    Tensor t = random_tensor(std::move(shape), rng);
    for (double& v : t.vec())
        if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
    return t;
}

inline Matrix random_phase(std::size_t C, std::size_t F, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    Matrix m(C, F);
    for (double& v : m.data) v = u(rng);
    return m;
}

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// Weighted sum of every output entry with fixed random weights, so that one
// scalar exercises the full Jacobian.
inline ad::Var project(const ad::Var& y, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    ad::Var w = y.tape().constant(random_tensor(y.shape(), rng));
    return ad::sum_all(ad::mul(y, w));
}

struct GradReport {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

// Central-difference check of every input entry. The relative error of an
// entry is |a - n| / max(|a|, |n|, floor); the floor keeps near-zero
// gradients from turning round-off into large ratios.
inline GradReport grad_check(const Builder& f, std::vector<Tensor> inputs, double h = 1e-5, double floor = 1e-3) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.variable(x));
    ad::Var y = f(tape, leaves);
    tape.backward(y);
    std::vector<Tensor> analytic;
    for (const auto& l : leaves) analytic.push_back(l.grad());

    const auto eval = [&](const std::vector<Tensor>& xs) {
        ad::Tape t(false);
        std::vector<ad::Var> ls;
        for (const auto& x : xs) ls.push_back(t.constant(x));
        return f(t, ls).value().item();
    };
    GradReport rep;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double x0 = inputs[k][i];
            inputs[k][i] = x0 + h;
            const double fp = eval(inputs);
            inputs[k][i] = x0 - h;
            const double fm = eval(inputs);
            inputs[k][i] = x0;
            const double num = (fp - fm) / (2.0 * h);
            const double a = analytic[k][i];
            rep.max_rel = std::max(rep.max_rel, std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor}));
            ++rep.checked;
        }
    }
    return rep;
}

// Small model used by the gradient and training tests (C=4, F=9, D=8, d_model=16).
inline ModelConfig tiny_model(std::size_t sensors = 4) {
    ModelConfig c;
    c.sensors = sensors;
    c.window = 16;
    c.n_fft = 16;
    c.embed_dim = 8;
    c.d_model = 16;
    c.heads = 2;
    c.transformer_layers = 1;
    c.gat_layers = 1;
    c.gat_heads = 2;
    c.ffn_dim = 32;
    c.cnn_channels1 = 4;
    c.cnn_channels2 = 4;
    c.cnn_pool = 2;
    c.decoder_hidden = 16;
    c.seed = 3;
    return c;
}

inline SpectralConfig tiny_spectral() {
    SpectralConfig s;
    s.n_fft = 16;
    return s;
}

// Windows cut from clean multi-sine channels with channel-specific lags.
inline std::vector<SensorWindow> sine_windows(std::size_t count, std::size_t C, std::size_t W, std::size_t stride,
                                              std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<SensorWindow> out;
    for (std::size_t k = 0; k < count; ++k) {
        SensorWindow w;
        w.start_index = k * stride;
        w.data = Matrix(W, C);
        for (std::size_t t = 0; t < W; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                const double tt = static_cast<double>(w.start_index + t) - 2.0 * static_cast<double>(c);
                w.data(t, c) = std::sin(2.0 * std::numbers::pi * 0.125 * tt) +
                               0.5 * std::cos(2.0 * std::numbers::pi * 0.25 * tt) + noise(rng);
            }
        out.push_back(std::move(w));
    }
    return out;
}

// Central-difference check of the composite loss against `count` randomly
// chosen scalar parameters (sampled without replacement across all tensors).
inline GradReport param_grad_check(ModelParams& params, const PreparedWindow& w, const LossWeights& lw,
                                   std::size_t count, std::uint64_t seed, double h = 1e-5, double floor = 1e-3) {
    params.zero_grad();
    {
        ad::Tape tape;
        auto cl = composite_loss(tape, params, w, lw);
        tape.backward(cl.total);
    }
    std::vector<std::pair<Parameter*, std::size_t>> slots;
    for (Parameter* p : params.all())
        for (std::size_t i = 0; i < p->value.size(); ++i) slots.emplace_back(p, i);
    std::mt19937_64 rng(seed);
    std::shuffle(slots.begin(), slots.end(), rng);
    slots.resize(std::min(count, slots.size()));

    GradReport rep;
    for (auto [p, i] : slots) {
        const double x0 = p->value[i];
        p->value[i] = x0 + h;
        const double fp = composite_loss(w, params, lw).total;
        p->value[i] = x0 - h;
        const double fm = composite_loss(w, params, lw).total;
        p->value[i] = x0;
        const double num = (fp - fm) / (2.0 * h);
        const double a = p->grad[i];
        rep.max_rel = std::max(rep.max_rel, std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor}));
        ++rep.checked;
    }
    return rep;
}

// Four channels over two tones at 16/128 and 24/128 cycles per sample. Far
// from DC and Nyquist the Hann-window magnitudes barely change from window to
// window while the phases rotate with the window start, so magnitude is quick
// to learn and phase is not.
struct LearnableFixture {
    RunConfig run;
    std::vector<PreparedWindow> train, val;
};

inline LearnableFixture learnable_fixture() {
    SynthConfig s;
    s.channels = 4;
    s.length = 3000;
    s.noise_std = 1e-3;
    s.seed = 3;
    s.oscillators = {{16.0 / 128, 1.0, 0.2, 0.0}, {24.0 / 128, 1.0, 1.0, 0.0}};
    s.coupling = {{{0, 0, 1.0}}, {{0, 4, 0.8}}, {{1, 0, 1.0}}, {{1, 3, 1.2}}};
    const TimeSeriesFrame f = generate(s);
    const RowRange train{0, 2250}, val{2250, 3000};
    const Scaler sc = fit_scaler(f, train);

    LearnableFixture fx;
    fx.run = preset("tiny");
    fx.run.model.sensors = 4;
    fx.run.train.epochs = 5;
    fx.run.train.lr = 3e-3;
    fx.run.train.batch_size = 8;
    fx.train = prepare_all(slice_windows(f, train, sc, 60, 5), fx.run.spectral);
    fx.val = prepare_all(slice_windows(f, val, sc, 60, 60), fx.run.spectral);
    return fx;
}

struct SanityReport {
    double reduction = 0.0;    // 1 - total_last / total_first
    double mag_ratio = 0.0;    // mag_last / mag_first
    double phase_ratio = 0.0;  // phase_last / phase_first
    bool phase_dominant = false;

    bool ok() const { return reduction >= 0.2 && mag_ratio < phase_ratio && phase_dominant; }
};

inline SanityReport training_sanity(const std::vector<EpochRecord>& h, const LossWeights& lw) {
    const LossBreakdown& a = h.front().train;
    const LossBreakdown& b = h.back().train;
    SanityReport r;
    r.reduction = 1.0 - b.total / a.total;
    r.mag_ratio = b.mag / a.mag;
    r.phase_ratio = b.phase / a.phase;
    r.phase_dominant = lw.beta * b.phase > lw.alpha * b.mag && lw.beta * b.phase > lw.gamma * b.coh;
    return r;
}

}  // namespace testing_support
