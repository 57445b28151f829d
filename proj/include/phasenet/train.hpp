#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasenet/autodiff.hpp"
#include "phasenet/checkpoint.hpp"
#include "phasenet/coherence.hpp"
#include "phasenet/model.hpp"
#include "phasenet/spectral.hpp"

namespace phasenet {

struct LossWeights {
    double alpha = 1.0;  // magnitude
    double beta = 1.5;   // phase
    double gamma = 1.2;  // coherence

    static LossWeights paper_text() { return {1.0, 1.5, 1.2}; }
    static LossWeights paper_table() { return {0.5, 3.0, 1.5}; }

    void validate() const {
        if (!(alpha >= 0 && beta >= 0 && gamma >= 0)) throw ConfigError("loss weights must be >= 0");
    }
};

struct LossBreakdown {
    double mag = 0.0;
    double phase = 0.0;
    double coh = 0.0;
    double total = 0.0;

    LossBreakdown& operator+=(const LossBreakdown& o) {
        mag += o.mag;
        phase += o.phase;
        coh += o.coh;
        total += o.total;
        return *this;
    }
    LossBreakdown scaled(double s) const { return {mag * s, phase * s, coh * s, total * s}; }
};

inline nlohmann::json to_json(const LossWeights& w) { return {{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}}; }

inline LossWeights loss_weights_from_json(const nlohmann::json& j, LossWeights w = {}) {
    w.alpha = j.value("alpha", w.alpha);
    w.beta = j.value("beta", w.beta);
    w.gamma = j.value("gamma", w.gamma);
    return w;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace detail {
inline void check_cf(const ad::Var& v, const Matrix& m, const char* op) {
    if (v.shape() != Shape{m.rows, m.cols}) {
        throw ShapeError(std::string(op) + ": prediction " + to_string(v.shape()) + " vs target " +
                         to_string(Shape{m.rows, m.cols}));
    }
}
}  // namespace detail

// Mean squared error over all C*F bins.
inline ad::Var loss_mag(const ad::Var& m_hat, const Matrix& m) {
    detail::check_cf(m_hat, m, "loss_mag");
    const ad::Var d = ad::sub(m_hat, m_hat.tape().constant(m.to_tensor()));
    return ad::mean_all(ad::mul(d, d));
}

// Mean of 1 - cos(phi_hat - phi).
inline ad::Var loss_phase(const ad::Var& phi_hat, const Matrix& phi) {
    detail::check_cf(phi_hat, phi, "loss_phase");
    const ad::Var d = ad::sub(phi_hat, phi_hat.tape().constant(phi.to_tensor()));
    return ad::scale(ad::add_scalar(ad::mean_all(ad::cos(d)), -1.0), -1.0);
}

// Mean squared deviation between the PCI of phi_hat and A over all C^2 entries.
inline ad::Var loss_coh(const ad::Var& phi_hat, const PciMatrix& A) {
    const Shape& s = phi_hat.shape();
    if (s.size() != 2 || s[0] != A.size()) {
        throw ShapeError("loss_coh: phase " + to_string(s) + " vs PCI (" + std::to_string(A.size()) + ", " +
                         std::to_string(A.size()) + ")");
    }
    const ad::Var a_hat = pci_differentiable(phi_hat);
    const ad::Var d = ad::sub(a_hat, phi_hat.tape().constant(A.values.to_tensor()));
    return ad::mean_all(ad::mul(d, d));
}

// A window reduced to the model's inputs and reconstruction targets.
struct PreparedWindow {
    SpectralTensor spectra;
    PciMatrix pci;
    std::size_t start_index = 0;
    int label = 0;
};

inline PreparedWindow prepare(const SensorWindow& w, const SpectralConfig& cfg) {
    PreparedWindow p;
    p.spectra = to_spectral_tensor(w, cfg);
    p.pci = pci(p.spectra.phase);
    p.start_index = w.start_index;
    p.label = w.label;
    return p;
}

inline std::vector<PreparedWindow> prepare_all(const std::vector<SensorWindow>& ws, const SpectralConfig& cfg) {
    std::vector<PreparedWindow> out;
    out.reserve(ws.size());
    for (const auto& w : ws) out.push_back(prepare(w, cfg));
    return out;
}

struct CompositeLoss {
    ad::Var total;
    LossBreakdown parts;
};

inline CompositeLoss composite_loss(ad::Tape& tape, ModelParams& params, const PreparedWindow& w,
                                    const LossWeights& lw) {
    const auto rec = forward(tape, params, w.spectra, w.pci);
    const ad::Var mag = loss_mag(rec.magnitude, w.spectra.magnitude);
    const ad::Var ph = loss_phase(rec.phase, w.spectra.phase);
    const ad::Var coh = loss_coh(rec.phase, w.pci);
    const ad::Var total = ad::add(ad::add(ad::scale(mag, lw.alpha), ad::scale(ph, lw.beta)), ad::scale(coh, lw.gamma));
    return {total, LossBreakdown{mag.value().item(), ph.value().item(), coh.value().item(), total.value().item()}};
}

// Loss of one window without gradient tracking.
inline LossBreakdown composite_loss(const PreparedWindow& w, ModelParams& params, const LossWeights& lw) {
    ad::Tape tape(false);
    return composite_loss(tape, params, w, lw).parts;
}

inline LossBreakdown composite_loss(const SensorWindow& w, const SpectralConfig& scfg, ModelParams& params,
                                    const LossWeights& lw) {
    return composite_loss(prepare(w, scfg), params, lw);
}

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 80;
    std::size_t batch_size = 32;
    double lr = 5e-4;
    double lr_min = 0.0;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lr > 0)) throw ConfigError("train: lr must be > 0");
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (!(lr_min >= 0 && lr_min <= lr)) throw ConfigError("train: lr_min must be in [0, lr]");
        if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
        if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("train: adam betas must be in [0, 1)");
        if (!(eps > 0)) throw ConfigError("train: adam eps must be > 0");
    }
};

inline nlohmann::json to_json(const TrainConfig& t) {
    return {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"lr", t.lr},       {"lr_min", t.lr_min},
            {"weight_decay", t.weight_decay}, {"beta1", t.beta1}, {"beta2", t.beta2}, {"eps", t.eps},
            {"seed", t.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t = {}) {
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.lr = j.value("lr", t.lr);
    t.lr_min = j.value("lr_min", t.lr_min);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.beta1 = j.value("beta1", t.beta1);
    t.beta2 = j.value("beta2", t.beta2);
    t.eps = j.value("eps", t.eps);
    t.seed = j.value("seed", t.seed);
    return t;
}

struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t step = 0;
};

// One Adam step with bias correction and decoupled weight decay
// (p <- p * (1 - lr * wd) before the moment update is applied). Throws before
// touching anything if a gradient is non-finite.
inline void adam_step(const std::vector<Parameter*>& params, AdamState& st, double lr, const TrainConfig& cfg) {
    for (const Parameter* p : params) {
        if (!p->grad.all_finite()) throw NumericError("adam_step: non-finite gradient in '" + p->name + "'");
    }
    if (st.m.empty()) {
        for (const Parameter* p : params) {
            st.m.emplace_back(p->value.shape());
            st.v.emplace_back(p->value.shape());
        }
    }
    if (st.m.size() != params.size()) throw Error("adam_step: optimizer state does not match parameter list");
    ++st.step;
    const double t = static_cast<double>(st.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const double decay = 1.0 - lr * cfg.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        Tensor& m = st.m[k];
        Tensor& v = st.v[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] = p.value[i] * decay - lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// Per-epoch cosine annealing from lr0 to lr_min.
inline double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0, double lr_min = 0.0) {
    const double x = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return lr_min + (lr0 - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    LossBreakdown train;
    LossBreakdown val;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    ModelParams best;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
};

inline LossBreakdown mean_loss(const std::vector<PreparedWindow>& ws, ModelParams& params, const LossWeights& lw) {
    LossBreakdown acc;
    for (const auto& w : ws) acc += composite_loss(w, params, lw);
    return acc.scaled(1.0 / static_cast<double>(ws.size()));
}

struct TrainOptions {
    // Written each time validation improves.
    std::optional<std::string> checkpoint_path;
    nlohmann::json checkpoint_extra = nlohmann::json::object();
    std::function<void(const EpochRecord&)> on_epoch;
};

// Mini-batch training; batch loss is the mean of per-window totals. The
// parameters with the lowest validation total are kept in TrainResult::best.
inline TrainResult train_loop(const std::vector<PreparedWindow>& train, const std::vector<PreparedWindow>& val,
                              ModelParams& params, const TrainConfig& cfg, const LossWeights& lw,
                              const TrainOptions& opt = {}) {
    cfg.validate();
    lw.validate();
    if (train.empty()) throw DataError("train_loop: empty training set");
    if (val.empty()) throw DataError("train_loop: empty validation set");
    TrainResult result;
    AdamState adam;
    const auto slots = params.all();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochRecord rec;
        rec.epoch = e + 1;
        rec.lr = cosine_lr(e, cfg.epochs, cfg.lr, cfg.lr_min);
        std::shuffle(order.begin(), order.end(), rng);
        LossBreakdown acc;
        for (std::size_t b0 = 0, batch_no = 0; b0 < order.size(); b0 += cfg.batch_size, ++batch_no) {
            const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
            params.zero_grad();
            ad::Tape tape;
            std::vector<ad::Var> totals;
            for (std::size_t i = b0; i < b1; ++i) {
                auto cl = composite_loss(tape, params, train[order[i]], lw);
                if (!std::isfinite(cl.parts.total)) {
                    throw NumericError("train: non-finite loss at epoch " + std::to_string(e + 1) + ", batch " +
                                       std::to_string(batch_no) + " (window start " +
                                       std::to_string(train[order[i]].start_index) + ")");
                }
                acc += cl.parts;
                totals.push_back(cl.total);
            }
            ad::Var batch = totals[0];
            for (std::size_t i = 1; i < totals.size(); ++i) batch = ad::add(batch, totals[i]);
            batch = ad::scale(batch, 1.0 / static_cast<double>(totals.size()));
            tape.backward(batch);
            try {
                adam_step(slots, adam, rec.lr, cfg);
            } catch (const NumericError& err) {
                throw NumericError(std::string(err.what()) + " at epoch " + std::to_string(e + 1) + ", batch " +
                                   std::to_string(batch_no));
            }
        }
        rec.train = acc.scaled(1.0 / static_cast<double>(train.size()));
        rec.val = mean_loss(val, params, lw);
        if (!std::isfinite(rec.val.total)) {
            throw NumericError("train: non-finite validation loss at epoch " + std::to_string(e + 1));
        }
        if (result.history.empty() || rec.val.total < result.best_val) {
            result.best_val = rec.val.total;
            result.best_epoch = rec.epoch;
            result.best = params;
            if (opt.checkpoint_path) save_checkpoint(params, *opt.checkpoint_path, opt.checkpoint_extra);
        }
        result.history.push_back(rec);
        if (opt.on_epoch) opt.on_epoch(rec);
    }
    return result;
}

inline void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,lr,train_mag,train_phase,train_coh,train_total,val_total\n";
    out.precision(17);
    for (const auto& r : history) {
        out << r.epoch << ',' << r.lr << ',' << r.train.mag << ',' << r.train.phase << ',' << r.train.coh << ','
            << r.train.total << ',' << r.val.total << '\n';
    }
}

}  // namespace phasenet
