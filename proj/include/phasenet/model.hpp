#pragma once

// Spectral CNN embedding -> PCI-weighted graph attention -> sensor-token
// transformer encoder -> dual-head (magnitude, phase) decoder.
//
// Linear weights are stored (in, out) so that y = x W + b for row inputs.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasenet/autodiff.hpp"
#include "phasenet/coherence.hpp"
#include "phasenet/error.hpp"
#include "phasenet/spectral.hpp"

namespace phasenet {

struct ModelConfig {
    std::size_t sensors = 51;
    std::size_t window = 60;
    std::size_t n_fft = 128;
    std::size_t embed_dim = 128;  // D
    std::size_t d_model = 256;
    std::size_t heads = 8;
    std::size_t transformer_layers = 4;
    std::size_t gat_layers = 2;
    std::size_t gat_heads = 4;
    double leaky_slope = 0.2;
    std::size_t ffn_dim = 1024;
    std::size_t cnn_channels1 = 32;
    std::size_t cnn_channels2 = 64;
    std::size_t cnn_pool = 4;
    std::size_t decoder_hidden = 256;
    // Initial bias of the magnitude head's output layer. Positive so the
    // closing ReLU starts active; at zero about half the bins never train.
    double magnitude_bias = 0.5;
    std::uint64_t seed = 0;

    std::size_t bins() const noexcept { return n_fft / 2 + 1; }
    std::size_t gat_head_dim() const noexcept { return embed_dim / gat_heads; }
    std::size_t pooled_length() const noexcept { return bins() / cnn_pool; }

    void validate() const {
        if (sensors == 0) throw ConfigError("model: sensors must be >= 1");
        if (n_fft < 2 || n_fft % 2 != 0) throw ConfigError("model: n_fft must be even and >= 2");
        if (window == 0 || window > n_fft) throw ConfigError("model: window must be in [1, n_fft]");
        if (gat_heads == 0 || embed_dim % gat_heads != 0) throw ConfigError("model: embed_dim must be divisible by gat_heads");
        if (heads == 0 || d_model % heads != 0) throw ConfigError("model: d_model must be divisible by heads");
        if (cnn_pool == 0 || pooled_length() == 0) throw ConfigError("model: cnn_pool must be in [1, F]");
        if (embed_dim == 0 || ffn_dim == 0 || decoder_hidden == 0 || cnn_channels1 == 0 || cnn_channels2 == 0)
            throw ConfigError("model: layer widths must be >= 1");
        if (!(leaky_slope >= 0.0)) throw ConfigError("model: leaky_slope must be >= 0");
        if (!std::isfinite(magnitude_bias)) throw ConfigError("model: magnitude_bias must be finite");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"sensors", c.sensors},
            {"window", c.window},
            {"n_fft", c.n_fft},
            {"embed_dim", c.embed_dim},
            {"d_model", c.d_model},
            {"heads", c.heads},
            {"transformer_layers", c.transformer_layers},
            {"gat_layers", c.gat_layers},
            {"gat_heads", c.gat_heads},
            {"leaky_slope", c.leaky_slope},
            {"ffn_dim", c.ffn_dim},
            {"cnn_channels", {c.cnn_channels1, c.cnn_channels2}},
            {"cnn_pool", c.cnn_pool},
            {"decoder_hidden", c.decoder_hidden},
            {"magnitude_bias", c.magnitude_bias},
            {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
    c.sensors = j.value("sensors", c.sensors);
    c.window = j.value("window", c.window);
    c.n_fft = j.value("n_fft", c.n_fft);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.transformer_layers = j.value("transformer_layers", c.transformer_layers);
    c.gat_layers = j.value("gat_layers", c.gat_layers);
    c.gat_heads = j.value("gat_heads", c.gat_heads);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    if (j.contains("cnn_channels")) {
        const auto ch = j.at("cnn_channels").get<std::vector<std::size_t>>();
        if (ch.size() != 2) throw ConfigError("model: cnn_channels must have two entries");
        c.cnn_channels1 = ch[0];
        c.cnn_channels2 = ch[1];
    }
    c.cnn_pool = j.value("cnn_pool", c.cnn_pool);
    c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
    c.magnitude_bias = j.value("magnitude_bias", c.magnitude_bias);
    c.seed = j.value("seed", c.seed);
    return c;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

using ad::Parameter;

enum class ParamGroup { cnn, gat, transformer, decoder };

inline const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::cnn: return "cnn";
        case ParamGroup::gat: return "gat";
        case ParamGroup::transformer: return "transformer";
        case ParamGroup::decoder: return "decoder";
    }
    return "?";
}

struct Linear {
    Parameter w;  // (in, out)
    Parameter b;  // (out), may be empty when bias-free
    bool has_bias() const noexcept { return b.value.size() != 0; }
};

struct CnnParams {
    Parameter conv1_w, conv1_b, conv2_w, conv2_b;
    Linear proj;
};

struct GatLayerParams {
    Linear q, k, v, out;  // out has no bias
};

struct EncoderLayerParams {
    Parameter ln1_g, ln1_b;
    Linear q, k, v, out;
    Parameter ln2_g, ln2_b;
    Linear ff1, ff2;
};

struct TransformerParams {
    Linear proj;
    Parameter pos;  // (C, d_model)
    std::vector<EncoderLayerParams> layers;
    Parameter ln_g, ln_b;
};

struct HeadParams {
    Linear hidden, out;
};

struct ModelParams {
    ModelConfig config;
    CnnParams cnn;
    std::vector<GatLayerParams> gat;
    TransformerParams transformer;
    HeadParams magnitude_head, phase_head;

    // Visits every tensor in a fixed order: f(group, parameter).
    template <class F>
    void for_each(F&& f) {
        const auto lin = [&](ParamGroup g, Linear& l) {
            f(g, l.w);
            if (l.has_bias()) f(g, l.b);
        };
        f(ParamGroup::cnn, cnn.conv1_w);
        f(ParamGroup::cnn, cnn.conv1_b);
        f(ParamGroup::cnn, cnn.conv2_w);
        f(ParamGroup::cnn, cnn.conv2_b);
        lin(ParamGroup::cnn, cnn.proj);
        for (auto& l : gat) {
            lin(ParamGroup::gat, l.q);
            lin(ParamGroup::gat, l.k);
            lin(ParamGroup::gat, l.v);
            lin(ParamGroup::gat, l.out);
        }
        lin(ParamGroup::transformer, transformer.proj);
        f(ParamGroup::transformer, transformer.pos);
        for (auto& l : transformer.layers) {
            f(ParamGroup::transformer, l.ln1_g);
            f(ParamGroup::transformer, l.ln1_b);
            lin(ParamGroup::transformer, l.q);
            lin(ParamGroup::transformer, l.k);
            lin(ParamGroup::transformer, l.v);
            lin(ParamGroup::transformer, l.out);
            f(ParamGroup::transformer, l.ln2_g);
            f(ParamGroup::transformer, l.ln2_b);
            lin(ParamGroup::transformer, l.ff1);
            lin(ParamGroup::transformer, l.ff2);
        }
        f(ParamGroup::transformer, transformer.ln_g);
        f(ParamGroup::transformer, transformer.ln_b);
        lin(ParamGroup::decoder, magnitude_head.hidden);
        lin(ParamGroup::decoder, magnitude_head.out);
        lin(ParamGroup::decoder, phase_head.hidden);
        lin(ParamGroup::decoder, phase_head.out);
    }

    template <class F>
    void for_each(F&& f) const {
        const_cast<ModelParams*>(this)->for_each(
            [&](ParamGroup g, Parameter& p) { f(g, static_cast<const Parameter&>(p)); });
    }

    std::vector<Parameter*> all() {
        std::vector<Parameter*> out;
        for_each([&](ParamGroup, Parameter& p) { out.push_back(&p); });
        return out;
    }

    void zero_grad() {
        for_each([](ParamGroup, Parameter& p) { p.zero_grad(); });
    }
};

namespace detail {

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Parameter xavier(std::string name, Shape shape, std::size_t fan_in, std::size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Tensor t(shape);
        for (auto& v : t.vec()) v = dist(rng_);
        return Parameter(std::move(name), std::move(t));
    }

    Parameter normal(std::string name, Shape shape, double stddev) {
        std::normal_distribution<double> dist(0.0, stddev);
        Tensor t(shape);
        for (auto& v : t.vec()) v = dist(rng_);
        return Parameter(std::move(name), std::move(t));
    }

    static Parameter constant(std::string name, Shape shape, double v) {
        return Parameter(std::move(name), Tensor(std::move(shape), v));
    }

    Linear linear(const std::string& name, std::size_t in, std::size_t out, bool bias = true) {
        Linear l;
        l.w = xavier(name + ".w", Shape{in, out}, in, out);
        if (bias) l.b = constant(name + ".b", Shape{out}, 0.0);
        return l;
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace detail

// Xavier-uniform linear/conv weights, zero biases (except the magnitude output,
// see magnitude_bias), unit LayerNorm gains, N(0, 0.02^2) positional
// embeddings; deterministic per config.seed.
inline ModelParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    detail::Initializer init(cfg.seed);
    ModelParams p;
    p.config = cfg;
    const std::size_t c1 = cfg.cnn_channels1, c2 = cfg.cnn_channels2, D = cfg.embed_dim, dm = cfg.d_model;
    p.cnn.conv1_w = init.xavier("cnn.conv1.w", Shape{c1, 2, 3}, 2 * 3, c1 * 3);
    p.cnn.conv1_b = detail::Initializer::constant("cnn.conv1.b", Shape{c1}, 0.0);
    p.cnn.conv2_w = init.xavier("cnn.conv2.w", Shape{c2, c1, 3}, c1 * 3, c2 * 3);
    p.cnn.conv2_b = detail::Initializer::constant("cnn.conv2.b", Shape{c2}, 0.0);
    p.cnn.proj = init.linear("cnn.proj", c2 * cfg.pooled_length(), D);
    for (std::size_t l = 0; l < cfg.gat_layers; ++l) {
        const std::string n = "gat." + std::to_string(l);
        GatLayerParams g;
        g.q = init.linear(n + ".q", D, D);
        g.k = init.linear(n + ".k", D, D);
        g.v = init.linear(n + ".v", D, D);
        g.out = init.linear(n + ".out", D, D, false);
        p.gat.push_back(std::move(g));
    }
    p.transformer.proj = init.linear("transformer.proj", D, dm);
    p.transformer.pos = init.normal("transformer.pos", Shape{cfg.sensors, dm}, 0.02);
    for (std::size_t l = 0; l < cfg.transformer_layers; ++l) {
        const std::string n = "transformer." + std::to_string(l);
        EncoderLayerParams e;
        e.ln1_g = detail::Initializer::constant(n + ".ln1.g", Shape{dm}, 1.0);
        e.ln1_b = detail::Initializer::constant(n + ".ln1.b", Shape{dm}, 0.0);
        e.q = init.linear(n + ".q", dm, dm);
        e.k = init.linear(n + ".k", dm, dm);
        e.v = init.linear(n + ".v", dm, dm);
        e.out = init.linear(n + ".out", dm, dm);
        e.ln2_g = detail::Initializer::constant(n + ".ln2.g", Shape{dm}, 1.0);
        e.ln2_b = detail::Initializer::constant(n + ".ln2.b", Shape{dm}, 0.0);
        e.ff1 = init.linear(n + ".ff1", dm, cfg.ffn_dim);
        e.ff2 = init.linear(n + ".ff2", cfg.ffn_dim, dm);
        p.transformer.layers.push_back(std::move(e));
    }
    p.transformer.ln_g = detail::Initializer::constant("transformer.ln.g", Shape{dm}, 1.0);
    p.transformer.ln_b = detail::Initializer::constant("transformer.ln.b", Shape{dm}, 0.0);
    const std::size_t CF = cfg.sensors * cfg.bins();
    p.magnitude_head.hidden = init.linear("decoder.magnitude.hidden", dm, cfg.decoder_hidden);
    p.magnitude_head.out = init.linear("decoder.magnitude.out", cfg.decoder_hidden, CF);
    p.magnitude_head.out.b.value.fill(cfg.magnitude_bias);
    p.phase_head.hidden = init.linear("decoder.phase.hidden", dm, cfg.decoder_hidden);
    p.phase_head.out = init.linear("decoder.phase.out", cfg.decoder_hidden, CF);
    return p;
}

struct ParamCounts {
    std::size_t cnn = 0, gat = 0, transformer = 0, decoder = 0;
    std::size_t total() const noexcept { return cnn + gat + transformer + decoder; }
};

inline ParamCounts count_params(const ModelParams& p) {
    ParamCounts c;
    p.for_each([&](ParamGroup g, const Parameter& t) {
        const std::size_t n = t.value.size();
        switch (g) {
            case ParamGroup::cnn: c.cnn += n; break;
            case ParamGroup::gat: c.gat += n; break;
            case ParamGroup::transformer: c.transformer += n; break;
            case ParamGroup::decoder: c.decoder += n; break;
        }
    });
    return c;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

// Softmax matrices captured during a forward pass, for inspection in tests.
struct AttentionTrace {
    std::vector<Tensor> gat;          // one (C, C) per layer and head
    std::vector<Tensor> transformer;  // one (C, C) per layer and head
};

inline ad::Var linear(ad::Tape& tape, const ad::Var& x, Linear& l) {
    ad::Var y = ad::matmul(x, tape.param(l.w));
    return l.has_bias() ? ad::add(y, tape.param(l.b)) : y;
}

// (C, 2, F) spectra -> (C, D); every sensor goes through the same CNN.
inline ad::Var embed(ad::Tape& tape, ModelParams& p, const ad::Var& spectra) {
    const auto& cfg = p.config;
    const Shape& s = spectra.shape();
    if (s.size() != 3 || s[1] != 2 || s[2] != cfg.bins()) {
        throw ShapeError("embed: expected (C, 2, " + std::to_string(cfg.bins()) + "), got " + to_string(s));
    }
    const std::size_t C = s[0];
    ad::Var h = ad::relu(ad::conv1d(spectra, tape.param(p.cnn.conv1_w), tape.param(p.cnn.conv1_b)));
    h = ad::relu(ad::conv1d(h, tape.param(p.cnn.conv2_w), tape.param(p.cnn.conv2_b)));
    h = ad::maxpool1d(h, cfg.cnn_pool);
    h = ad::reshape(h, Shape{C, cfg.cnn_channels2 * cfg.pooled_length()});
    return linear(tape, h, p.cnn.proj);
}

// Multi-head attention over rows of q/k/v (C, d). When `pci` is given the
// scaled dot products are multiplied by it before LeakyReLU (graph attention);
// otherwise plain scaled dot-product attention.
inline ad::Var multi_head_attention(const ad::Var& q, const ad::Var& k, const ad::Var& v, std::size_t heads,
                                    const ad::Var* pci, double slope, std::vector<Tensor>* trace) {
    const std::size_t d = q.shape()[1];
    const std::size_t dh = d / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ad::Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const ad::Var qh = ad::slice(q, 1, h * dh, dh);
        const ad::Var kh = ad::slice(k, 1, h * dh, dh);
        const ad::Var vh = ad::slice(v, 1, h * dh, dh);
        ad::Var logits = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv);
        if (pci != nullptr) logits = ad::leaky_relu(ad::mul(logits, *pci), slope);
        const ad::Var alpha = ad::softmax(logits, 1);
        if (trace) trace->push_back(alpha.value());
        outs.push_back(ad::matmul(alpha, vh));
    }
    return heads == 1 ? outs[0] : ad::concat(outs, 1);
}

// One PCI-weighted graph attention layer with residual connection. `pci` is a
// constant (C, C) Var.
inline ad::Var gat_layer(ad::Tape& tape, GatLayerParams& l, const ad::Var& h, const ad::Var& pci,
                         const ModelConfig& cfg, AttentionTrace* trace = nullptr) {
    const Shape& s = h.shape();
    if (s.size() != 2 || s[1] != cfg.embed_dim || pci.shape() != Shape{s[0], s[0]}) {
        throw ShapeError("gat_layer: h " + to_string(s) + " and A " + to_string(pci.shape()) + " are incompatible");
    }
    const ad::Var q = linear(tape, h, l.q);
    const ad::Var k = linear(tape, h, l.k);
    const ad::Var v = linear(tape, h, l.v);
    const ad::Var att =
        multi_head_attention(q, k, v, cfg.gat_heads, &pci, cfg.leaky_slope, trace ? &trace->gat : nullptr);
    return ad::add(h, linear(tape, att, l.out));
}

// Pre-norm encoder layer over sensor tokens (C, d_model).
inline ad::Var encoder_layer(ad::Tape& tape, EncoderLayerParams& l, const ad::Var& x, const ModelConfig& cfg,
                             AttentionTrace* trace) {
    const ad::Var a = ad::layer_norm(x, tape.param(l.ln1_g), tape.param(l.ln1_b), 1);
    const ad::Var att = multi_head_attention(linear(tape, a, l.q), linear(tape, a, l.k), linear(tape, a, l.v),
                                             cfg.heads, nullptr, 0.0, trace ? &trace->transformer : nullptr);
    const ad::Var x1 = ad::add(x, linear(tape, att, l.out));
    const ad::Var b = ad::layer_norm(x1, tape.param(l.ln2_g), tape.param(l.ln2_b), 1);
    const ad::Var ff = linear(tape, ad::relu(linear(tape, b, l.ff1)), l.ff2);
    return ad::add(x1, ff);
}

// (C, D) -> (d_model): project, add per-sensor position, encode, mean-pool.
inline ad::Var encode(ad::Tape& tape, ModelParams& p, const ad::Var& h, AttentionTrace* trace = nullptr) {
    const auto& cfg = p.config;
    const Shape& s = h.shape();
    if (s.size() != 2 || s[1] != cfg.embed_dim || s[0] != cfg.sensors) {
        throw ShapeError("encode: expected (" + std::to_string(cfg.sensors) + ", " + std::to_string(cfg.embed_dim) +
                         "), got " + to_string(s));
    }
    ad::Var u = ad::add(linear(tape, h, p.transformer.proj), tape.param(p.transformer.pos));
    for (auto& l : p.transformer.layers) u = encoder_layer(tape, l, u, cfg, trace);
    u = ad::layer_norm(u, tape.param(p.transformer.ln_g), tape.param(p.transformer.ln_b), 1);
    return ad::mean(u, 0);
}

struct Reconstruction {
    ad::Var magnitude;  // (C, F), >= 0
    ad::Var phase;      // (C, F), in (-pi, pi)
};

inline Reconstruction decode(ad::Tape& tape, ModelParams& p, const ad::Var& z) {
    const auto& cfg = p.config;
    if (z.shape() != Shape{cfg.d_model}) {
        throw ShapeError("decode: expected (" + std::to_string(cfg.d_model) + "), got " + to_string(z.shape()));
    }
    const ad::Var row = ad::reshape(z, Shape{1, cfg.d_model});
    const Shape out{cfg.sensors, cfg.bins()};
    const auto head = [&](HeadParams& hp) {
        return ad::reshape(linear(tape, ad::relu(linear(tape, row, hp.hidden)), hp.out), out);
    };
    return {ad::relu(head(p.magnitude_head)), ad::scale(ad::tanh(head(p.phase_head)), std::numbers::pi)};
}

// Full network on precomputed spectra and PCI.
inline Reconstruction forward(ad::Tape& tape, ModelParams& p, const SpectralTensor& spec, const PciMatrix& A,
                              AttentionTrace* trace = nullptr) {
    const auto& cfg = p.config;
    if (spec.channels() != cfg.sensors || spec.bins() != cfg.bins()) {
        throw ShapeError("forward: spectra (" + std::to_string(spec.channels()) + ", " + std::to_string(spec.bins()) +
                         ") do not match config (" + std::to_string(cfg.sensors) + ", " + std::to_string(cfg.bins()) +
                         ")");
    }
    ad::Var h = embed(tape, p, tape.constant(spec.stacked()));
    const ad::Var a = tape.constant(A.values.to_tensor());
    for (auto& l : p.gat) h = gat_layer(tape, l, h, a, cfg, trace);
    return decode(tape, p, encode(tape, p, h, trace));
}

struct ForwardResult {
    SpectralTensor spectra;
    PciMatrix pci;
    Tensor magnitude;
    Tensor phase;
};

// Window -> (S, A, M_hat, Phi_hat) without gradient tracking.
inline ForwardResult forward(const SensorWindow& w, const SpectralConfig& scfg, ModelParams& p) {
    ForwardResult r;
    r.spectra = to_spectral_tensor(w, scfg);
    r.pci = pci(r.spectra.phase);
    ad::Tape tape(false);
    const auto rec = forward(tape, p, r.spectra, r.pci);
    r.magnitude = rec.magnitude.value();
    r.phase = rec.phase.value();
    return r;
}

}  // namespace phasenet
