#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numbers>
#include <random>

#include "support.hpp"

using namespace phasenet;
using testing_support::random_tensor;
using testing_support::tiny_model;
using testing_support::tiny_spectral;

namespace {

constexpr double kPi = std::numbers::pi;

PreparedWindow tiny_window(std::size_t C = 4, std::uint64_t seed = 1) {
    return prepare(testing_support::sine_windows(1, C, 16, 16, seed)[0], tiny_spectral());
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("phasenet_test_" + name)).string();
}

}  // namespace

TEST(ParamCount, DefaultWidths) {
    const auto c = count_params(init_params(ModelConfig{}));
    EXPECT_EQ(c.cnn, 137632u);
    EXPECT_EQ(c.gat, 131840u);
    EXPECT_EQ(c.transformer, 3205632u);
    EXPECT_EQ(c.decoder, 1835494u);
    EXPECT_EQ(c.total(), c.cnn + c.gat + c.transformer + c.decoder);
    EXPECT_EQ(c.total(), 5310598u);
    const auto within = [](double got, double ref) { return std::abs(got - ref) <= 0.10 * ref; };
    EXPECT_TRUE(within(c.cnn, 132976));
    EXPECT_TRUE(within(c.gat, 131840));
    EXPECT_TRUE(within(c.transformer, 3192576));
    EXPECT_TRUE(within(c.decoder, 1835494));
    EXPECT_TRUE(within(c.total(), 5292886));
}

TEST(ParamCount, TinyClosedForm) {
    // C=4, F=9, D=8, d_model=16, ffn 32, cnn 4/4 pooled to 4 bins, decoder hidden 16.
    const std::size_t cnn = (4 * 2 * 3 + 4) + (4 * 4 * 3 + 4) + (4 * 4 * 8 + 8);
    const std::size_t gat = 3 * (8 * 8 + 8) + 8 * 8;
    const std::size_t layer = 2 * 16 + 3 * (16 * 16 + 16) + 16 * 16 + 16 + 2 * 16 + (16 * 32 + 32) + (32 * 16 + 16);
    const std::size_t transformer = (8 * 16 + 16) + 4 * 16 + layer + 2 * 16;
    const std::size_t decoder = 2 * ((16 * 16 + 16) + (16 * 36 + 36));
    const auto c = count_params(init_params(tiny_model()));
    EXPECT_EQ(c.cnn, cnn);
    EXPECT_EQ(c.gat, gat);
    EXPECT_EQ(c.transformer, transformer);
    EXPECT_EQ(c.decoder, decoder);
    EXPECT_EQ(c.total(), 4728u);
}

TEST(Config, Validation) {
    ModelConfig c;
    c.embed_dim = 130;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ModelConfig{};
    c.heads = 7;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ModelConfig{};
    c.window = 200;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(model_config_from_json(to_json(tiny_model())), tiny_model());
}

TEST(Forward, DefaultShapes) {
    ModelParams p = init_params(ModelConfig{});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    SensorWindow w;
    w.data = Matrix(60, 51);
    for (auto& v : w.data.data) v = g(rng);
    const auto r = forward(w, SpectralConfig{}, p);
    EXPECT_EQ(r.spectra.stacked().shape(), (Shape{51, 2, 65}));
    EXPECT_EQ(r.pci.size(), 51u);
    EXPECT_EQ(r.magnitude.shape(), (Shape{51, 65}));
    EXPECT_EQ(r.phase.shape(), (Shape{51, 65}));

    ad::Tape tape(false);
    const auto h = embed(tape, p, tape.constant(r.spectra.stacked()));
    EXPECT_EQ(h.shape(), (Shape{51, 128}));
    EXPECT_EQ(encode(tape, p, h).shape(), (Shape{256}));
}

TEST(Embed, PermutationEquivariant) {
    ModelParams p = init_params(tiny_model());
    const auto w = tiny_window();
    const Tensor s = w.spectra.stacked();
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Tensor sp(s.shape());
    const std::size_t row = 2 * 9;
    for (std::size_t i = 0; i < 4; ++i)
        std::copy_n(s.vec().begin() + perm[i] * row, row, sp.vec().begin() + i * row);
    ad::Tape tape(false);
    const Tensor a = embed(tape, p, tape.constant(s)).value();
    const Tensor b = embed(tape, p, tape.constant(sp)).value();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t d = 0; d < 8; ++d) EXPECT_EQ(b.at(i, d), a.at(perm[i], d));
}

TEST(Embed, ZeroInputGivesIdenticalRows) {
    ModelParams p = init_params(tiny_model());
    for (auto* b : {&p.cnn.conv1_b, &p.cnn.conv2_b, &p.cnn.proj.b})
        for (std::size_t i = 0; i < b->value.size(); ++i) b->value[i] = 0.1 * static_cast<double>(i % 3) - 0.05;
    ad::Tape tape(false);
    const Tensor h = embed(tape, p, tape.constant(Tensor(Shape{4, 2, 9}))).value();
    for (std::size_t i = 1; i < 4; ++i)
        for (std::size_t d = 0; d < 8; ++d) EXPECT_EQ(h.at(i, d), h.at(0, d));
    EXPECT_THROW(embed(tape, p, tape.constant(Tensor(Shape{4, 2, 8}))), ShapeError);
}

TEST(Gat, AttentionRowsSumToOne) {
    ModelParams p = init_params(tiny_model());
    const auto w = tiny_window();
    AttentionTrace trace;
    ad::Tape tape(false);
    forward(tape, p, w.spectra, w.pci, &trace);
    ASSERT_EQ(trace.gat.size(), 2u);
    ASSERT_EQ(trace.transformer.size(), 2u);
    for (const auto* set : {&trace.gat, &trace.transformer})
        for (const Tensor& a : *set)
            for (std::size_t i = 0; i < 4; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < 4; ++j) s += a.at(i, j);
                EXPECT_NEAR(s, 1.0, 1e-12);
            }
}

TEST(Gat, ZeroQueryGivesUniformAttention) {
    ModelConfig cfg = tiny_model();
    ModelParams p = init_params(cfg);
    p.gat[0].q.w.value.fill(0.0);
    const auto w = tiny_window();
    AttentionTrace trace;
    ad::Tape tape(false);
    const auto h = embed(tape, p, tape.constant(w.spectra.stacked()));
    gat_layer(tape, p.gat[0], h, tape.constant(w.pci.values.to_tensor()), cfg, &trace);
    for (const Tensor& a : trace.gat)
        for (double v : a.vec()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Gat, PermutationEquivariant) {
    ModelConfig cfg = tiny_model();
    ModelParams p = init_params(cfg);
    std::mt19937_64 rng(5);
    const Tensor h = random_tensor(Shape{4, 8}, rng);
    const auto w = tiny_window();
    const Matrix& A = w.pci.values;
    const std::vector<std::size_t> perm{3, 1, 0, 2};
    Tensor hp(Shape{4, 8});
    Matrix Ap(4, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t d = 0; d < 8; ++d) hp.at(i, d) = h.at(perm[i], d);
        for (std::size_t j = 0; j < 4; ++j) Ap(i, j) = A(perm[i], perm[j]);
    }
    ad::Tape tape(false);
    const Tensor y = gat_layer(tape, p.gat[0], tape.constant(h), tape.constant(A.to_tensor()), cfg).value();
    const Tensor yp = gat_layer(tape, p.gat[0], tape.constant(hp), tape.constant(Ap.to_tensor()), cfg).value();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(yp.at(i, d), y.at(perm[i], d), 1e-12);
}

TEST(Gat, SharperQueriesConcentrateOnTheBestNeighbour) {
    // Three sensors, one head of width 2; sensor 0's logits are positive and
    // largest towards sensor 2.
    ad::Tape tape(false);
    const Tensor k(Shape{3, 2}, {1.0, 0.0, 0.5, 0.5, 0.2, 1.0});
    const Tensor v(Shape{3, 2}, {1.0, 0.0, 0.0, 1.0, 1.0, 1.0});
    const Tensor A(Shape{3, 3}, {1.0, 0.6, 0.9, 0.6, 1.0, 0.4, 0.9, 0.4, 1.0});
    const auto alpha_row0 = [&](double qscale, const Tensor& adj) {
        const Tensor q(Shape{3, 2}, {qscale * 0.3, qscale * 1.2, 0.1, 0.1, 0.1, 0.1});
        std::vector<Tensor> trace;
        const ad::Var a = tape.constant(adj);
        multi_head_attention(tape.constant(q), tape.constant(k), tape.constant(v), 1, &a, 0.2, &trace);
        return std::vector<double>{trace[0].at(0, 0), trace[0].at(0, 1), trace[0].at(0, 2)};
    };
    const auto base = alpha_row0(1.0, A);
    const auto sharp = alpha_row0(2.0, A);
    EXPECT_GT(base[2], base[0]);
    EXPECT_GT(base[2], base[1]);
    EXPECT_GT(sharp[2], base[2]);
    EXPECT_LT(sharp[1], base[1]);

    // Raising A_02 raises the already dominant positive logit, so alpha_02 grows.
    double prev = base[2];
    for (double a02 : {0.92, 0.95, 1.0}) {
        Tensor A2 = A;
        A2.at(0, 2) = A2.at(2, 0) = a02;
        const double now = alpha_row0(1.0, A2)[2];
        EXPECT_GE(now, prev);
        prev = now;
    }
}

TEST(Encode, SymmetricTokensPoolToSharedRow) {
    ModelConfig cfg = tiny_model();
    ModelParams p = init_params(cfg);
    p.transformer.pos.value.fill(0.0);
    std::mt19937_64 rng(6);
    const Tensor row = random_tensor(Shape{1, 8}, rng);
    Tensor h(Shape{4, 8});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t d = 0; d < 8; ++d) h.at(i, d) = row.at(0, d);
    ad::Tape tape(false);
    const Tensor z = encode(tape, p, tape.constant(h)).value();
    const Tensor z1 = [&] {
        ModelConfig c1 = cfg;
        c1.sensors = 1;
        ModelParams p1 = p;
        p1.config = c1;
        p1.transformer.pos.value = Tensor(Shape{1, 16});
        return encode(tape, p1, tape.constant(row)).value();
    }();
    for (std::size_t d = 0; d < 16; ++d) EXPECT_NEAR(z[d], z1[d], 1e-12);
}

TEST(Decode, RangesFuzzed) {
    ModelParams p = init_params(tiny_model());
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        ad::Tape tape(false);
        const auto rec = decode(tape, p, tape.constant(random_tensor(Shape{16}, rng, -20.0, 20.0)));
        EXPECT_EQ(rec.magnitude.shape(), (Shape{4, 9}));
        for (double v : rec.magnitude.value().vec()) EXPECT_GE(v, 0.0);
        for (double v : rec.phase.value().vec()) {
            EXPECT_GE(v, -kPi);
            EXPECT_LE(v, kPi);
            EXPECT_LT(std::abs(v), kPi + 1e-15);
        }
    }
    ad::Tape tape(false);
    EXPECT_THROW(decode(tape, p, tape.constant(Tensor(Shape{8}))), ShapeError);
}

TEST(Forward, BackwardReachesEveryParameter) {
    ModelParams p = init_params(tiny_model());
    const auto w = tiny_window();
    p.zero_grad();
    ad::Tape tape;
    auto cl = composite_loss(tape, p, w, LossWeights{});
    tape.backward(cl.total);
    for (Parameter* q : p.all()) {
        ASSERT_EQ(q->grad.shape(), q->value.shape()) << q->name;
        EXPECT_TRUE(q->grad.all_finite()) << q->name;
        EXPECT_TRUE(std::any_of(q->grad.vec().begin(), q->grad.vec().end(), [](double g) { return g != 0.0; }))
            << q->name;
    }
}

TEST(Forward, Deterministic) {
    ModelParams a = init_params(tiny_model());
    ModelParams b = init_params(tiny_model());
    const auto w = testing_support::sine_windows(1, 4, 16, 16)[0];
    const auto ra = forward(w, tiny_spectral(), a);
    const auto rb = forward(w, tiny_spectral(), b);
    EXPECT_EQ(ra.magnitude, rb.magnitude);
    EXPECT_EQ(ra.phase, rb.phase);
    ModelConfig other = tiny_model();
    other.seed = 4;
    ModelParams c = init_params(other);
    EXPECT_NE(forward(w, tiny_spectral(), c).magnitude, ra.magnitude);
}

TEST(Forward, EndToEndGradient) {
    ModelParams p = init_params(tiny_model());
    const auto rep = testing_support::param_grad_check(p, tiny_window(), LossWeights{}, 80, 17);
    EXPECT_EQ(rep.checked, 80u);
    EXPECT_LE(rep.max_rel, 1e-4);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
    ModelParams p = init_params(tiny_model());
    const std::string path = temp_path("rt.ckpt"), path2 = temp_path("rt2.ckpt");
    save_checkpoint(p, path, {{"note", "x"}});
    const auto ck = load_checkpoint(path);
    EXPECT_EQ(ck.params.config, p.config);
    EXPECT_EQ(ck.extra["note"], "x");
    save_checkpoint(ck.params, path2, ck.extra);
    EXPECT_EQ(read_file_bytes(path), read_file_bytes(path2));
    auto qa = p.all();
    auto qb = const_cast<ModelParams&>(ck.params).all();
    for (std::size_t i = 0; i < qa.size(); ++i) EXPECT_EQ(qa[i]->value, qb[i]->value);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST(Checkpoint, CorruptionIsDetected) {
    ModelParams p = init_params(tiny_model());
    auto bytes = serialize_checkpoint(p);
    for (std::size_t pos : {std::size_t{3}, bytes.size() / 2, bytes.size() - 9}) {
        auto bad = bytes;
        bad[pos] ^= 0x10;
        EXPECT_THROW(deserialize_checkpoint(bad), DataError) << pos;
    }
    bytes.resize(bytes.size() - 20);
    EXPECT_THROW(deserialize_checkpoint(bytes), DataError);
    EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.ckpt")), DataError);
}

TEST(Checkpoint, ShapeMismatchNamesTensor) {
    ModelConfig big = tiny_model(51);
    const auto bytes = serialize_checkpoint(init_params(big));
    const ModelConfig small = tiny_model(8);
    try {
        deserialize_checkpoint(bytes, &small);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("transformer.pos"), std::string::npos) << msg;
    }
}
