#pragma once

// Surrogate plant data: sinusoidal oscillators with slow phase wander, each
// channel a lagged, scaled copy of one or more oscillators, plus noise and a
// common slow drift. Attacks overwrite one channel on an interval.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasenet/error.hpp"
#include "phasenet/ingest.hpp"

namespace phasenet {

struct Oscillator {
    double freq = 0.0625;  // cycles per sample
    double amplitude = 1.0;
    double phase = 0.0;    // initial phase, radians
    double wander = 0.0;   // std of the per-sample phase random walk, radians
};

struct Coupling {
    std::size_t oscillator = 0;
    std::size_t lag = 0;  // samples
    double gain = 1.0;
};

struct SynthConfig {
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<Oscillator> oscillators;
    std::vector<std::vector<Coupling>> coupling;  // per channel
    double noise_std = 0.0;
    double drift = 0.0;  // amplitude of a common sinusoidal trend with period `length`
    std::uint64_t seed = 0;

    std::size_t max_lag() const {
        std::size_t m = 0;
        for (const auto& ch : coupling)
            for (const auto& k : ch) m = std::max(m, k.lag);
        return m;
    }

    void validate() const {
        if (channels == 0) throw ConfigError("synth: channels must be >= 1");
        if (length == 0) throw ConfigError("synth: length must be >= 1");
        if (coupling.size() != channels) {
            throw ConfigError("synth: coupling lists " + std::to_string(coupling.size()) + " channels, expected " +
                              std::to_string(channels));
        }
        for (std::size_t k = 0; k < oscillators.size(); ++k) {
            const double f = oscillators[k].freq;
            if (!(f > 0.0 && f < 0.5))
                throw ConfigError("synth: oscillator " + std::to_string(k) + " frequency must be in (0, 0.5)");
            if (!(oscillators[k].wander >= 0.0)) throw ConfigError("synth: wander must be >= 0");
        }
        for (std::size_t c = 0; c < channels; ++c)
            for (const auto& k : coupling[c])
                if (k.oscillator >= oscillators.size())
                    throw ConfigError("synth: channel " + std::to_string(c) + " references unknown oscillator " +
                                      std::to_string(k.oscillator));
        if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be >= 0");
        if (!std::isfinite(drift)) throw ConfigError("synth: drift must be finite");
    }
};

inline TimeSeriesFrame generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t T = cfg.length, C = cfg.channels, L = cfg.max_lag();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Oscillator k at time t lives at index t + L, so lagged reads stay in range.
    std::vector<std::vector<double>> osc(cfg.oscillators.size(), std::vector<double>(T + L));
    for (std::size_t k = 0; k < cfg.oscillators.size(); ++k) {
        const Oscillator& o = cfg.oscillators[k];
        double wander = 0.0;
        for (std::size_t i = 0; i < T + L; ++i) {
            const double t = static_cast<double>(i) - static_cast<double>(L);
            osc[k][i] = o.amplitude * std::sin(2.0 * std::numbers::pi * o.freq * t + o.phase + wander);
            if (o.wander > 0.0) wander += o.wander * gauss(rng);
        }
    }

    TimeSeriesFrame f;
    f.values = Matrix(T, C);
    f.labels.assign(T, 0);
    f.timestamps.resize(T);
    for (std::size_t c = 0; c < C; ++c) f.channel_names.push_back("s" + std::to_string(c));
    for (std::size_t t = 0; t < T; ++t) {
        f.timestamps[t] = static_cast<std::int64_t>(t);
        const double trend = cfg.drift * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                                  static_cast<double>(T));
        for (std::size_t c = 0; c < C; ++c) {
            double v = trend;
            for (const auto& k : cfg.coupling[c]) v += k.gain * osc[k.oscillator][t + L - k.lag];
            f.values(t, c) = v;
        }
    }
    if (cfg.noise_std > 0.0)
        for (double& v : f.values.data) v += cfg.noise_std * gauss(rng);
    return f;
}

// ---------------------------------------------------------------------------
// Attacks
// ---------------------------------------------------------------------------

enum class AttackKind { replay, delay, stealth_gain_phase };

inline std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::replay: return "replay";
        case AttackKind::delay: return "delay";
        case AttackKind::stealth_gain_phase: return "stealth_gain_phase";
    }
    return "?";
}

inline AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "replay") return AttackKind::replay;
    if (s == "delay") return AttackKind::delay;
    if (s == "stealth_gain_phase") return AttackKind::stealth_gain_phase;
    throw ConfigError("unknown attack kind '" + s + "'");
}

struct AttackSpec {
    AttackKind kind = AttackKind::replay;
    std::size_t target = 0;
    std::size_t t0 = 0, t1 = 0;  // [t0, t1)
    std::size_t source_offset = 0;  // replay: copies rows [t0 - offset, t1 - offset)
    std::size_t delay = 0;          // delay: x'(t) = x(t - delay)
    double phase = 0.0;             // stealth: rotation of the analytic signal, radians
    double gain = 1.0;              // stealth: amplitude factor

    void validate(const TimeSeriesFrame& f) const {
        if (target >= f.channels()) throw DataError("attack: target channel " + std::to_string(target) + " out of range");
        if (t0 > t1 || t1 > f.rows()) {
            throw DataError("attack: interval [" + std::to_string(t0) + ", " + std::to_string(t1) +
                            ") outside [0, " + std::to_string(f.rows()) + ")");
        }
        if (t0 == t1) return;
        if (kind == AttackKind::replay) {
            if (source_offset < t1 - t0)
                throw DataError("attack: replay source overlaps the attacked interval");
            if (source_offset > t0) throw DataError("attack: replay source starts before row 0");
        } else if (kind == AttackKind::delay) {
            if (delay > t0) throw DataError("attack: delay reaches before row 0");
        } else if (!std::isfinite(phase) || !std::isfinite(gain)) {
            throw DataError("attack: stealth parameters must be finite");
        }
    }
};

namespace detail {

// Discrete Hilbert transform of a real segment via the analytic-signal
// construction, using a direct DFT.
inline std::vector<double> hilbert(const std::vector<double>& x) {
    const std::size_t n = x.size();
    using cd = std::complex<double>;
    std::vector<cd> tw(n);
    for (std::size_t k = 0; k < n; ++k)
        tw[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    std::vector<cd> X(n);
    for (std::size_t f = 0; f < n; ++f) {
        cd s = 0.0;
        for (std::size_t t = 0; t < n; ++t) s += x[t] * tw[(f * t) % n];
        X[f] = s;
    }
    // Analytic spectrum: keep DC (and Nyquist), double positive bins, zero negative bins.
    for (std::size_t f = 1; f < n; ++f) {
        if (2 * f < n) X[f] *= 2.0;
        else if (2 * f > n) X[f] = 0.0;
    }
    std::vector<double> h(n);
    for (std::size_t t = 0; t < n; ++t) {
        cd s = 0.0;
        for (std::size_t f = 0; f < n; ++f) s += X[f] * std::conj(tw[(f * t) % n]);
        h[t] = (s / static_cast<double>(n)).imag();
    }
    return h;
}

}  // namespace detail

inline TimeSeriesFrame inject(TimeSeriesFrame f, const AttackSpec& a) {
    a.validate(f);
    if (a.t0 == a.t1) return f;
    const std::size_t c = a.target;
    const Matrix orig = f.values;
    switch (a.kind) {
        case AttackKind::replay:
            for (std::size_t t = a.t0; t < a.t1; ++t) f.values(t, c) = orig(t - a.source_offset, c);
            break;
        case AttackKind::delay:
            for (std::size_t t = a.t0; t < a.t1; ++t) f.values(t, c) = orig(t - a.delay, c);
            break;
        case AttackKind::stealth_gain_phase: {
            std::vector<double> seg(a.t1 - a.t0);
            double mean = 0.0;
            for (std::size_t t = a.t0; t < a.t1; ++t) mean += orig(t, c);
            mean /= static_cast<double>(seg.size());
            for (std::size_t t = a.t0; t < a.t1; ++t) seg[t - a.t0] = orig(t, c) - mean;
            const auto h = detail::hilbert(seg);
            const double cs = std::cos(a.phase), sn = std::sin(a.phase);
            for (std::size_t t = a.t0; t < a.t1; ++t) {
                const std::size_t i = t - a.t0;
                f.values(t, c) = mean + a.gain * (seg[i] * cs - h[i] * sn);
            }
            break;
        }
    }
    for (std::size_t t = a.t0; t < a.t1; ++t) f.labels[t] = 1;
    return f;
}

inline TimeSeriesFrame inject(TimeSeriesFrame f, const std::vector<AttackSpec>& attacks) {
    for (const auto& a : attacks) f = inject(std::move(f), a);
    return f;
}

// Rows [begin, end) of a frame as a new frame (timestamps kept).
inline TimeSeriesFrame slice_rows(const TimeSeriesFrame& f, RowRange r) {
    if (r.end > f.rows() || r.begin > r.end) throw DataError("slice_rows: range outside frame");
    TimeSeriesFrame out;
    out.channel_names = f.channel_names;
    out.values = Matrix(r.size(), f.channels());
    for (std::size_t t = r.begin; t < r.end; ++t) {
        for (std::size_t c = 0; c < f.channels(); ++c) out.values(t - r.begin, c) = f.values(t, c);
        out.labels.push_back(f.labels[t]);
        out.timestamps.push_back(f.timestamps[t]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

struct MonitoredPair {
    std::size_t target = 0, partner = 0;
};

// A generated recording split into a clean prefix and an attacked suffix.
// Attack intervals are in absolute rows of the full recording.
struct Scenario {
    SynthConfig synth;
    std::size_t normal_rows = 0;
    std::vector<AttackSpec> attacks;
    std::vector<MonitoredPair> pairs;  // one per attack, same order
};

struct ScenarioData {
    TimeSeriesFrame normal, attack;
};

inline ScenarioData build(const Scenario& s) {
    if (s.normal_rows == 0 || s.normal_rows >= s.synth.length)
        throw ConfigError("scenario: normal_rows must split the recording");
    for (const auto& a : s.attacks)
        if (a.t0 < s.normal_rows && a.t0 != a.t1) throw ConfigError("scenario: attacks must lie in the attack segment");
    const TimeSeriesFrame full = inject(generate(s.synth), s.attacks);
    return {slice_rows(full, {0, s.normal_rows}), slice_rows(full, {s.normal_rows, s.synth.length})};
}

// Eight channels over three on-grid oscillators (4, 8 and 16 cycles per 128
// samples). Lags are multiples of a half period, so each coupled pair stays
// in phase or in antiphase. Rows [0, 15000) are clean; the last 5000 rows hold
// a replay on s3 (partner s2) and a 7-sample delay on s4 (partner s2). Every
// boundary is a multiple of 60.
inline Scenario canonical_scenario(std::uint64_t seed = 7) {
    Scenario s;
    SynthConfig& c = s.synth;
    c.channels = 8;
    c.length = 20000;
    c.seed = seed;
    c.noise_std = 1e-6;
    c.drift = 0.0;
    c.oscillators = {{4.0 / 128, 1.0, 0.3, 3e-5}, {8.0 / 128, 1.0, 1.1, 3e-5}, {16.0 / 128, 1.0, 2.0, 3e-5}};
    c.coupling = {
        {{0, 0, 1.0}},   // s0
        {{0, 32, 0.8}},  // s1: one full period behind s0
        {{1, 0, 1.0}},   // s2
        {{1, 16, 0.9}},  // s3: one period behind s2
        {{1, 8, 1.2}},   // s4: half a period behind s2
        {{2, 0, 1.0}},   // s5
        {{2, 8, 0.7}},   // s6: one period behind s5
        {{2, 4, 1.1}},   // s7: half a period behind s5
    };
    s.normal_rows = 15000;
    AttackSpec replay;
    replay.kind = AttackKind::replay;
    replay.target = 3;
    replay.t0 = 15600;
    replay.t1 = 16800;
    replay.source_offset = 1212;  // 1212 * 8/128 = 75.75 cycles: a three-quarter-period shift
    AttackSpec delay;
    delay.kind = AttackKind::delay;
    delay.target = 4;
    delay.t0 = 18000;
    delay.t1 = 19200;
    delay.delay = 7;
    s.attacks = {replay, delay};
    s.pairs = {{3, 2}, {4, 2}};
    return s;
}

inline nlohmann::json to_json(const SynthConfig& c) {
    nlohmann::json osc = nlohmann::json::array(), coup = nlohmann::json::array();
    for (const auto& o : c.oscillators)
        osc.push_back({{"freq", o.freq}, {"amplitude", o.amplitude}, {"phase", o.phase}, {"wander", o.wander}});
    for (const auto& ch : c.coupling) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& k : ch) row.push_back({{"oscillator", k.oscillator}, {"lag", k.lag}, {"gain", k.gain}});
        coup.push_back(row);
    }
    return {{"channels", c.channels}, {"length", c.length},     {"oscillators", osc}, {"coupling", coup},
            {"noise_std", c.noise_std}, {"drift", c.drift}, {"seed", c.seed}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.channels = j.at("channels").get<std::size_t>();
    c.length = j.at("length").get<std::size_t>();
    for (const auto& o : j.at("oscillators"))
        c.oscillators.push_back({o.at("freq").get<double>(), o.value("amplitude", 1.0), o.value("phase", 0.0),
                                 o.value("wander", 0.0)});
    for (const auto& row : j.at("coupling")) {
        std::vector<Coupling> ch;
        for (const auto& k : row)
            ch.push_back({k.at("oscillator").get<std::size_t>(), k.value("lag", std::size_t{0}), k.value("gain", 1.0)});
        c.coupling.push_back(ch);
    }
    c.noise_std = j.value("noise_std", 0.0);
    c.drift = j.value("drift", 0.0);
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
}

inline nlohmann::json to_json(const AttackSpec& a) {
    nlohmann::json j{{"kind", to_string(a.kind)}, {"target", a.target}, {"interval", {a.t0, a.t1}}};
    if (a.kind == AttackKind::replay) j["source_offset"] = a.source_offset;
    if (a.kind == AttackKind::delay) j["delay"] = a.delay;
    if (a.kind == AttackKind::stealth_gain_phase) {
        j["phase"] = a.phase;
        j["gain"] = a.gain;
    }
    return j;
}

inline AttackSpec attack_spec_from_json(const nlohmann::json& j) {
    AttackSpec a;
    a.kind = attack_kind_from_string(j.at("kind").get<std::string>());
    a.target = j.at("target").get<std::size_t>();
    a.t0 = j.at("interval").at(0).get<std::size_t>();
    a.t1 = j.at("interval").at(1).get<std::size_t>();
    a.source_offset = j.value("source_offset", std::size_t{0});
    a.delay = j.value("delay", std::size_t{0});
    a.phase = j.value("phase", 0.0);
    a.gain = j.value("gain", 1.0);
    return a;
}

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json attacks = nlohmann::json::array(), pairs = nlohmann::json::array();
    for (const auto& a : s.attacks) attacks.push_back(to_json(a));
    for (const auto& p : s.pairs) pairs.push_back({p.target, p.partner});
    return {{"synth", to_json(s.synth)}, {"normal_rows", s.normal_rows}, {"attacks", attacks}, {"pairs", pairs}};
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario s;
    s.synth = synth_config_from_json(j.at("synth"));
    s.normal_rows = j.at("normal_rows").get<std::size_t>();
    for (const auto& a : j.at("attacks")) s.attacks.push_back(attack_spec_from_json(a));
    for (const auto& p : j.value("pairs", nlohmann::json::array()))
        s.pairs.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
    return s;
}

}  // namespace phasenet
