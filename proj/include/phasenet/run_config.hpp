#pragma once

// Everything a run needs, as one JSON document. Presets are starting points;
// a config file overrides a preset and command-line flags override the file.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasenet/checkpoint.hpp"
#include "phasenet/ingest.hpp"
#include "phasenet/model.hpp"
#include "phasenet/spectral.hpp"
#include "phasenet/train.hpp"

namespace phasenet {

struct RunPaths {
    std::string normal_csv;
    std::string attack_csv;
    std::string checkpoint;
    std::string out_dir = ".";
};

struct RunConfig {
    std::string preset = "default";
    SpectralConfig spectral;
    ModelConfig model;
    TrainConfig train;
    LossWeights loss;
    SplitSpec split;
    CsvOptions csv;
    RunPaths paths;
    double percentile = 99.0;
    std::uint64_t seed = 0;

    // The master seed feeds initialization and shuffling; the window size
    // and FFT size are shared between the spectral and model sections.
    void sync() {
        model.seed = seed;
        train.seed = seed;
        model.n_fft = spectral.n_fft;
    }

    void validate() const {
        spectral.validate();
        model.validate();
        train.validate();
        loss.validate();
        split.validate();
        if (model.n_fft != spectral.n_fft) throw ConfigError("config: model.n_fft differs from spectral.n_fft");
        if (model.window > spectral.n_fft) {
            throw ConfigError("config: window " + std::to_string(model.window) + " exceeds n_fft " +
                              std::to_string(spectral.n_fft));
        }
        if (!(percentile > 0.0 && percentile <= 100.0)) throw ConfigError("config: percentile must be in (0, 100]");
    }
};

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"default", "paper-table", "paper-text", "fixture", "tiny"};
    return names;
}

inline RunConfig preset(const std::string& name) {
    RunConfig r;
    r.preset = name;
    if (name == "default") {
        // Full widths, W = 60, loss weights (1, 1.5, 1.2).
    } else if (name == "paper-table") {
        r.loss = LossWeights::paper_table();
    } else if (name == "paper-text") {
        r.model.window = 100;
        r.loss = LossWeights::paper_text();
    } else if (name == "fixture") {
        // Desk-scale model for the 8-channel synthetic scenario.
        r.model.sensors = 8;
        r.model.embed_dim = 32;
        r.model.d_model = 64;
        r.model.heads = 4;
        r.model.transformer_layers = 2;
        r.model.gat_heads = 4;
        r.model.ffn_dim = 128;
        r.model.cnn_channels1 = 8;
        r.model.cnn_channels2 = 16;
        r.model.decoder_hidden = 64;
        r.train.epochs = 15;
        r.train.lr = 2e-3;
        r.train.lr_min = 1e-4;
    } else if (name == "tiny") {
        r.model.sensors = 8;
        r.model.embed_dim = 8;
        r.model.d_model = 16;
        r.model.heads = 2;
        r.model.transformer_layers = 1;
        r.model.gat_layers = 1;
        r.model.gat_heads = 2;
        r.model.ffn_dim = 32;
        r.model.cnn_channels1 = 4;
        r.model.cnn_channels2 = 4;
        r.model.decoder_hidden = 16;
        r.train.epochs = 2;
        r.train.lr = 1e-3;
        r.split.train_stride = 60;
    } else {
        std::string known;
        for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
    }
    r.sync();
    return r;
}

inline nlohmann::json to_json(const RunConfig& r) {
    return {{"preset", r.preset},
            {"seed", r.seed},
            {"percentile", r.percentile},
            {"spectral", {{"n_fft", r.spectral.n_fft}, {"window", to_string(r.spectral.window)}}},
            {"model", to_json(r.model)},
            {"train", to_json(r.train)},
            {"loss", to_json(r.loss)},
            {"split", to_json(r.split)},
            {"csv", {{"label_column", r.csv.label_column},
                     {"timestamp_column", r.csv.timestamp_column},
                     {"drop_columns", r.csv.drop_columns}}},
            {"paths", {{"normal_csv", r.paths.normal_csv},
                       {"attack_csv", r.paths.attack_csv},
                       {"checkpoint", r.paths.checkpoint},
                       {"out_dir", r.paths.out_dir}}}};
}

// Fields absent from `j` keep their values from the named (or given) preset.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig r = preset(j.value("preset", std::string("default")));
    r.seed = j.value("seed", r.seed);
    r.percentile = j.value("percentile", r.percentile);
    if (j.contains("spectral")) {
        const auto& s = j["spectral"];
        r.spectral.n_fft = s.value("n_fft", r.spectral.n_fft);
        if (s.contains("window")) r.spectral.window = analysis_window_from_string(s["window"].get<std::string>());
    }
    if (j.contains("model")) r.model = model_config_from_json(j["model"], r.model);
    if (j.contains("train")) r.train = train_config_from_json(j["train"], r.train);
    if (j.contains("loss")) r.loss = loss_weights_from_json(j["loss"], r.loss);
    if (j.contains("split")) r.split = split_spec_from_json(j["split"], r.split);
    if (j.contains("csv")) {
        const auto& c = j["csv"];
        r.csv.label_column = c.value("label_column", r.csv.label_column);
        r.csv.timestamp_column = c.value("timestamp_column", r.csv.timestamp_column);
        r.csv.drop_columns = c.value("drop_columns", r.csv.drop_columns);
    }
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        r.paths.normal_csv = p.value("normal_csv", r.paths.normal_csv);
        r.paths.attack_csv = p.value("attack_csv", r.paths.attack_csv);
        r.paths.checkpoint = p.value("checkpoint", r.paths.checkpoint);
        r.paths.out_dir = p.value("out_dir", r.paths.out_dir);
    }
    r.sync();
    // An explicit model.seed or train.seed in the file wins over the master seed.
    if (j.contains("model") && j["model"].contains("seed")) r.model.seed = j["model"]["seed"].get<std::uint64_t>();
    if (j.contains("train") && j["train"].contains("seed")) r.train.seed = j["train"]["seed"].get<std::uint64_t>();
    return r;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config");
    try {
        return run_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline std::string hex32(std::uint32_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(8, '0');
    for (int i = 7; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

// Effective config plus CRC-32 of every input file, enough to repeat a run.
inline nlohmann::json run_manifest(const std::string& command, const RunConfig& r,
                                   const std::vector<std::string>& inputs) {
    nlohmann::json crc = nlohmann::json::object();
    for (const auto& p : inputs)
        if (!p.empty()) crc[p] = hex32(file_crc32(p));
    return {{"command", command}, {"config", to_json(r)}, {"inputs", crc}};
}

}  // namespace phasenet
