// phasenet command-line driver: synth, train, score, eval, pci, report.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phasenet/phasenet.hpp"

namespace fs = std::filesystem;
using namespace phasenet;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3;

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError(dir + ": cannot create directory: " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << text;
    if (!out) throw DataError(path + ": write failed");
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Flags shared by every command that builds a RunConfig. Unset flags leave the
// config file (or preset) value alone.
struct ConfigFlags {
    std::string config_file;
    std::string preset_name;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> window, n_fft, epochs, batch_size, train_stride, eval_stride;
    std::optional<double> lr, weight_decay, alpha, beta, gamma, percentile;
    std::optional<std::string> analysis_window, label_column, timestamp_column;
    std::vector<std::string> drop_columns;

    void add_to(CLI::App* app, bool training) {
        app->add_option("--config", config_file, "JSON run config (flags override its values)")->check(CLI::ExistingFile);
        app->add_option("--preset", preset_name, "Base preset: default, paper-table, paper-text, fixture, tiny");
        app->add_option("--seed", seed, "Master seed for initialization and shuffling");
        app->add_option("--window", window, "Window size W in samples");
        app->add_option("--n-fft", n_fft, "DFT size (even)");
        app->add_option("--analysis-window", analysis_window, "Analysis window: hann or rectangular");
        app->add_option("--label-column", label_column, "Name of the label column in input CSVs");
        app->add_option("--timestamp-column", timestamp_column, "Timestamp column, used when present (default: timestamp; else row index)");
        app->add_option("--drop-column", drop_columns, "Input column to ignore (repeatable)");
        app->add_option("--eval-stride", eval_stride, "Stride for validation/test windows (default W)");
        app->add_option("--percentile", percentile, "Validation-score percentile used as threshold");
        if (!training) return;
        app->add_option("--epochs", epochs, "Training epochs");
        app->add_option("--batch-size", batch_size, "Mini-batch size");
        app->add_option("--lr", lr, "Initial learning rate");
        app->add_option("--weight-decay", weight_decay, "Decoupled weight decay");
        app->add_option("--alpha", alpha, "Magnitude loss weight");
        app->add_option("--beta", beta, "Phase loss weight");
        app->add_option("--gamma", gamma, "Coherence loss weight");
        app->add_option("--train-stride", train_stride, "Stride for training windows");
    }

    RunConfig resolve() const {
        RunConfig r;
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            json j;
            try {
                j = json::parse(in);
            } catch (const json::exception& e) {
                throw ConfigError(config_file + ": " + e.what());
            }
            if (!preset_name.empty()) j["preset"] = preset_name;
            r = run_config_from_json(j);
        } else {
            r = preset(preset_name.empty() ? "default" : preset_name);
        }
        if (seed) r.seed = *seed;
        r.sync();
        if (window) r.model.window = *window;
        if (n_fft) r.spectral.n_fft = *n_fft;
        if (analysis_window) r.spectral.window = analysis_window_from_string(*analysis_window);
        if (label_column) r.csv.label_column = *label_column;
        if (timestamp_column) r.csv.timestamp_column = *timestamp_column;
        if (!drop_columns.empty()) r.csv.drop_columns = drop_columns;
        if (eval_stride) r.split.eval_stride = *eval_stride;
        if (percentile) r.percentile = *percentile;
        if (epochs) r.train.epochs = *epochs;
        if (batch_size) r.train.batch_size = *batch_size;
        if (lr) r.train.lr = *lr;
        if (weight_decay) r.train.weight_decay = *weight_decay;
        if (alpha) r.loss.alpha = *alpha;
        if (beta) r.loss.beta = *beta;
        if (gamma) r.loss.gamma = *gamma;
        if (train_stride) r.split.train_stride = *train_stride;
        r.model.n_fft = r.spectral.n_fft;
        if (r.train.lr_min > r.train.lr) r.train.lr_min = 0.0;
        return r;
    }
};

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string out_dir = ".";
    std::string scenario_file;
    std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
    Scenario s = canonical_scenario();
    if (!a.scenario_file.empty()) {
        std::ifstream in(a.scenario_file);
        try {
            s = scenario_from_json(json::parse(in));
        } catch (const json::exception& e) {
            throw ConfigError(a.scenario_file + ": " + e.what());
        }
    }
    if (a.seed) s.synth.seed = *a.seed;
    const ScenarioData d = build(s);
    ensure_dir(a.out_dir);
    const auto normal = join(a.out_dir, "normal.csv"), attack = join(a.out_dir, "attack.csv");
    save_csv(normal, d.normal);
    save_csv(attack, d.attack);
    write_json(join(a.out_dir, "scenario.json"), to_json(s));
    json m{{"command", "synth"},
           {"argv", argv},
           {"scenario", to_json(s)},
           {"outputs", {{normal, hex32(file_crc32(normal))}, {attack, hex32(file_crc32(attack))}}}};
    if (!a.scenario_file.empty()) m["inputs"] = {{a.scenario_file, hex32(file_crc32(a.scenario_file))}};
    write_json(join(a.out_dir, "synth_manifest.json"), m);
    std::cout << "wrote " << normal << " (" << d.normal.rows() << " rows), " << attack << " (" << d.attack.rows()
              << " rows, " << std::count(d.attack.labels.begin(), d.attack.labels.end(), 1) << " attacked)\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    ConfigFlags cfg;
    std::string normal_csv, attack_csv, out_dir = ".", checkpoint;
    bool quiet = false;
};

int run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
    RunConfig r = a.cfg.resolve();
    r.paths.normal_csv = a.normal_csv;
    r.paths.out_dir = a.out_dir;
    r.paths.checkpoint = a.checkpoint.empty() ? join(a.out_dir, "model.ckpt") : a.checkpoint;
    const TimeSeriesFrame normal = load_csv(a.normal_csv, r.csv);
    r.model.sensors = normal.channels();
    r.validate();
    if (std::any_of(normal.labels.begin(), normal.labels.end(), [](int l) { return l != 0; }))
        throw DataError(a.normal_csv + ": training recording contains attack-labelled rows");

    const SplitLayout layout = split_rows(normal.rows(), r.split);
    const Scaler scaler = fit_scaler(normal, layout.train);
    const std::size_t W = r.model.window;
    const auto train = prepare_all(slice_windows(normal, layout.train, scaler, W, r.split.train_stride), r.spectral);
    const auto val =
        prepare_all(slice_windows(normal, layout.val, scaler, W, r.split.effective_eval_stride(W)), r.spectral);

    ensure_dir(a.out_dir);
    ModelParams params = init_params(r.model);
    TrainOptions opt;
    opt.checkpoint_path = r.paths.checkpoint;
    opt.checkpoint_extra = {{"run", to_json(r)}, {"scaler", to_json(scaler)}, {"layout", {{"train", to_json(layout.train)}, {"val", to_json(layout.val)}, {"holdout", to_json(layout.holdout)}}}};
    if (!a.quiet) {
        opt.on_epoch = [](const EpochRecord& e) {
            std::cout << "epoch " << e.epoch << "  lr " << e.lr << "  train " << e.train.total << " (mag "
                      << e.train.mag << ", phase " << e.train.phase << ", coh " << e.train.coh << ")  val "
                      << e.val.total << std::endl;
        };
    }
    const TrainResult res = train_loop(train, val, params, r.train, r.loss, opt);

    std::ostringstream hist;
    write_history_csv(hist, res.history);
    const auto history_path = join(a.out_dir, "history.csv");
    write_text(history_path, hist.str());
    json m = run_manifest("train", r, {a.normal_csv});
    m["argv"] = argv;
    m["windows"] = {{"train", train.size()}, {"val", val.size()}};
    m["best_epoch"] = res.best_epoch;
    m["best_val"] = res.best_val;
    m["parameters"] = count_params(res.best).total();
    m["outputs"] = {{r.paths.checkpoint, hex32(file_crc32(r.paths.checkpoint))}, {history_path, hex32(file_crc32(history_path))}};
    write_json(join(a.out_dir, "train_manifest.json"), m);
    std::cout << "best epoch " << res.best_epoch << " (val " << res.best_val << "), checkpoint " << r.paths.checkpoint
              << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
    std::string checkpoint, normal_csv, attack_csv, out_dir = ".";
};

struct ScoreRow {
    std::size_t start = 0;
    double score = 0.0;
    int label = 0, prediction = 0;
    std::string split;
};

int run_score(const ScoreArgs& a, const std::vector<std::string>& argv) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    if (!ck.extra.contains("run") || !ck.extra.contains("scaler"))
        throw DataError(a.checkpoint + ": checkpoint lacks the run config or scaler");
    RunConfig r = run_config_from_json(ck.extra["run"]);
    r.model = ck.params.config;
    const Scaler scaler = scaler_from_json(ck.extra["scaler"]);
    const TimeSeriesFrame normal = load_csv(a.normal_csv, r.csv);
    const TimeSeriesFrame attack = load_csv(a.attack_csv, r.csv);
    if (normal.channels() != r.model.sensors || attack.channels() != r.model.sensors) {
        throw ShapeError("score: model expects " + std::to_string(r.model.sensors) + " sensors, inputs have " +
                         std::to_string(normal.channels()) + " and " + std::to_string(attack.channels()));
    }
    const SplitLayout layout = split_rows(normal.rows(), r.split);
    const std::size_t W = r.model.window, es = r.split.effective_eval_stride(W);
    const std::vector<std::pair<std::string, std::vector<SensorWindow>>> parts{
        {"val", slice_windows(normal, layout.val, scaler, W, es)},
        {"holdout", slice_windows(normal, layout.holdout, scaler, W, es)},
        {"attack", slice_windows(attack, scaler, W, es)}};

    std::vector<ScoreRow> rows;
    std::vector<double> val_scores;
    for (const auto& [name, ws] : parts) {
        const auto scores = score_windows(prepare_all(ws, r.spectral), ck.params, r.loss);
        for (std::size_t i = 0; i < ws.size(); ++i) {
            rows.push_back({ws[i].start_index, scores[i], ws[i].label, 0, name});
            if (name == "val") val_scores.push_back(scores[i]);
        }
    }
    const double tau = percentile_threshold(val_scores, r.percentile);
    for (auto& row : rows) row.prediction = row.score > tau ? 1 : 0;

    ensure_dir(a.out_dir);
    const auto out = join(a.out_dir, "scores.csv");
    std::ostringstream csv;
    csv.precision(17);
    csv << "start_index,score,label,prediction,split\n";
    for (const auto& row : rows)
        csv << row.start << ',' << row.score << ',' << row.label << ',' << row.prediction << ',' << row.split << '\n';
    write_text(out, csv.str());
    json m = run_manifest("score", r, {a.checkpoint, a.normal_csv, a.attack_csv});
    m["argv"] = argv;
    m["threshold"] = tau;
    m["outputs"] = {{out, hex32(file_crc32(out))}};
    write_json(join(a.out_dir, "score_manifest.json"), m);
    std::cout << "scored " << rows.size() << " windows, threshold " << tau << ", wrote " << out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

std::vector<ScoreRow> read_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    if (line != "start_index,score,label,prediction,split")
        throw DataError(path + ": unexpected header '" + line + "'");
    std::vector<ScoreRow> rows;
    for (std::size_t n = 2; std::getline(in, line); ++n) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string f[5];
        for (auto& s : f) std::getline(ls, s, ',');
        try {
            ScoreRow r{std::stoul(f[0]), std::stod(f[1]), std::stoi(f[2]), std::stoi(f[3]), f[4]};
            if (!std::isfinite(r.score) || (r.label != 0 && r.label != 1)) throw std::invalid_argument("range");
            rows.push_back(r);
        } catch (const std::exception&) {
            throw DataError(path + ": malformed row at line " + std::to_string(n));
        }
    }
    return rows;
}

struct EvalArgs {
    std::string scores_csv, out_dir = ".";
    double percentile = 99.0;
    std::optional<double> threshold;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
    const auto rows = read_scores(a.scores_csv);
    std::vector<double> val, scores;
    std::vector<int> labels;
    for (const auto& r : rows) {
        if (r.split == "val") {
            val.push_back(r.score);
        } else {
            scores.push_back(r.score);
            labels.push_back(r.label);
        }
    }
    if (scores.empty()) throw DataError(a.scores_csv + ": no test windows (split other than 'val')");
    const double tau = a.threshold ? *a.threshold : percentile_threshold(val, a.percentile);
    const EvalReport rep = evaluate(classify(scores, tau), labels, scores, tau);
    ensure_dir(a.out_dir);
    const auto out = join(a.out_dir, "eval.json");
    write_json(out, to_json(rep));
    write_json(join(a.out_dir, "eval_manifest.json"),
               {{"command", "eval"},
                {"argv", argv},
                {"percentile", a.percentile},
                {"threshold_override", a.threshold ? json(*a.threshold) : json(nullptr)},
                {"inputs", {{a.scores_csv, hex32(file_crc32(a.scores_csv))}}},
                {"outputs", {{out, hex32(file_crc32(out))}}}});
    std::cout << format_table(rep);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct PciArgs {
    ConfigFlags cfg;
    std::string input_csv, checkpoint, out_dir = ".";
    std::vector<std::size_t> starts;
    bool spectra = false;
};

int run_pci(const PciArgs& a, const std::vector<std::string>& argv) {
    RunConfig r = a.cfg.resolve();
    const TimeSeriesFrame f = load_csv(a.input_csv, r.csv);
    Scaler scaler;
    if (!a.checkpoint.empty()) {
        const Checkpoint ck = load_checkpoint(a.checkpoint);
        if (!ck.extra.contains("scaler")) throw DataError(a.checkpoint + ": checkpoint lacks the scaler");
        scaler = scaler_from_json(ck.extra["scaler"]);
    } else {
        scaler = fit_scaler(f, RowRange{0, f.rows()});
    }
    r.model.sensors = f.channels();
    r.validate();
    const std::size_t W = r.model.window, C = f.channels();
    std::vector<SensorWindow> ws;
    if (a.starts.empty()) {
        ws = slice_windows(f, scaler, W, r.split.effective_eval_stride(W));
    } else {
        for (std::size_t s : a.starts) {
            if (s + W > f.rows()) {
                throw DataError("pci: window at " + std::to_string(s) + " runs past the end (" +
                                std::to_string(f.rows()) + " rows)");
            }
            auto one = slice_windows(f, RowRange{s, s + W}, scaler, W, W);
            ws.push_back(std::move(one.front()));
        }
    }

    ensure_dir(a.out_dir);
    std::ostringstream mat, summary, spec;
    mat.precision(17);
    summary.precision(17);
    spec.precision(17);
    mat << "window_start,sensor";
    for (const auto& n : f.channel_names) mat << ',' << n;
    mat << '\n';
    spec << "window_start,sensor,bin,magnitude,phase\n";
    std::vector<double> lo(C * C, 2.0), hi(C * C, -1.0), sum(C * C, 0.0);
    for (const auto& w : ws) {
        const PreparedWindow p = prepare(w, r.spectral);
        for (std::size_t i = 0; i < C; ++i) {
            mat << w.start_index << ',' << f.channel_names[i];
            for (std::size_t j = 0; j < C; ++j) {
                const double v = p.pci.values(i, j);
                mat << ',' << v;
                lo[i * C + j] = std::min(lo[i * C + j], v);
                hi[i * C + j] = std::max(hi[i * C + j], v);
                sum[i * C + j] += v;
            }
            mat << '\n';
            if (a.spectra)
                for (std::size_t b = 0; b < p.spectra.magnitude.cols; ++b)
                    spec << w.start_index << ',' << f.channel_names[i] << ',' << b << ','
                         << p.spectra.magnitude(i, b) << ',' << p.spectra.phase(i, b) << '\n';
        }
    }
    summary << "sensor_i,sensor_j,min,mean,max\n";
    for (std::size_t i = 0; i < C; ++i)
        for (std::size_t j = i + 1; j < C; ++j)
            summary << f.channel_names[i] << ',' << f.channel_names[j] << ',' << lo[i * C + j] << ','
                    << sum[i * C + j] / static_cast<double>(ws.size()) << ',' << hi[i * C + j] << '\n';

    const auto mat_path = join(a.out_dir, "pci.csv"), sum_path = join(a.out_dir, "pci_summary.csv");
    write_text(mat_path, mat.str());
    write_text(sum_path, summary.str());
    json outputs{{mat_path, hex32(file_crc32(mat_path))}, {sum_path, hex32(file_crc32(sum_path))}};
    if (a.spectra) {
        const auto spec_path = join(a.out_dir, "spectra.csv");
        write_text(spec_path, spec.str());
        outputs[spec_path] = hex32(file_crc32(spec_path));
    }
    json m = run_manifest("pci", r, {a.input_csv, a.checkpoint});
    m["argv"] = argv;
    m["scaler"] = to_json(scaler);
    m["window_starts"] = json::array();
    for (const auto& w : ws) m["window_starts"].push_back(w.start_index);
    m["outputs"] = outputs;
    write_json(join(a.out_dir, "pci_manifest.json"), m);
    std::cout << "wrote PCI for " << ws.size() << " windows to " << mat_path << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string history_csv, scores_csv, out_dir = ".";
    double percentile = 99.0;
    std::size_t bins = 40;
};

std::map<std::string, std::vector<double>> read_history(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    std::vector<std::string> cols;
    {
        std::istringstream hs(line);
        for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
    }
    std::map<std::string, std::vector<double>> out;
    for (std::size_t n = 2; std::getline(in, line); ++n) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t k = 0;
        for (std::string v; std::getline(ls, v, ','); ++k) {
            if (k >= cols.size()) throw DataError(path + ": too many fields at line " + std::to_string(n));
            try {
                out[cols[k]].push_back(std::stod(v));
            } catch (const std::exception&) {
                throw DataError(path + ": malformed number at line " + std::to_string(n));
            }
        }
    }
    return out;
}

int run_report(const ReportArgs& a, const std::vector<std::string>& argv) {
    if (a.history_csv.empty() && a.scores_csv.empty()) throw ConfigError("report: give --history and/or --scores");
    ensure_dir(a.out_dir);
    json outputs = json::object(), inputs = json::object();
    if (!a.history_csv.empty()) {
        auto h = read_history(a.history_csv);
        for (const char* k : {"epoch", "train_total", "val_total", "train_mag", "train_phase", "train_coh"})
            if (!h.count(k)) throw DataError(a.history_csv + ": missing column '" + std::string(k) + "'");
        const auto& ep = h["epoch"];
        const auto loss_path = join(a.out_dir, "loss_curves.svg");
        write_text(loss_path, svg::line_plot({{"train total", ep, h["train_total"], ""}, {"val total", ep, h["val_total"], ""}},
                                             "Training and validation loss", "epoch", "loss"));
        const auto comp_path = join(a.out_dir, "loss_components.svg");
        write_text(comp_path, svg::line_plot({{"magnitude", ep, h["train_mag"], ""},
                                              {"phase", ep, h["train_phase"], ""},
                                              {"coherence", ep, h["train_coh"], ""}},
                                             "Training loss components", "epoch", "loss", true));
        outputs[loss_path] = hex32(file_crc32(loss_path));
        outputs[comp_path] = hex32(file_crc32(comp_path));
        inputs[a.history_csv] = hex32(file_crc32(a.history_csv));
    }
    if (!a.scores_csv.empty()) {
        const auto rows = read_scores(a.scores_csv);
        std::vector<double> val, normal, attacked;
        for (const auto& r : rows) {
            if (r.split == "val") val.push_back(r.score);
            else (r.label ? attacked : normal).push_back(r.score);
        }
        std::optional<double> tau;
        if (!val.empty()) tau = percentile_threshold(val, a.percentile);
        const auto path = join(a.out_dir, "score_histogram.svg");
        write_text(path, svg::histogram({{"normal", normal, ""}, {"attack", attacked, ""}}, a.bins,
                                        "Window anomaly scores", "score", tau));
        outputs[path] = hex32(file_crc32(path));
        inputs[a.scores_csv] = hex32(file_crc32(a.scores_csv));
    }
    write_json(join(a.out_dir, "report_manifest.json"),
               {{"command", "report"}, {"argv", argv}, {"inputs", inputs}, {"outputs", outputs}});
    for (const auto& [p, _] : outputs.items()) std::cout << "wrote " << p << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"Phase-aware frequency-domain anomaly detection for multivariate sensor streams", "phasenet"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "phasenet 1.0.0");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate the synthetic coupled-oscillator scenario (normal.csv, attack.csv)");
    s->add_option("--out-dir", synth.out_dir, "Output directory")->capture_default_str();
    s->add_option("--scenario", synth.scenario_file, "Scenario JSON (default: built-in canonical scenario)")
        ->check(CLI::ExistingFile);
    s->add_option("--seed", synth.seed, "Override the scenario seed");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train a model on the normal recording; writes checkpoint and history.csv");
    t->add_option("--normal", train.normal_csv, "Normal-operation CSV")->required()->check(CLI::ExistingFile);
    t->add_option("--out-dir", train.out_dir, "Output directory")->capture_default_str();
    t->add_option("--checkpoint", train.checkpoint, "Checkpoint path (default: <out-dir>/model.ckpt)");
    t->add_flag("--quiet", train.quiet, "Do not print per-epoch losses");
    train.cfg.add_to(t, true);

    ScoreArgs score;
    auto* sc = app.add_subcommand("score", "Score validation, holdout and attack windows; writes scores.csv");
    sc->add_option("--checkpoint", score.checkpoint, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
    sc->add_option("--normal", score.normal_csv, "Normal-operation CSV used for training")->required()->check(CLI::ExistingFile);
    sc->add_option("--attack", score.attack_csv, "Attack-phase CSV")->required()->check(CLI::ExistingFile);
    sc->add_option("--out-dir", score.out_dir, "Output directory")->capture_default_str();

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Threshold scores at a validation percentile and report window-level metrics");
    e->add_option("--scores", eval.scores_csv, "scores.csv written by score")->required()->check(CLI::ExistingFile);
    e->add_option("--out-dir", eval.out_dir, "Output directory for eval.json")->capture_default_str();
    e->add_option("--percentile", eval.percentile, "Validation-score percentile used as threshold")->capture_default_str();
    e->add_option("--threshold", eval.threshold, "Fixed threshold (overrides --percentile)");

    PciArgs pci_args;
    auto* p = app.add_subcommand("pci", "Write PCI matrices (and optionally spectra) for selected windows");
    p->add_option("--input", pci_args.input_csv, "Sensor CSV")->required()->check(CLI::ExistingFile);
    p->add_option("--start", pci_args.starts, "Window start row (repeatable; default: all non-overlapping windows)");
    p->add_option("--checkpoint", pci_args.checkpoint, "Use this checkpoint's scaler (default: fit on the input)")
        ->check(CLI::ExistingFile);
    p->add_option("--out-dir", pci_args.out_dir, "Output directory")->capture_default_str();
    p->add_flag("--spectra", pci_args.spectra, "Also write spectra.csv (magnitude and phase per bin)");
    pci_args.cfg.add_to(p, false);

    ReportArgs report;
    auto* r = app.add_subcommand("report", "Render loss curves and score histograms as SVG");
    r->add_option("--history", report.history_csv, "history.csv written by train")->check(CLI::ExistingFile);
    r->add_option("--scores", report.scores_csv, "scores.csv written by score")->check(CLI::ExistingFile);
    r->add_option("--out-dir", report.out_dir, "Output directory")->capture_default_str();
    r->add_option("--percentile", report.percentile, "Percentile for the threshold marker")->capture_default_str();
    r->add_option("--bins", report.bins, "Histogram bins")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForVersion& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        std::cerr << "error: " << err.what() << "\n\n";
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        std::cerr << sub->help();
        return kExitUsage;
    }

    try {
        if (*s) return run_synth(synth, args);
        if (*t) return run_train(train, args);
        if (*sc) return run_score(score, args);
        if (*e) return run_eval(eval, args);
        if (*p) return run_pci(pci_args, args);
        if (*r) return run_report(report, args);
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& err) {
        std::cerr << "numeric failure: " << err.what() << "\n";
        return kExitNumeric;
    } catch (const Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitData;
    } catch (const nlohmann::json::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
