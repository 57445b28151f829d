#pragma once

// Labeled sensor CSV loading, train-only standardization, sliding windows and
// the normal/attack split layout (train | val | holdout from the normal
// recording, plus the attack recording).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasenet/error.hpp"
#include "phasenet/tensor.hpp"

namespace phasenet {

struct TimeSeriesFrame {
    Matrix values;  // T x C
    std::vector<int> labels;
    std::vector<std::string> channel_names;
    std::vector<std::int64_t> timestamps;

    std::size_t rows() const noexcept { return values.rows; }
    std::size_t channels() const noexcept { return values.cols; }

    void validate() const {
        if (labels.size() != values.rows || timestamps.size() != values.rows) {
            throw DataError("frame: values has " + std::to_string(values.rows) + " rows but " +
                            std::to_string(labels.size()) + " labels and " + std::to_string(timestamps.size()) +
                            " timestamps");
        }
        if (channel_names.size() != values.cols) throw DataError("frame: channel name count mismatch");
        for (std::size_t t = 0; t < labels.size(); ++t) {
            if (labels[t] != 0 && labels[t] != 1)
                throw DataError("frame: label at row " + std::to_string(t) + " is not 0 or 1");
            if (t > 0 && timestamps[t] <= timestamps[t - 1])
                throw DataError("frame: timestamps not strictly increasing at row " + std::to_string(t));
        }
    }
};

struct RowRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
    friend bool operator==(const RowRange&, const RowRange&) = default;
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvOptions {
    std::string label_column = "label";
    std::vector<std::string> drop_columns;
    // Used when present in the header; otherwise timestamps are 0..T-1.
    // Empty disables the lookup.
    std::string timestamp_column = "timestamp";
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

// {normal, attack} case-insensitively, ignoring whitespace (so "A ttack" maps), or {0, 1}.
inline std::optional<int> parse_label(const std::string& s) {
    std::string k;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) k += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (k == "normal" || k == "0" || k == "0.0") return 0;
    if (k == "attack" || k == "1" || k == "1.0") return 1;
    return std::nullopt;
}

}  // namespace detail

inline TimeSeriesFrame read_csv(std::istream& in, const CsvOptions& opt, const std::string& source = "<stream>") {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::trim(line).empty()) {
            header = detail::split_csv_line(line);
            break;
        }
    }
    if (header.empty()) throw DataError(source + ": empty file (no header row)");

    const auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    };
    const auto label_col = find_col(opt.label_column);
    if (!label_col) throw DataError(source + ": missing label column '" + opt.label_column + "'");
    std::optional<std::size_t> ts_col;
    if (!opt.timestamp_column.empty()) ts_col = find_col(opt.timestamp_column);

    TimeSeriesFrame f;
    std::vector<std::size_t> sensor_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i == *label_col || (ts_col && i == *ts_col)) continue;
        if (std::find(opt.drop_columns.begin(), opt.drop_columns.end(), header[i]) != opt.drop_columns.end()) continue;
        sensor_cols.push_back(i);
        f.channel_names.push_back(header[i]);
    }
    if (sensor_cols.empty()) throw DataError(source + ": no sensor columns remain");

    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_csv_line(line);
        const auto ctx = [&](std::size_t col) {
            return source + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) + "), column '" +
                   header[col] + "'";
        };
        if (cells.size() != header.size()) {
            throw DataError(source + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) + ") has " +
                            std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()));
        }
        for (std::size_t c : sensor_cols) {
            const auto v = detail::parse_double(cells[c]);
            if (!v) throw DataError(ctx(c) + ": non-numeric value '" + cells[c] + "'");
            values.push_back(*v);
        }
        const auto lab = detail::parse_label(cells[*label_col]);
        if (!lab) throw DataError(ctx(*label_col) + ": unrecognized label '" + cells[*label_col] + "'");
        f.labels.push_back(*lab);
        if (ts_col) {
            const auto v = detail::parse_double(cells[*ts_col]);
            if (!v || std::floor(*v) != *v) throw DataError(ctx(*ts_col) + ": timestamp is not an integer");
            f.timestamps.push_back(static_cast<std::int64_t>(*v));
        } else {
            f.timestamps.push_back(static_cast<std::int64_t>(row - 1));
        }
    }
    if (row == 0) throw DataError(source + ": empty file (header only)");
    f.values.rows = row;
    f.values.cols = sensor_cols.size();
    f.values.data = std::move(values);
    f.validate();
    return f;
}

inline TimeSeriesFrame load_csv(const std::string& path, const CsvOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open file");
    return read_csv(in, opt, path);
}

// Writes timestamp, sensors..., label with round-trip precision.
inline void write_csv(std::ostream& out, const TimeSeriesFrame& f, const std::string& label_column = "label",
                      const std::string& timestamp_column = "timestamp") {
    out << timestamp_column;
    for (const auto& n : f.channel_names) out << ',' << n;
    out << ',' << label_column << '\n';
    char buf[32];
    for (std::size_t t = 0; t < f.rows(); ++t) {
        out << f.timestamps[t];
        for (std::size_t c = 0; c < f.channels(); ++c) {
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, f.values(t, c));
            out << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf));
        }
        out << ',' << f.labels[t] << '\n';
    }
}

inline void save_csv(const std::string& path, const TimeSeriesFrame& f) {
    std::ofstream out(path);
    if (!out) throw DataError(path + ": cannot open for writing");
    write_csv(out, f);
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

inline constexpr double kStdFloor = 1e-8;

struct Scaler {
    std::vector<double> mean;
    std::vector<double> std;

    double apply(double v, std::size_t c) const { return (v - mean[c]) / std[c]; }
    double invert(double v, std::size_t c) const { return v * std[c] + mean[c]; }

    Matrix apply(const Matrix& m) const {
        check(m.cols);
        Matrix r = m;
        for (std::size_t t = 0; t < m.rows; ++t)
            for (std::size_t c = 0; c < m.cols; ++c) r(t, c) = apply(m(t, c), c);
        return r;
    }

    Matrix invert(const Matrix& m) const {
        check(m.cols);
        Matrix r = m;
        for (std::size_t t = 0; t < m.rows; ++t)
            for (std::size_t c = 0; c < m.cols; ++c) r(t, c) = invert(m(t, c), c);
        return r;
    }

    void check(std::size_t channels) const {
        if (mean.size() != channels || std.size() != channels) {
            throw DataError("scaler fitted on " + std::to_string(mean.size()) + " channels, data has " +
                            std::to_string(channels));
        }
    }

    friend bool operator==(const Scaler&, const Scaler&) = default;
};

// Population mean/std per channel over `rows`; std floored at 1e-8.
inline Scaler fit_scaler(const TimeSeriesFrame& f, RowRange rows) {
    if (rows.size() == 0) throw DataError("fit_scaler: empty row range");
    if (rows.end > f.rows()) throw DataError("fit_scaler: row range exceeds frame length");
    const std::size_t C = f.channels();
    const double n = static_cast<double>(rows.size());
    Scaler s{std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
    for (std::size_t t = rows.begin; t < rows.end; ++t)
        for (std::size_t c = 0; c < C; ++c) s.mean[c] += f.values(t, c);
    for (auto& m : s.mean) m /= n;
    for (std::size_t t = rows.begin; t < rows.end; ++t)
        for (std::size_t c = 0; c < C; ++c) {
            const double d = f.values(t, c) - s.mean[c];
            s.std[c] += d * d;
        }
    for (auto& v : s.std) v = std::max(std::sqrt(v / n), kStdFloor);
    return s;
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

struct SensorWindow {
    Matrix data;  // W x C, scaled
    std::size_t start_index = 0;
    int label = 0;

    std::size_t length() const noexcept { return data.rows; }
    std::size_t channels() const noexcept { return data.cols; }
};

inline std::size_t window_count(std::size_t rows, std::size_t W, std::size_t stride) {
    if (W == 0 || stride == 0 || rows < W) return 0;
    return (rows - W) / stride + 1;
}

// Windows over `range` (absolute start indices); trailing partial windows dropped.
inline std::vector<SensorWindow> slice_windows(const TimeSeriesFrame& f, RowRange range, const Scaler& scaler,
                                               std::size_t W, std::size_t stride) {
    if (W == 0) throw ConfigError("slice_windows: window size must be >= 1");
    if (stride == 0) throw ConfigError("slice_windows: stride must be >= 1");
    if (range.end > f.rows()) throw DataError("slice_windows: range exceeds frame length");
    if (range.size() < W) {
        throw DataError("slice_windows: " + std::to_string(range.size()) + " rows is fewer than window size " +
                        std::to_string(W));
    }
    scaler.check(f.channels());
    const std::size_t C = f.channels();
    const std::size_t n = window_count(range.size(), W, stride);
    std::vector<SensorWindow> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        SensorWindow w;
        w.start_index = range.begin + k * stride;
        w.data = Matrix(W, C);
        for (std::size_t t = 0; t < W; ++t) {
            const std::size_t row = w.start_index + t;
            for (std::size_t c = 0; c < C; ++c) w.data(t, c) = scaler.apply(f.values(row, c), c);
            if (f.labels[row] == 1) w.label = 1;
        }
        out.push_back(std::move(w));
    }
    return out;
}

inline std::vector<SensorWindow> slice_windows(const TimeSeriesFrame& f, const Scaler& scaler, std::size_t W,
                                               std::size_t stride) {
    return slice_windows(f, RowRange{0, f.rows()}, scaler, W, stride);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
    double train_frac = 0.75;
    double val_frac = 0.10;
    double holdout_frac = 0.15;
    std::size_t train_stride = 5;
    std::size_t eval_stride = 0;  // 0 means "equal to the window size"

    std::size_t effective_eval_stride(std::size_t W) const { return eval_stride == 0 ? W : eval_stride; }

    void validate() const {
        if (!(train_frac > 0 && val_frac > 0 && holdout_frac > 0))
            throw ConfigError("split fractions must all be positive");
        if (std::abs(train_frac + val_frac + holdout_frac - 1.0) > 1e-9)
            throw ConfigError("split fractions must sum to 1");
        if (train_stride < 1) throw ConfigError("train_stride must be >= 1");
    }
};

struct SplitLayout {
    RowRange train, val, holdout;
};

// Contiguous chronological layout: train, then val, then holdout.
inline SplitLayout split_rows(std::size_t rows, const SplitSpec& spec) {
    spec.validate();
    const auto part = [rows](double frac) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(rows) * frac + 1e-9));
    };
    const std::size_t train_end = part(spec.train_frac);
    const std::size_t val_end = std::min(rows, train_end + part(spec.val_frac));
    return {RowRange{0, train_end}, RowRange{train_end, val_end}, RowRange{val_end, rows}};
}

struct Splits {
    Scaler scaler;
    SplitLayout layout;
    std::vector<SensorWindow> train, val, holdout, attack;

    // Holdout normal windows followed by attack windows.
    std::vector<SensorWindow> test() const {
        std::vector<SensorWindow> t = holdout;
        t.insert(t.end(), attack.begin(), attack.end());
        return t;
    }
};

inline Splits make_splits(const TimeSeriesFrame& normal, const TimeSeriesFrame& attack, const SplitSpec& spec,
                          std::size_t W) {
    spec.validate();
    if (std::any_of(normal.labels.begin(), normal.labels.end(), [](int l) { return l != 0; }))
        throw DataError("make_splits: normal frame contains attack-labelled rows");
    if (attack.channels() != normal.channels() || attack.channel_names != normal.channel_names) {
        throw DataError("make_splits: attack frame channels (" + std::to_string(attack.channels()) +
                        ") do not match normal frame channels (" + std::to_string(normal.channels()) + ")");
    }
    Splits s;
    s.layout = split_rows(normal.rows(), spec);
    s.scaler = fit_scaler(normal, s.layout.train);
    const std::size_t es = spec.effective_eval_stride(W);
    s.train = slice_windows(normal, s.layout.train, s.scaler, W, spec.train_stride);
    s.val = slice_windows(normal, s.layout.val, s.scaler, W, es);
    s.holdout = slice_windows(normal, s.layout.holdout, s.scaler, W, es);
    s.attack = slice_windows(attack, s.scaler, W, es);
    return s;
}

inline nlohmann::json to_json(const RowRange& r) { return nlohmann::json::array({r.begin, r.end}); }

inline nlohmann::json to_json(const SplitSpec& s) {
    return {{"train_frac", s.train_frac},     {"val_frac", s.val_frac},
            {"holdout_frac", s.holdout_frac}, {"train_stride", s.train_stride},
            {"eval_stride", s.eval_stride}};
}

inline SplitSpec split_spec_from_json(const nlohmann::json& j, SplitSpec s = {}) {
    s.train_frac = j.value("train_frac", s.train_frac);
    s.val_frac = j.value("val_frac", s.val_frac);
    s.holdout_frac = j.value("holdout_frac", s.holdout_frac);
    s.train_stride = j.value("train_stride", s.train_stride);
    s.eval_stride = j.value("eval_stride", s.eval_stride);
    return s;
}

inline nlohmann::json to_json(const Scaler& s) { return {{"mean", s.mean}, {"std", s.std}}; }

inline Scaler scaler_from_json(const nlohmann::json& j) {
    return Scaler{j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
}

// Row ranges and window counts for the run manifest.
inline nlohmann::json split_manifest(const Splits& s, const SplitSpec& spec, std::size_t W) {
    return {{"spec", to_json(spec)},
            {"window", W},
            {"rows",
             {{"train", to_json(s.layout.train)}, {"val", to_json(s.layout.val)}, {"holdout", to_json(s.layout.holdout)}}},
            {"windows",
             {{"train", s.train.size()},
              {"val", s.val.size()},
              {"holdout", s.holdout.size()},
              {"attack", s.attack.size()}}}};
}

}  // namespace phasenet
