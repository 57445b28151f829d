#pragma once

// Window scoring, percentile thresholding and window-level metrics. No point
// adjustment: each prediction depends only on its own score and the threshold.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasenet/train.hpp"

namespace phasenet {

inline std::vector<double> score_windows(const std::vector<PreparedWindow>& ws, ModelParams& params,
                                         const LossWeights& lw) {
    std::vector<double> scores;
    scores.reserve(ws.size());
    for (const auto& w : ws) {
        const double s = composite_loss(w, params, lw).total;
        if (!std::isfinite(s)) throw NumericError("score: non-finite score for window at " + std::to_string(w.start_index));
        scores.push_back(s);
    }
    return scores;
}

// Linear-interpolation percentile: position p/100 * (n - 1) in the sorted scores.
inline double percentile_threshold(std::vector<double> scores, double p = 99.0) {
    if (scores.empty()) throw DataError("percentile_threshold: no validation scores");
    if (!(p > 0.0 && p <= 100.0)) throw ConfigError("percentile_threshold: p must be in (0, 100]");
    std::sort(scores.begin(), scores.end());
    const double pos = p / 100.0 * static_cast<double>(scores.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, scores.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return scores[lo] + frac * (scores[hi] - scores[lo]);
}

// Attack iff score > threshold (strict).
inline std::vector<int> classify(const std::vector<double>& scores, double threshold) {
    std::vector<int> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > threshold ? 1 : 0;
    return out;
}

struct ClassMetrics {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct EvalReport {
    ClassMetrics normal, attack;
    double accuracy = 0.0;
    std::optional<double> roc_auc;            // undefined when one class is absent
    std::optional<double> average_precision;  // undefined when one class is absent
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double threshold = 0.0;

    std::size_t count() const noexcept { return tp + fp + tn + fn; }
};

namespace detail {

inline double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline ClassMetrics class_metrics(std::size_t hit, std::size_t false_pos, std::size_t false_neg) {
    ClassMetrics m;
    m.precision = ratio(hit, hit + false_pos);
    m.recall = ratio(hit, hit + false_neg);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

}  // namespace detail

// Mann-Whitney rank statistic with midranks for ties.
inline std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] == 1) {
                rank_sum += midrank;
                ++pos;
            }
        i = j;
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    const double u = rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

// Step-wise area under the precision-recall curve, sweeping thresholds from
// the highest score down; tied scores enter together.
inline std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    const std::size_t n = scores.size();
    const auto total_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (total_pos == 0 || total_pos == n) return std::nullopt;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0, prev_recall = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) {
            tp += labels[idx[j]] == 1 ? 1 : 0;
            ++j;
        }
        seen = j;
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

inline EvalReport evaluate(const std::vector<int>& predictions, const std::vector<int>& labels,
                           const std::vector<double>& scores, double threshold = 0.0) {
    if (predictions.size() != labels.size() || scores.size() != labels.size())
        throw DataError("evaluate: predictions, labels and scores must have equal length");
    EvalReport r;
    r.threshold = threshold;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] == 1, l = labels[i] == 1;
        if (p && l) ++r.tp;
        else if (p) ++r.fp;
        else if (l) ++r.fn;
        else ++r.tn;
    }
    r.attack = detail::class_metrics(r.tp, r.fp, r.fn);
    r.normal = detail::class_metrics(r.tn, r.fn, r.fp);
    r.accuracy = detail::ratio(r.tp + r.tn, r.count());
    r.roc_auc = roc_auc(scores, labels);
    r.average_precision = average_precision(scores, labels);
    return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
    const auto cls = [](const ClassMetrics& m) {
        return nlohmann::json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    };
    const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"normal", cls(r.normal)},
            {"attack", cls(r.attack)},
            {"accuracy", r.accuracy},
            {"roc_auc", opt(r.roc_auc)},
            {"average_precision", opt(r.average_precision)},
            {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}},
            {"threshold", r.threshold},
            {"windows", r.count()}};
}

inline std::string format_table(const EvalReport& r) {
    std::ostringstream os;
    const auto pct = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << 100.0 * v;
        return s.str();
    };
    const auto opt = [&](const std::optional<double>& v) { return v ? pct(*v) : std::string("undefined"); };
    os << std::left << std::setw(16) << "" << std::right << std::setw(10) << "Prec" << std::setw(10) << "Rec"
       << std::setw(10) << "F1" << '\n';
    os << std::left << std::setw(16) << "Normal class" << std::right << std::setw(10) << pct(r.normal.precision)
       << std::setw(10) << pct(r.normal.recall) << std::setw(10) << pct(r.normal.f1) << '\n';
    os << std::left << std::setw(16) << "Attack class" << std::right << std::setw(10) << pct(r.attack.precision)
       << std::setw(10) << pct(r.attack.recall) << std::setw(10) << pct(r.attack.f1) << '\n';
    os << "Accuracy          " << pct(r.accuracy) << '\n';
    os << "ROC-AUC           " << opt(r.roc_auc) << '\n';
    os << "Average precision " << opt(r.average_precision) << '\n';
    os << "Threshold         " << std::setprecision(6) << r.threshold << '\n';
    os << "Confusion         tp=" << r.tp << " fp=" << r.fp << " tn=" << r.tn << " fn=" << r.fn << '\n';
    return os.str();
}

}  // namespace phasenet
