#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oslab/ops.hpp"

namespace oslab {

/// Label of evaluation samples drawn from classes unseen in training.
inline constexpr int kUnknownLabel = -1;

struct ScoreRecord {
    double score = 0.0;  ///< acceptance score, max softmax probability
    int predicted = 0;   ///< argmax class
    int true_label = kUnknownLabel;
    bool is_known = false;
};

struct BatchScores {
    std::vector<double> score;
    std::vector<int> predicted;
};

/// score = max_k softmax(logits)_k, prediction = argmax_k logits (first index on ties).
template <typename T>
BatchScores score_batch(const Tensor<T>& logits) {
    if (logits.rank() != 2 || logits.shape()[1] == 0) detail::shape_invalid("score_batch", logits.shape(), "need [B,K]");
    detail::check_finite("score_batch", logits);
    const std::size_t b = logits.shape()[0], k = logits.shape()[1];
    BatchScores out;
    out.score.reserve(b);
    out.predicted.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        const T* row = logits.data().data() + i * k;
        const auto best = static_cast<std::size_t>(std::max_element(row, row + k) - row);
        double denom = 0.0;
        for (std::size_t c = 0; c < k; ++c) denom += std::exp(static_cast<double>(row[c]) - static_cast<double>(row[best]));
        out.score.push_back(1.0 / denom);
        out.predicted.push_back(static_cast<int>(best));
    }
    return out;
}

/// Thresholded open-set decision: the predicted class when score >= delta,
/// otherwise `num_classes` (the extra "unknown" outcome after classes 0..K-1).
inline int predict_open_set(const ScoreRecord& record, double delta, std::size_t num_classes) {
    return record.score >= delta ? record.predicted : static_cast<int>(num_classes);
}

struct CurvePoint {
    double fpr = 0.0;
    double ccr = 0.0;
    bool operator==(const CurvePoint&) const = default;
};

struct OSCCurve {
    std::vector<CurvePoint> points;  ///< ordered by non-decreasing FPR
    double auosc = 0.0;
    double auroc = 0.0;
    double accuracy = 0.0;  ///< closed-set accuracy on the known samples
    std::map<double, double> ccr_at_fpr;
};

namespace detail {

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double area = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) area += (x[i] - x[i - 1]) * (y[i] + y[i - 1]) * 0.5;
    return area;
}

} // namespace detail

/// Sweeps the acceptance threshold over every distinct score (plus +inf and -inf).
///
/// At threshold d: FPR = share of unknowns with score >= d, CCR = share of knowns
/// with score >= d and a correct prediction, TPR = share of knowns with score >= d.
/// Tied scores enter at one threshold. AUOSC and AUROC are trapezoidal areas of
/// CCR and TPR over FPR. CCR@f is the CCR of the most permissive threshold whose
/// FPR does not exceed f (no interpolation).
inline OSCCurve osc_curve(const std::vector<ScoreRecord>& records, const std::vector<double>& fpr_targets = {0.1}) {
    std::size_t n_known = 0, n_unknown = 0, n_correct = 0;
    for (const auto& r : records) {
        if (std::isnan(r.score)) throw DomainError("osc_curve: NaN score");
        if (r.is_known) {
            ++n_known;
            n_correct += r.predicted == r.true_label ? 1 : 0;
        } else {
            ++n_unknown;
        }
    }
    if (n_known == 0) throw DomainError("osc_curve: no known-class records");
    if (n_unknown == 0) throw DomainError("osc_curve: no unknown-class records");

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].score > records[b].score; });

    const double nk = static_cast<double>(n_known), nu = static_cast<double>(n_unknown);
    std::vector<double> fpr{0.0}, ccr{0.0}, tpr{0.0};
    std::size_t acc_known = 0, acc_correct = 0, acc_unknown = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = records[order[i]].score;
        for (; i < order.size() && records[order[i]].score == s; ++i) {
            const auto& r = records[order[i]];
            if (r.is_known) {
                ++acc_known;
                acc_correct += r.predicted == r.true_label ? 1 : 0;
            } else {
                ++acc_unknown;
            }
        }
        fpr.push_back(static_cast<double>(acc_unknown) / nu);
        ccr.push_back(static_cast<double>(acc_correct) / nk);
        tpr.push_back(static_cast<double>(acc_known) / nk);
    }
    OSCCurve curve;
    curve.accuracy = static_cast<double>(n_correct) / nk;
    fpr.push_back(1.0);
    ccr.push_back(curve.accuracy);
    tpr.push_back(1.0);

    curve.points.reserve(fpr.size());
    for (std::size_t i = 0; i < fpr.size(); ++i) curve.points.push_back({fpr[i], ccr[i]});
    curve.auosc = detail::trapezoid(fpr, ccr);
    curve.auroc = detail::trapezoid(fpr, tpr);
    for (double f : fpr_targets) {
        double best = 0.0;
        for (const auto& p : curve.points)
            if (p.fpr <= f) best = std::max(best, p.ccr);
        curve.ccr_at_fpr[f] = best;
    }
    return curve;
}

// ---------------------------------------------------------------------------
// text formats

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError(where + ": bad number '" + s + "'");
    return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    return os;
}

inline std::string sidecar_path(const std::string& csv_path) {
    const auto dot = csv_path.rfind('.');
    const auto slash = csv_path.find_last_of('/');
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    return (has_ext ? csv_path.substr(0, dot) : csv_path);
}

} // namespace detail

inline nlohmann::json curve_scalars(const OSCCurve& curve) {
    nlohmann::json j = {{"auosc", curve.auosc}, {"auroc", curve.auroc}, {"accuracy", curve.accuracy}};
    for (const auto& [f, c] : curve.ccr_at_fpr) j["ccr_at_fpr_" + detail::format_double(f)] = c;
    return j;
}

/// Renders CCR over FPR as a standalone SVG line plot.
inline std::string curve_svg(const OSCCurve& curve) {
    const double size = 400.0, pad = 40.0;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * pad << "\" height=\"" << size + 2 * pad
       << "\">\n";
    os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << size << "\" height=\"" << size
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& p : curve.points) os << pad + p.fpr * size << ',' << pad + (1.0 - p.ccr) * size << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << pad + size / 2 << "\" y=\"" << 2 * pad + size - 10 << "\" text-anchor=\"middle\">FPR</text>\n";
    os << "<text x=\"12\" y=\"" << pad + size / 2 << "\" transform=\"rotate(-90 12 " << pad + size / 2
       << ")\" text-anchor=\"middle\">CCR</text>\n";
    os << "<text x=\"" << pad + 8 << "\" y=\"" << pad + 20 << "\">AUOSC " << curve.auosc << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

/// Writes `path` as CSV "fpr,ccr", a JSON sidecar of the scalars next to it
/// (same stem, .json) and optionally an SVG plot (same stem, .svg).
inline void export_curve(const OSCCurve& curve, const std::string& path, bool svg = true) {
    if (curve.points.empty()) throw DomainError("export_curve: empty curve");
    {
        auto os = detail::open_out(path);
        os << "fpr,ccr\n";
        for (const auto& p : curve.points) os << detail::format_double(p.fpr) << ',' << detail::format_double(p.ccr) << '\n';
        if (!os) throw IoError("write failed: " + path);
    }
    const std::string stem = detail::sidecar_path(path);
    {
        auto os = detail::open_out(stem + ".json");
        os << curve_scalars(curve).dump(2) << '\n';
    }
    if (svg) {
        auto os = detail::open_out(stem + ".svg");
        os << curve_svg(curve);
    }
}

inline std::vector<CurvePoint> import_curve(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != "fpr,ccr") throw IoError(path + ": missing header 'fpr,ccr'");
    std::vector<CurvePoint> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv(line);
        if (cells.size() != 2) throw IoError(path + ": expected 2 columns");
        out.push_back({detail::parse_double(cells[0], path), detail::parse_double(cells[1], path)});
    }
    return out;
}

/// Score dump: header "score,predicted,true_label,is_known", one record per line,
/// unknown true labels written as -1.
inline void write_score_dump(const std::vector<ScoreRecord>& records, const std::string& path) {
    auto os = detail::open_out(path);
    os << "score,predicted,true_label,is_known\n";
    for (const auto& r : records)
        os << detail::format_double(r.score) << ',' << r.predicted << ',' << r.true_label << ',' << (r.is_known ? 1 : 0) << '\n';
    if (!os) throw IoError("write failed: " + path);
}

inline std::vector<ScoreRecord> read_score_dump(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != "score,predicted,true_label,is_known")
        throw IoError(path + ": missing score dump header");
    std::vector<ScoreRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv(line);
        if (cells.size() != 4) throw IoError(path + ": expected 4 columns");
        ScoreRecord r;
        r.score = detail::parse_double(cells[0], path);
        r.predicted = std::stoi(cells[1]);
        r.true_label = std::stoi(cells[2]);
        r.is_known = cells[3] == "1";
        if (r.is_known == (r.true_label == kUnknownLabel)) throw IoError(path + ": is_known disagrees with true_label");
        out.push_back(r);
    }
    return out;
}

} // namespace oslab
