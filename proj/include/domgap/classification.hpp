#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domgap/csv.hpp"
#include "domgap/error.hpp"

namespace domgap {

enum class Split { Cis, TransPlus };

inline const char* to_string(Split s) { return s == Split::Cis ? "cis" : "trans+"; }

/// Case-insensitive; accepts "cis", "trans+", "transplus" and "trans_plus".
inline std::optional<Split> parse_split(std::string_view token) {
    std::string t;
    for (char c : token)
        if (!std::isspace(static_cast<unsigned char>(c)))
            t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t == "cis") return Split::Cis;
    if (t == "trans+" || t == "transplus" || t == "trans_plus") return Split::TransPlus;
    return std::nullopt;
}

struct PredictionRecord {
    std::string image_id;
    std::string true_label;
    std::string predicted_label;
    Split split = Split::Cis;
};

/// Reads `image_id,true_label,predicted_label,split` (header required, any column order).
inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open predictions " + path.string());
    const std::string name = path.string();
    std::string line;
    if (!std::getline(in, line)) throw ParseError(name + ": empty file");

    const std::vector<std::string> required = {"image_id", "true_label", "predicted_label", "split"};
    std::map<std::string, std::size_t> column;
    const auto header = csv::split_line(line);
    for (std::size_t i = 0; i < header.size(); ++i) column[csv::trim(header[i])] = i;
    for (const auto& r : required)
        if (!column.count(r)) throw ParseError(name + ":1: missing column '" + r + "'");

    std::vector<PredictionRecord> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty() || csv::trim(line) == "\r") continue;
        const auto f = csv::split_line(line);
        auto field = [&](const std::string& col) {
            const std::size_t i = column.at(col);
            std::string v = i < f.size() ? csv::trim(f[i]) : std::string{};
            if (v.empty())
                throw ParseError(name + ":" + std::to_string(line_no) + ": missing " + col);
            return v;
        };
        PredictionRecord r{field("image_id"), field("true_label"), field("predicted_label"),
                           Split::Cis};
        const std::string token = field("split");
        const auto split = parse_split(token);
        if (!split)
            throw ParseError(name + ":" + std::to_string(line_no) + ": unknown split '" + token + "'");
        r.split = *split;
        out.push_back(std::move(r));
    }
    return out;
}

struct ErrorReport {
    Split split = Split::Cis;
    std::map<std::string, double> per_class_error;
    /// Unweighted mean of the other classes' errors (defined with >= 2 classes).
    std::map<std::string, double> macro_error_excluding;
    /// Misclassified / total over all records of the other classes.
    std::map<std::string, double> micro_error_excluding;
    std::map<std::string, std::size_t> support;
    std::map<std::string, std::size_t> misclassified;
};

/// Top-1 per-class error rates over the records of one split.
inline ErrorReport error_rates(std::span<const PredictionRecord> preds, Split split) {
    ErrorReport rep;
    rep.split = split;
    for (const auto& p : preds) {
        if (p.split != split) continue;
        ++rep.support[p.true_label];
        auto& wrong = rep.misclassified[p.true_label];
        if (p.predicted_label != p.true_label) ++wrong;
    }
    if (rep.support.empty())
        throw InvalidArgument(std::string("no predictions in split ") + to_string(split));

    std::size_t total = 0, total_wrong = 0;
    for (const auto& [label, n] : rep.support) {
        rep.per_class_error[label] =
            static_cast<double>(rep.misclassified[label]) / static_cast<double>(n);
        total += n;
        total_wrong += rep.misclassified[label];
    }
    if (rep.support.size() < 2) return rep;
    for (const auto& [label, n] : rep.support) {
        double sum = 0;
        for (const auto& [other, e] : rep.per_class_error)
            if (other != label) sum += e;
        rep.macro_error_excluding[label] = sum / static_cast<double>(rep.support.size() - 1);
        rep.micro_error_excluding[label] =
            static_cast<double>(total_wrong - rep.misclassified.at(label)) /
            static_cast<double>(total - n);
    }
    return rep;
}

struct RunComparison {
    std::string class_label;
    double baseline_error = 0;
    double variant_error = 0;
    /// (baseline - variant) / baseline * 100.
    double relative_decrease_percent = 0;
    /// baseline - variant, in percentage points.
    double absolute_decrease_points = 0;
    /// variant - baseline of the other classes' mean error (macro and micro).
    std::optional<double> other_classes_delta_macro;
    std::optional<double> other_classes_delta_micro;
};

inline RunComparison compare_runs(const ErrorReport& baseline, const ErrorReport& variant,
                                  const std::string& class_label) {
    const auto b = baseline.per_class_error.find(class_label);
    const auto v = variant.per_class_error.find(class_label);
    if (b == baseline.per_class_error.end() || v == variant.per_class_error.end())
        throw InvalidArgument("class '" + class_label + "' missing from one of the reports");
    if (b->second == 0)
        throw InvalidArgument("baseline error for '" + class_label +
                              "' is 0; relative change is undefined");
    RunComparison c;
    c.class_label = class_label;
    c.baseline_error = b->second;
    c.variant_error = v->second;
    c.relative_decrease_percent = (b->second - v->second) / b->second * 100.0;
    c.absolute_decrease_points = (b->second - v->second) * 100.0;
    auto delta = [&](const std::map<std::string, double>& base,
                     const std::map<std::string, double>& var) -> std::optional<double> {
        const auto bi = base.find(class_label);
        const auto vi = var.find(class_label);
        if (bi == base.end() || vi == var.end()) return std::nullopt;
        return vi->second - bi->second;
    };
    c.other_classes_delta_macro = delta(baseline.macro_error_excluding, variant.macro_error_excluding);
    c.other_classes_delta_micro = delta(baseline.micro_error_excluding, variant.micro_error_excluding);
    return c;
}

}  // namespace domgap
