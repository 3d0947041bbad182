#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "domgap/error.hpp"
#include "domgap/image.hpp"

namespace domgap {

enum class HistogramDomain { HueDegrees, Gray };

inline const char* to_string(HistogramDomain d) {
    return d == HistogramDomain::HueDegrees ? "hue_degrees" : "gray";
}

/// Fixed-bin distribution over hue [0, 360) or gray level [0, 255].
/// Weights sum to 1 whenever support > 0, and are all zero otherwise.
struct NormalizedHistogram {
    HistogramDomain domain = HistogramDomain::Gray;
    std::vector<double> weights;
    std::uint64_t support = 0;  // pixels (or, after aggregation, samples) that contributed

    std::size_t bin_count() const noexcept { return weights.size(); }

    /// Lower edge of bin i in domain units.
    double bin_lower_edge(std::size_t i) const {
        const double extent = domain == HistogramDomain::HueDegrees ? 360.0 : 256.0;
        return extent * static_cast<double>(i) / static_cast<double>(weights.size());
    }
};

/// Neumaier-compensated running sum; keeps reductions order-insensitive to ~1 ulp.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            c_ += (sum_ - t) + v;
        else
            c_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + c_; }

private:
    double sum_ = 0, c_ = 0;
};

namespace detail {
inline void normalize_counts(NormalizedHistogram& h, const std::vector<std::uint64_t>& counts) {
    for (std::size_t i = 0; i < counts.size(); ++i)
        h.weights[i] = h.support ? static_cast<double>(counts[i]) / static_cast<double>(h.support) : 0.0;
}
}  // namespace detail

/// Per-image hue distribution. Achromatic pixels are skipped; an image with
/// no chromatic pixel yields support 0 and all-zero weights.
inline NormalizedHistogram hue_histogram(const RgbImage& image, std::size_t bins = 64) {
    if (bins < 2) throw InvalidArgument("hue histogram needs at least 2 bins");
    NormalizedHistogram h{HistogramDomain::HueDegrees, std::vector<double>(bins, 0.0), 0};
    std::vector<std::uint64_t> counts(bins, 0);
    const auto px = image.pixels();
    for (std::size_t i = 0; i + 2 < px.size(); i += 3) {
        const auto hue = hue_hsi(px[i], px[i + 1], px[i + 2]);
        if (!hue) continue;
        auto bin = static_cast<std::size_t>(std::floor(*hue / 360.0 * static_cast<double>(bins)));
        if (bin >= bins) bin = bins - 1;
        ++counts[bin];
        ++h.support;
    }
    detail::normalize_counts(h, counts);
    return h;
}

/// Per-image gray-level distribution; value v falls in bin floor(v * bins / 256).
inline NormalizedHistogram gray_histogram(const GrayImage& image, std::size_t bins = 256) {
    if (bins < 2 || bins > 256) throw InvalidArgument("gray histogram bins must be in [2, 256]");
    NormalizedHistogram h{HistogramDomain::Gray, std::vector<double>(bins, 0.0), 0};
    std::vector<std::uint64_t> counts(bins, 0);
    for (std::uint8_t v : image.pixels()) ++counts[static_cast<std::size_t>(v) * bins / 256];
    h.support = image.pixels().size();
    detail::normalize_counts(h, counts);
    return h;
}

/// Unweighted mean of the per-sample distributions that have support,
/// renormalized to sum 1. `support` of the result counts those samples.
inline NormalizedHistogram aggregate(std::span<const NormalizedHistogram> histograms) {
    if (histograms.empty()) throw InvalidArgument("aggregate of an empty histogram list");
    const auto domain = histograms.front().domain;
    const std::size_t bins = histograms.front().bin_count();
    std::vector<CompensatedSum> sums(bins);
    std::uint64_t used = 0;
    for (const auto& h : histograms) {
        if (h.domain != domain || h.bin_count() != bins)
            throw InvalidArgument("aggregate: histograms differ in domain or bin count");
        if (h.support == 0) continue;
        for (std::size_t i = 0; i < bins; ++i) sums[i].add(h.weights[i]);
        ++used;
    }
    if (used == 0) throw InvalidArgument("aggregate: every histogram has zero support");

    NormalizedHistogram out{domain, std::vector<double>(bins, 0.0), used};
    CompensatedSum total;
    for (std::size_t i = 0; i < bins; ++i) {
        out.weights[i] = sums[i].value() / static_cast<double>(used);
        total.add(out.weights[i]);
    }
    const double t = total.value();
    for (auto& w : out.weights) w /= t;
    return out;
}

/// Pearson correlation treating paired entries as observations.
/// Throws NumericError when either vector has zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("pearson: length mismatch");
    if (a.size() < 2) throw InvalidArgument("pearson: need at least 2 observations");
    const double n = static_cast<double>(a.size());
    CompensatedSum sa, sb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa.add(a[i]);
        sb.add(b[i]);
    }
    const double ma = sa.value() / n, mb = sb.value() / n;
    CompensatedSum sab, saa, sbb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab.add(da * db);
        saa.add(da * da);
        sbb.add(db * db);
    }
    if (saa.value() <= 0 || sbb.value() <= 0)
        throw NumericError("pearson: correlation undefined for a constant vector");
    const double r = sab.value() / std::sqrt(saa.value() * sbb.value());
    return std::clamp(r, -1.0, 1.0);
}

inline double pearson(const NormalizedHistogram& a, const NormalizedHistogram& b) {
    if (a.domain != b.domain || a.bin_count() != b.bin_count())
        throw InvalidArgument("pearson: histograms differ in domain or bin count");
    return pearson(std::span<const double>(a.weights), std::span<const double>(b.weights));
}

inline void write_histogram_csv(std::ostream& out, const NormalizedHistogram& h) {
    out << "bin_index,weight\n";
    const auto old = out.precision(17);
    for (std::size_t i = 0; i < h.bin_count(); ++i) out << i << ',' << h.weights[i] << '\n';
    out.precision(old);
}

inline nlohmann::json histogram_to_json(const NormalizedHistogram& h) {
    nlohmann::json edges = nlohmann::json::array();
    for (std::size_t i = 0; i <= h.bin_count(); ++i) edges.push_back(h.bin_lower_edge(i));
    return {{"domain", to_string(h.domain)},
            {"bin_count", h.bin_count()},
            {"bin_edges", edges},
            {"support", h.support},
            {"weights", h.weights}};
}

}  // namespace domgap
