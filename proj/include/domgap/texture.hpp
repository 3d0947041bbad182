#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "domgap/color.hpp"
#include "domgap/error.hpp"
#include "domgap/image.hpp"
#include "domgap/random.hpp"

namespace domgap {

struct Offset {
    int dx = 0, dy = 0;
    friend bool operator==(const Offset&, const Offset&) = default;
};

/// Distance 1 at 0, 45, 90 and 135 degrees (y axis pointing down).
inline std::vector<Offset> default_offsets() { return {{1, 0}, {1, -1}, {0, -1}, {-1, -1}}; }

struct QuantizedPatch {
    int side = 0;
    int levels = 0;
    std::vector<std::uint8_t> values;  // each < levels

    std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * side + x]; }
};

inline std::uint8_t quantize_value(std::uint8_t v, int levels) {
    return static_cast<std::uint8_t>(static_cast<int>(v) * levels / 256);
}

inline QuantizedPatch quantize(const Patch& patch, int levels) {
    if (levels < 2 || levels > 256) throw InvalidArgument("quantization levels must be in [2, 256]");
    QuantizedPatch q{patch.side, levels, {}};
    q.values.reserve(patch.pixels.size());
    for (std::uint8_t v : patch.pixels) q.values.push_back(quantize_value(v, levels));
    return q;
}

/// Gray-level co-occurrence matrix, row-major levels x levels.
struct Glcm {
    int levels = 0;
    std::vector<double> matrix;
    std::vector<Offset> offsets;
    bool symmetric = false;
    bool normalized = false;

    double at(int i, int j) const { return matrix[static_cast<std::size_t>(i) * levels + j]; }
};

/// Symmetrized co-occurrence counts: every in-bounds pair (p(x,y), p(x+dx,y+dy))
/// over all offsets is counted in both (a,b) and (b,a).
inline std::vector<std::uint64_t> glcm_counts(const QuantizedPatch& patch,
                                              std::span<const Offset> offsets, int levels) {
    if (levels < 2 || levels > 256) throw InvalidArgument("GLCM levels must be in [2, 256]");
    if (patch.levels > levels) throw InvalidArgument("patch was quantized to more levels than the GLCM");
    if (offsets.empty()) throw InvalidArgument("GLCM needs at least one offset");
    for (const auto& o : offsets) {
        if (o.dx == 0 && o.dy == 0) throw InvalidArgument("GLCM offset (0, 0) is not a neighbor");
        if (std::max(std::abs(o.dx), std::abs(o.dy)) >= patch.side)
            throw InvalidArgument("GLCM offset (" + std::to_string(o.dx) + "," +
                                  std::to_string(o.dy) + ") does not fit in a patch of side " +
                                  std::to_string(patch.side));
    }
    const auto L = static_cast<std::size_t>(levels);
    std::vector<std::uint64_t> counts(L * L, 0);
    const int n = patch.side;
    for (const auto& o : offsets) {
        const int x_lo = std::max(0, -o.dx), x_hi = std::min(n, n - o.dx);
        const int y_lo = std::max(0, -o.dy), y_hi = std::min(n, n - o.dy);
        for (int y = y_lo; y < y_hi; ++y) {
            for (int x = x_lo; x < x_hi; ++x) {
                const std::size_t a = patch.at(x, y), b = patch.at(x + o.dx, y + o.dy);
                ++counts[a * L + b];
                ++counts[b * L + a];
            }
        }
    }
    return counts;
}

/// Symmetric, normalized GLCM accumulated over all offsets.
inline Glcm glcm(const QuantizedPatch& patch, std::span<const Offset> offsets, int levels) {
    const auto counts = glcm_counts(patch, offsets, levels);
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    Glcm g{levels, std::vector<double>(counts.size(), 0.0), {offsets.begin(), offsets.end()}, true,
           true};
    for (std::size_t i = 0; i < counts.size(); ++i)
        g.matrix[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    return g;
}

struct GlcmFeatures {
    double contrast = 0;
    double homogeneity = 0;
    double energy = 0;
    double entropy = 0;
    std::size_t patch_count = 0;
    int levels = 0;
};

/// contrast = sum P(i,j)(i-j)^2, homogeneity = sum P(i,j)/(1+(i-j)^2),
/// energy = sum P(i,j)^2, entropy = -sum P(i,j) ln P(i,j) (0 ln 0 = 0).
inline GlcmFeatures glcm_features(const Glcm& g) {
    const auto L = static_cast<std::size_t>(g.levels);
    if (g.matrix.size() != L * L) throw InvalidArgument("GLCM matrix size does not match levels");
    CompensatedSum total;
    for (double p : g.matrix) {
        if (p < 0) throw InvalidArgument("GLCM has a negative entry");
        total.add(p);
    }
    if (!g.normalized || std::abs(total.value() - 1.0) > 1e-9)
        throw InvalidArgument("GLCM features need a normalized matrix");

    CompensatedSum contrast, homogeneity, energy, entropy;
    for (int i = 0; i < g.levels; ++i) {
        for (int j = 0; j < g.levels; ++j) {
            const double p = g.at(i, j);
            if (p == 0) continue;
            const double d2 = static_cast<double>(i - j) * (i - j);
            contrast.add(p * d2);
            homogeneity.add(p / (1.0 + d2));
            energy.add(p * p);
            entropy.add(-p * std::log(p));
        }
    }
    return {contrast.value(), homogeneity.value(), energy.value(), entropy.value(), 1, g.levels};
}

struct TextureOptions {
    int patches_per_image = 4;
    int side = 20;
    int levels = 16;
    std::vector<Offset> offsets = default_offsets();
};

/// Arithmetic mean of per-patch features; each entry is weighted by its patch_count.
inline GlcmFeatures mean_features(std::span<const GlcmFeatures> features) {
    if (features.empty()) throw InvalidArgument("mean of an empty feature list");
    CompensatedSum c, h, e, s;
    std::size_t n = 0;
    for (const auto& f : features) {
        if (f.levels != features.front().levels)
            throw InvalidArgument("cannot average features computed at different levels");
        const double w = static_cast<double>(f.patch_count);
        c.add(f.contrast * w);
        h.add(f.homogeneity * w);
        e.add(f.energy * w);
        s.add(f.entropy * w);
        n += f.patch_count;
    }
    if (n == 0) throw InvalidArgument("mean of features with zero patches");
    const double dn = static_cast<double>(n);
    return {c.value() / dn, h.value() / dn, e.value() / dn, s.value() / dn, n,
            features.front().levels};
}

inline GlcmFeatures patch_features(const Patch& patch, const TextureOptions& opts) {
    return glcm_features(glcm(quantize(patch, opts.levels), opts.offsets, opts.levels));
}

inline GlcmFeatures features_of_patches(std::span<const Patch> patches, const TextureOptions& opts) {
    std::vector<GlcmFeatures> per_patch;
    per_patch.reserve(patches.size());
    for (const auto& p : patches) per_patch.push_back(patch_features(p, opts));
    return mean_features(per_patch);
}

struct CollectionTexture {
    GlcmFeatures features;
    std::vector<std::size_t> overlap_images;  // indices where patches had to overlap
};

/// Features averaged over `patches_per_image` seeded patches of every image.
/// Image i draws its patches from derive_seed(seed, i).
inline CollectionTexture collection_features(std::span<const GrayImage> images,
                                             const TextureOptions& opts, std::uint64_t seed) {
    if (images.empty()) throw InvalidArgument("texture features need at least one image");
    CollectionTexture out;
    std::vector<GlcmFeatures> per_patch;
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto ex = extract_patches(images[i], opts.side, opts.patches_per_image, derive_seed(seed, i));
        if (ex.overlap_fallback) out.overlap_images.push_back(i);
        for (const auto& p : ex.patches) per_patch.push_back(patch_features(p, opts));
    }
    out.features = mean_features(per_patch);
    return out;
}

}  // namespace domgap
