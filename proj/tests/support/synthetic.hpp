#pragma once

// Procedural fixtures: image collections with analytically known color
// distributions, and embedding files whose sample mean and covariance are
// known exactly.

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "domgap/fid.hpp"
#include "domgap/image.hpp"
#include "domgap/image_io.hpp"
#include "support/oracles.hpp"

namespace fixture {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("domgap_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

using Rgb = std::array<std::uint8_t, 3>;

struct ColorRun {
    Rgb rgb;
    int count;
};

/// side x side image filled row-major with consecutive runs of colors.
inline domgap::RgbImage mixture_image(const std::vector<ColorRun>& runs, int side = 256) {
    domgap::RgbImage img(side, side);
    auto px = img.pixels();
    std::size_t i = 0;
    for (const auto& run : runs)
        for (int k = 0; k < run.count; ++k, ++i)
            for (int c = 0; c < 3; ++c) px[3 * i + c] = run.rgb[c];
    if (i != static_cast<std::size_t>(side) * side) throw std::logic_error("runs must cover the image");
    return img;
}

inline Rgb gray(int v) {
    const auto u = static_cast<std::uint8_t>(v);
    return {u, u, u};
}

struct CollectionSpec {
    std::string name;
    std::vector<std::vector<ColorRun>> day;    // chromatic images (may include gray pixels)
    std::vector<std::vector<ColorRun>> night;  // gray-only images
};

/// Writes PNGs and a COCO-CameraTraps manifest with full-frame boxes.
/// Returns the manifest path.
inline fs::path write_collection(const fs::path& root, const CollectionSpec& spec, int side = 256) {
    const fs::path dir = root / spec.name;
    fs::create_directories(dir);
    nlohmann::json images = nlohmann::json::array(), anns = nlohmann::json::array();
    int idx = 0;
    auto emit = [&](const std::vector<ColorRun>& runs, const char* tag) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%s_%03d.png", spec.name.c_str(), tag, idx);
        domgap::write_png(dir / name, mixture_image(runs, side));
        const std::string id = spec.name + "_" + std::to_string(idx);
        images.push_back({{"id", id}, {"file_name", name}, {"width", side}, {"height", side},
                          {"location", "34"}});
        anns.push_back({{"id", "a_" + id}, {"image_id", id}, {"category_id", 1},
                        {"bbox", {0, 0, side, side}}});
        ++idx;
    };
    for (const auto& d : spec.day) emit(d, "day");
    for (const auto& n : spec.night) emit(n, "night");
    const nlohmann::json manifest{{"images", images}, {"annotations", anns},
                                  {"categories", {{{"id", 1}, {"name", "deer"}}}}};
    std::ofstream(dir / "manifest.json") << manifest.dump(1);
    return dir / "manifest.json";
}

/// Expected aggregate hue distribution: per-image normalized over chromatic
/// pixels, then averaged with equal image weights.
inline std::vector<double> analytic_hue_aggregate(const CollectionSpec& spec, std::size_t bins) {
    std::vector<double> agg(bins, 0.0);
    int used = 0;
    for (const auto& image : spec.day) {
        std::vector<double> h(bins, 0.0);
        double chromatic = 0;
        for (const auto& run : image) {
            const int mx = std::max({run.rgb[0], run.rgb[1], run.rgb[2]});
            const int mn = std::min({run.rgb[0], run.rgb[1], run.rgb[2]});
            if (mx - mn < 3) continue;
            const double hue = oracle::hsi_hue_atan2(run.rgb[0], run.rgb[1], run.rgb[2]);
            h[static_cast<std::size_t>(hue / 360.0 * bins) % bins] += run.count;
            chromatic += run.count;
        }
        if (chromatic == 0) continue;
        for (std::size_t b = 0; b < bins; ++b) agg[b] += h[b] / chromatic;
        ++used;
    }
    for (auto& v : agg) v /= used;
    return agg;
}

inline std::vector<double> analytic_gray_aggregate(const CollectionSpec& spec, std::size_t bins) {
    std::vector<double> agg(bins, 0.0);
    for (const auto& image : spec.night) {
        double total = 0;
        std::vector<double> h(bins, 0.0);
        for (const auto& run : image) {
            h[static_cast<std::size_t>(run.rgb[0]) * bins / 256] += run.count;
            total += run.count;
        }
        for (std::size_t b = 0; b < bins; ++b) agg[b] += h[b] / total;
    }
    for (auto& v : agg) v /= static_cast<double>(spec.night.size());
    return agg;
}

// --------------------------------------------------------------- embeddings

/// Diagonal Gaussian parameters; values are dyadic so that mu +- sigma is
/// exact in float32.
struct DiagonalSpec {
    std::vector<double> mu;
    std::vector<double> sigma;
};

/// Rows x = mu + sigma * h over the columns 1..dim of a Sylvester Hadamard
/// matrix of order `rows`. The columns sum to zero and are orthogonal, so the
/// sample mean is mu and the unbiased covariance is diag(sigma^2 * rows/(rows-1)).
inline domgap::EmbeddingMatrix hadamard_embeddings(const DiagonalSpec& spec, std::uint32_t rows) {
    const auto dim = static_cast<std::uint32_t>(spec.mu.size());
    if (!std::has_single_bit(rows) || rows <= dim) throw std::logic_error("rows must be a power of 2 > dim");
    domgap::EmbeddingMatrix m{rows, dim, std::vector<float>(static_cast<std::size_t>(rows) * dim)};
    for (std::uint32_t i = 0; i < rows; ++i)
        for (std::uint32_t k = 0; k < dim; ++k) {
            const int sign = (std::popcount(i & (k + 1)) % 2) ? -1 : 1;
            m.values[static_cast<std::size_t>(i) * dim + k] =
                static_cast<float>(spec.mu[k] + sign * spec.sigma[k]);
        }
    return m;
}

inline std::vector<double> hadamard_variance(const DiagonalSpec& spec, std::uint32_t rows) {
    std::vector<double> v;
    for (double s : spec.sigma) v.push_back(s * s * rows / (rows - 1.0));
    return v;
}

inline std::uint32_t hadamard_rows_for(int dim) { return std::bit_ceil(static_cast<std::uint32_t>(dim) + 1); }

}  // namespace fixture
