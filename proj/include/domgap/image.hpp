#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domgap/csv.hpp"
#include "domgap/error.hpp"
#include "domgap/random.hpp"

namespace domgap {

/// Row-major 8-bit image with `Channels` interleaved channels.
template <int Channels>
class Image {
    static_assert(Channels >= 1 && Channels <= 4);

public:
    static constexpr int channels = Channels;

    Image() = default;

    Image(int width, int height, std::uint8_t fill = 0)
        : width_(checked_dim(width)), height_(checked_dim(height)),
          pixels_(static_cast<std::size_t>(width) * height * Channels, fill) {}

    Image(int width, int height, std::vector<std::uint8_t> pixels)
        : width_(checked_dim(width)), height_(checked_dim(height)), pixels_(std::move(pixels)) {
        if (pixels_.size() != static_cast<std::size_t>(width_) * height_ * Channels)
            throw InvalidArgument("pixel buffer length does not match width*height*channels");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return pixels_.empty(); }

    std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
    std::span<std::uint8_t> pixels() noexcept { return pixels_; }

    std::uint8_t at(int x, int y, int c = 0) const { return pixels_[offset(x, y) + c]; }
    std::uint8_t& at(int x, int y, int c = 0) { return pixels_[offset(x, y) + c]; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    static int checked_dim(int v) {
        if (v < 1) throw InvalidArgument("image dimensions must be >= 1");
        return v;
    }
    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) * Channels;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

using RgbImage = Image<3>;
using GrayImage = Image<1>;

/// Axis-aligned box in pixel coordinates; (x, y) is the top-left corner.
struct BBox {
    double x = 0, y = 0, width = 0, height = 0;
    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Integer pixel rectangle, half-open: [x, x+width) x [y, y+height).
struct PixelRect {
    int x = 0, y = 0, width = 0, height = 0;
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

inline double round_half_up(double v) { return std::floor(v + 0.5); }

/// Expands `box` to a square of side max(w, h) about its center, then clamps
/// the square to the image bounds.
inline PixelRect square_crop_rect(const BBox& box, int image_width, int image_height) {
    if (!(box.width > 0) || !(box.height > 0))
        throw InvalidArgument("bbox width and height must be positive");
    const double side = std::max(box.width, box.height);
    const double cx = box.x + box.width / 2.0;
    const double cy = box.y + box.height / 2.0;
    const auto s = std::max<long long>(1, static_cast<long long>(round_half_up(side)));
    const auto left = static_cast<long long>(round_half_up(cx - side / 2.0));
    const auto top = static_cast<long long>(round_half_up(cy - side / 2.0));
    const long long x0 = std::max<long long>(0, left);
    const long long y0 = std::max<long long>(0, top);
    const long long x1 = std::min<long long>(image_width, left + s);
    const long long y1 = std::min<long long>(image_height, top + s);
    if (x1 <= x0 || y1 <= y0) throw InvalidArgument("bbox does not intersect the image");
    return {static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x1 - x0),
            static_cast<int>(y1 - y0)};
}

/// Bilinear resampling of `src` restricted to `rect`, using pixel-center
/// alignment (a same-size resample is the identity). Samples outside the
/// rectangle are clamped to its border.
template <int C>
Image<C> resize_bilinear(const Image<C>& src, const PixelRect& rect, int out_width,
                         int out_height) {
    if (rect.width < 1 || rect.height < 1 || rect.x < 0 || rect.y < 0 ||
        rect.x + rect.width > src.width() || rect.y + rect.height > src.height())
        throw InvalidArgument("resample rectangle outside the source image");
    Image<C> out(out_width, out_height);

    struct Tap {
        int lo, hi;
        double frac;
    };
    auto taps = [](int out_n, int src_n) {
        std::vector<Tap> t(out_n);
        const double scale = static_cast<double>(src_n) / out_n;
        for (int i = 0; i < out_n; ++i) {
            double s = (i + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
            const int lo = static_cast<int>(std::floor(s));
            const int hi = std::min(lo + 1, src_n - 1);
            t[i] = {lo, hi, s - lo};
        }
        return t;
    };
    const auto xs = taps(out_width, rect.width);
    const auto ys = taps(out_height, rect.height);

    for (int oy = 0; oy < out_height; ++oy) {
        const Tap& ty = ys[oy];
        for (int ox = 0; ox < out_width; ++ox) {
            const Tap& tx = xs[ox];
            for (int c = 0; c < C; ++c) {
                const double p00 = src.at(rect.x + tx.lo, rect.y + ty.lo, c);
                const double p10 = src.at(rect.x + tx.hi, rect.y + ty.lo, c);
                const double p01 = src.at(rect.x + tx.lo, rect.y + ty.hi, c);
                const double p11 = src.at(rect.x + tx.hi, rect.y + ty.hi, c);
                const double top = p00 + (p10 - p00) * tx.frac;
                const double bottom = p01 + (p11 - p01) * tx.frac;
                const double v = top + (bottom - top) * ty.frac;
                out.at(ox, oy, c) = static_cast<std::uint8_t>(std::clamp(round_half_up(v), 0.0, 255.0));
            }
        }
    }
    return out;
}

template <int C>
Image<C> resize_bilinear(const Image<C>& src, int out_width, int out_height) {
    return resize_bilinear(src, PixelRect{0, 0, src.width(), src.height()}, out_width, out_height);
}

/// Square-expands `box`, crops it from `image` and resamples to out_side x out_side.
template <int C>
Image<C> crop_resize(const Image<C>& image, const BBox& box, int out_side = 256) {
    if (out_side < 1) throw InvalidArgument("output side must be >= 1");
    const PixelRect rect = square_crop_rect(box, image.width(), image.height());
    return resize_bilinear(image, rect, out_side, out_side);
}

/// ITU-R BT.601 luma, rounded half up; computed in integers so that gray
/// inputs map to themselves exactly.
inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
    const unsigned v = 299u * r + 587u * g + 114u * b + 500u;
    return static_cast<std::uint8_t>(std::min(v / 1000u, 255u));
}

inline GrayImage to_grayscale(const RgbImage& image) {
    GrayImage out(image.width(), image.height());
    const auto src = image.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] = luma(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
    return out;
}

/// Pixels whose channel spread max-min is below this are treated as achromatic.
inline constexpr int kAchromaticSpread = 3;

/// Hue of the HSI colorspace in degrees, [0, 360). Absent for near-achromatic
/// pixels (max - min < 3), where hue is undefined.
inline std::optional<double> hue_hsi(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int mx = std::max({r, g, b});
    const int mn = std::min({r, g, b});
    if (mx - mn < kAchromaticSpread) return std::nullopt;
    const double R = r, G = g, B = b;
    const double num = (R - G) + (R - B);
    const double den = 2.0 * std::sqrt((R - G) * (R - G) + (R - B) * (G - B));
    const double theta = std::acos(std::clamp(num / den, -1.0, 1.0)) * (180.0 / std::numbers::pi);
    double h = (B <= G) ? theta : 360.0 - theta;
    if (h >= 360.0) h -= 360.0;
    return h;
}

/// Mean of max(R,G,B) - min(R,G,B) over a regular grid of sample points
/// (grid x grid, or every pixel when the image is smaller than the grid).
inline double sampled_channel_spread(const RgbImage& image, int grid = 16) {
    const int nx = std::min(grid, image.width());
    const int ny = std::min(grid, image.height());
    double sum = 0;
    for (int j = 0; j < ny; ++j) {
        const int y = static_cast<int>((2LL * j + 1) * image.height() / (2LL * ny));
        for (int i = 0; i < nx; ++i) {
            const int x = static_cast<int>((2LL * i + 1) * image.width() / (2LL * nx));
            const int r = image.at(x, y, 0), g = image.at(x, y, 1), b = image.at(x, y, 2);
            sum += std::max({r, g, b}) - std::min({r, g, b});
        }
    }
    return sum / (static_cast<double>(nx) * ny);
}

/// Square grayscale patch cut from an image.
struct Patch {
    int x = 0, y = 0;
    int side = 0;
    std::vector<std::uint8_t> pixels;  // side*side, row-major

    std::uint8_t at(int px, int py) const { return pixels[static_cast<std::size_t>(py) * side + px]; }
};

struct PatchSpec {
    int x = 0, y = 0, side = 0;
    friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

inline Patch patch_at(const GrayImage& image, const PatchSpec& spec) {
    if (spec.side < 2) throw InvalidArgument("patch side must be >= 2");
    if (spec.x < 0 || spec.y < 0 || spec.x + spec.side > image.width() ||
        spec.y + spec.side > image.height())
        throw InvalidArgument("patch (" + std::to_string(spec.x) + "," + std::to_string(spec.y) +
                              ", side " + std::to_string(spec.side) + ") lies outside the image");
    Patch p{spec.x, spec.y, spec.side, {}};
    p.pixels.reserve(static_cast<std::size_t>(spec.side) * spec.side);
    for (int yy = 0; yy < spec.side; ++yy)
        for (int xx = 0; xx < spec.side; ++xx) p.pixels.push_back(image.at(spec.x + xx, spec.y + yy));
    return p;
}

struct PatchExtraction {
    std::vector<Patch> patches;
    bool overlap_fallback = false;  // non-overlapping placement was not possible
};

/// Draws `count` patches at seeded uniform positions, rejecting overlaps.
/// When the patches cannot fit without overlap (by area, or after a bounded
/// number of rejected draws) overlapping placement is used and flagged.
inline PatchExtraction extract_patches(const GrayImage& image, int side, int count,
                                       std::uint64_t seed) {
    if (side < 2) throw InvalidArgument("patch side must be >= 2");
    if (count < 0) throw InvalidArgument("patch count must be non-negative");
    if (image.width() < side || image.height() < side)
        throw InvalidArgument("image (" + std::to_string(image.width()) + "x" +
                              std::to_string(image.height()) + ") is smaller than patch side " +
                              std::to_string(side));
    const auto span_x = static_cast<std::uint64_t>(image.width() - side + 1);
    const auto span_y = static_cast<std::uint64_t>(image.height() - side + 1);
    Engine rng(seed);
    PatchExtraction out;

    const long long area = 1LL * image.width() * image.height();
    const bool packable = 1LL * count * side * side <= area;
    constexpr int kAttemptsPerPatch = 1000;

    auto overlaps = [&](int x, int y) {
        return std::any_of(out.patches.begin(), out.patches.end(), [&](const Patch& p) {
            return x < p.x + side && p.x < x + side && y < p.y + side && p.y < y + side;
        });
    };

    for (int k = 0; k < count; ++k) {
        int x = 0, y = 0;
        bool placed = false;
        if (packable && !out.overlap_fallback) {
            for (int attempt = 0; attempt < kAttemptsPerPatch; ++attempt) {
                x = static_cast<int>(uniform_index(rng, span_x));
                y = static_cast<int>(uniform_index(rng, span_y));
                if (!overlaps(x, y)) {
                    placed = true;
                    break;
                }
            }
        }
        if (!placed) {
            out.overlap_fallback = true;
            x = static_cast<int>(uniform_index(rng, span_x));
            y = static_cast<int>(uniform_index(rng, span_y));
        }
        out.patches.push_back(patch_at(image, {x, y, side}));
    }
    return out;
}

/// Reads a manual patch list, CSV `image_id,x,y,side` (header optional).
inline std::map<std::string, std::vector<PatchSpec>> load_patch_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open patch list: " + path);
    std::map<std::string, std::vector<PatchSpec>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split_line(line);
        if (line_no == 1 && !f.empty() && csv::trim(f[0]) == "image_id") continue;
        if (f.size() != 4)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 4 fields");
        try {
            PatchSpec s{std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3])};
            out[csv::trim(f[0])].push_back(s);
        } catch (const std::logic_error&) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": non-integer coordinate");
        }
    }
    return out;
}

}  // namespace domgap
