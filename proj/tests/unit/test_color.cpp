#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "domgap/color.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

namespace domgap {
namespace {

double sum(const NormalizedHistogram& h) { return std::accumulate(h.weights.begin(), h.weights.end(), 0.0); }

NormalizedHistogram hist(std::vector<double> w, HistogramDomain d = HistogramDomain::Gray) {
    return NormalizedHistogram{d, std::move(w), 1};
}

TEST(HueHistogram, AllRedIsBinZero) {
    const auto h = hue_histogram(fixture::mixture_image({{{255, 0, 0}, 256 * 256}}), 64);
    EXPECT_EQ(h.weights[0], 1.0);
    EXPECT_EQ(h.support, 256u * 256u);
    EXPECT_EQ(h.domain, HistogramDomain::HueDegrees);
}

TEST(HueHistogram, RedGreenHalves) {
    const auto h = hue_histogram(fixture::mixture_image({{{255, 0, 0}, 128 * 256}, {{0, 255, 0}, 128 * 256}}), 64);
    EXPECT_EQ(h.weights[0], 0.5);
    EXPECT_EQ(h.weights[21], 0.5);
    EXPECT_EQ(sum(h), 1.0);
}

TEST(HueHistogram, AchromaticPixelsExcluded) {
    const auto gray = hue_histogram(RgbImage(16, 16, 77), 64);
    EXPECT_EQ(gray.support, 0u);
    EXPECT_EQ(sum(gray), 0.0);

    const auto mixed = hue_histogram(
        fixture::mixture_image({{fixture::gray(10), 200}, {{0, 0, 255}, 56}}, 16), 64);
    EXPECT_EQ(mixed.support, 56u);
    EXPECT_EQ(mixed.weights[42], 1.0);  // 240 / 360 * 64 = 42.67
}

TEST(HueHistogram, RejectsTooFewBins) { EXPECT_THROW(hue_histogram(RgbImage(2, 2), 1), InvalidArgument); }

TEST(HueHistogram, SumsToOneOnRandomImages) {
    std::mt19937 rng(2);
    for (std::size_t bins : {2u, 7u, 64u, 360u}) {
        RgbImage img(40, 30);
        for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng());
        EXPECT_NEAR(sum(hue_histogram(img, bins)), 1.0, 1e-9);
    }
}

TEST(GrayHistogram, ConstantAndTwoValued) {
    const auto c = gray_histogram(GrayImage(8, 8, 128));
    EXPECT_EQ(c.weights[128], 1.0);
    GrayImage bw(4, 4, std::vector<std::uint8_t>{0, 255, 0, 255, 0, 255, 0, 255, 0, 255, 0, 255, 0, 255, 0, 255});
    const auto h = gray_histogram(bw);
    EXPECT_EQ(h.weights[0], 0.5);
    EXPECT_EQ(h.weights[255], 0.5);
    EXPECT_EQ(h.support, 16u);
}

TEST(GrayHistogram, MatchesNaiveCounting) {
    std::mt19937 rng(8);
    GrayImage img(97, 61);
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng());
    for (std::size_t bins : {256u, 64u, 10u}) {
        std::vector<double> naive(bins, 0.0);
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x) {
                // Bin b covers [256 b / bins, 256 (b+1) / bins).
                for (std::size_t b = 0; b < bins; ++b)
                    if (img.at(x, y) * bins >= 256 * b && img.at(x, y) * bins < 256 * (b + 1)) naive[b] += 1;
            }
        const auto h = gray_histogram(img, bins);
        for (std::size_t b = 0; b < bins; ++b) EXPECT_DOUBLE_EQ(h.weights[b], naive[b] / (97 * 61));
        EXPECT_NEAR(sum(h), 1.0, 1e-9);
    }
}

TEST(Aggregate, IdentityAndSymmetry) {
    const auto h = hist({0.1, 0.2, 0.7});
    EXPECT_EQ(aggregate(std::vector{h}).weights, h.weights);
    const auto a = aggregate(std::vector{hist({1, 0, 0}), hist({0, 0, 1})});
    EXPECT_EQ(a.weights, (std::vector<double>{0.5, 0, 0.5}));
    EXPECT_EQ(a.support, 2u);
}

TEST(Aggregate, HandAveragedThree) {
    const std::vector hs{hist({0.2, 0.3, 0.5}), hist({0.6, 0.1, 0.3}), hist({0.1, 0.1, 0.8})};
    const auto a = aggregate(hs);
    const double expected[3] = {0.9 / 3, 0.5 / 3, 1.6 / 3};
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(a.weights[i], expected[i], 1e-12);
}

TEST(Aggregate, SkipsZeroSupport) {
    NormalizedHistogram empty{HistogramDomain::HueDegrees, {0, 0}, 0};
    const auto a = aggregate(std::vector{empty, hist({0.25, 0.75}, HistogramDomain::HueDegrees)});
    EXPECT_EQ(a.weights, (std::vector<double>{0.25, 0.75}));
    EXPECT_EQ(a.support, 1u);
    EXPECT_THROW(aggregate(std::vector{empty}), InvalidArgument);
}

TEST(Aggregate, MixedDomainsRejected) {
    EXPECT_THROW(aggregate(std::vector{hist({0.5, 0.5}), hist({0.5, 0.5}, HistogramDomain::HueDegrees)}),
                 InvalidArgument);
    EXPECT_THROW(aggregate(std::vector{hist({0.5, 0.5}), hist({1.0})}), InvalidArgument);
}

TEST(Aggregate, OrderInsensitiveAndNormalized) {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<NormalizedHistogram> hs;
    for (int i = 0; i < 500; ++i) {
        std::vector<double> w(64);
        for (auto& v : w) v = std::pow(u(rng), 8);
        const double s = std::accumulate(w.begin(), w.end(), 0.0);
        for (auto& v : w) v /= s;
        hs.push_back(hist(w));
    }
    const auto a = aggregate(hs);
    std::shuffle(hs.begin(), hs.end(), rng);
    const auto b = aggregate(hs);
    EXPECT_NEAR(sum(a), 1.0, 1e-9);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(a.weights[i], b.weights[i], 1e-9);
}

TEST(Pearson, HandComputedExamples) {
    const std::vector<double> h{0.1, 0.4, 0.2, 0.3};
    EXPECT_NEAR(pearson(h, h), 1.0, 1e-12);
    EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-12);
    // x=[0,1,2], y=[0,1,3]: Sxy = 3, Sxx = 2, Syy = 14/3.
    EXPECT_NEAR(pearson(std::vector<double>{0, 1, 2}, std::vector<double>{0, 1, 3}),
                3.0 / std::sqrt(2.0 * 14.0 / 3.0), 1e-12);
}

TEST(Pearson, ConstantVectorIsUndefined) {
    EXPECT_THROW(pearson(std::vector<double>{0.25, 0.25, 0.25, 0.25}, std::vector<double>{0.1, 0.2, 0.3, 0.4}),
                 NumericError);
    EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), InvalidArgument);
    EXPECT_THROW(pearson(hist({0.5, 0.5}), hist({0.5, 0.5}, HistogramDomain::HueDegrees)), InvalidArgument);
}

TEST(Pearson, SymmetricAffineInvariantAndMatchesTextbook) {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> u(0, 1), alpha(0.01, 100), beta(-10, 10);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> a(64), b(64);
        for (auto& v : a) v = u(rng);
        for (auto& v : b) v = u(rng);
        const double r = pearson(a, b);
        EXPECT_NEAR(r, pearson(b, a), 1e-12);
        EXPECT_NEAR(r, oracle::pearson(a, b), 1e-10);
        const double al = alpha(rng), be = beta(rng);
        std::vector<double> t1(a);
        for (auto& v : t1) v = al * v + be;
        EXPECT_NEAR(pearson(t1, b), r, 1e-9);
    }
}

TEST(HistogramExport, CsvAndJson) {
    const auto h = hist({0.25, 0.75}, HistogramDomain::HueDegrees);
    std::ostringstream csv;
    write_histogram_csv(csv, h);
    EXPECT_EQ(csv.str(), "bin_index,weight\n0,0.25\n1,0.75\n");
    const auto j = histogram_to_json(h);
    EXPECT_EQ(j.at("bin_edges"), (nlohmann::json{0.0, 180.0, 360.0}));
    EXPECT_EQ(j.at("domain"), "hue_degrees");
}

}  // namespace
}  // namespace domgap
