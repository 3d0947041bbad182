#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "domgap/fid.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

namespace domgap {
namespace {

GaussianFit gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov, std::size_t n = 1000) {
    return GaussianFit{std::move(mean), std::move(cov), n};
}

Eigen::MatrixXd random_spd(std::mt19937& rng, int d) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd b(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) b(i, j) = z(rng);
    return b.transpose() * b;
}

TEST(FitGaussian, HandComputedTwoRows) {
    Eigen::MatrixXd x(2, 2);
    x << 0, 0, 2, 0;
    const auto fit = fit_gaussian(x);
    EXPECT_EQ(fit.mean, Eigen::Vector2d(1, 0));
    Eigen::MatrixXd expected(2, 2);
    expected << 2, 0, 0, 0;
    EXPECT_EQ(fit.cov, expected);
    EXPECT_EQ(fit.sample_count, 2u);
}

TEST(FitGaussian, IdenticalRowsHaveZeroCovariance) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(7, 3, 0.5);
    EXPECT_EQ(fit_gaussian(x).cov, Eigen::MatrixXd::Zero(3, 3));
}

TEST(FitGaussian, MatchesTwoPassOracle) {
    std::mt19937 rng(1);
    std::normal_distribution<double> z(3, 2);
    Eigen::MatrixXd x(100, 5);
    std::vector<std::vector<double>> rows(100, std::vector<double>(5));
    for (int i = 0; i < 100; ++i)
        for (int k = 0; k < 5; ++k) rows[i][k] = x(i, k) = z(rng);
    const auto fit = fit_gaussian(x);
    const auto cov = oracle::covariance(rows);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            EXPECT_NEAR(fit.cov(i, j), cov[i][j], 1e-10);
            EXPECT_EQ(fit.cov(i, j), fit.cov(j, i));
        }
}

TEST(FitGaussian, RejectsBadInput) {
    EXPECT_THROW(fit_gaussian(Eigen::MatrixXd::Zero(1, 3)), InvalidArgument);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 2);
    x(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(fit_gaussian(x), InvalidArgument);
}

TEST(FitGaussian, FlagsRankDeficiency) {
    EXPECT_TRUE(fit_gaussian(Eigen::MatrixXd::Random(3, 8)).rank_deficient());
    EXPECT_FALSE(fit_gaussian(Eigen::MatrixXd::Random(9, 8)).rank_deficient());
}

TEST(SqrtmPsd, DiagonalAndIdentity) {
    EXPECT_TRUE(sqrtm_psd(Eigen::MatrixXd::Identity(4, 4)).isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-14));
    const Eigen::MatrixXd d = Eigen::Vector2d(4, 9).asDiagonal();
    const Eigen::MatrixXd s = sqrtm_psd(d);
    EXPECT_NEAR(s(0, 0), 2, 1e-14);
    EXPECT_NEAR(s(1, 1), 3, 1e-14);
    EXPECT_NEAR(s(0, 1), 0, 1e-14);
}

TEST(SqrtmPsd, ReconstructsRandomSpd) {
    std::mt19937 rng(3);
    for (int d : {5, 32, 128, 256}) {
        const Eigen::MatrixXd a = random_spd(rng, d);
        const Eigen::MatrixXd s = sqrtm_psd(a);
        EXPECT_LT((s * s - a).norm() / a.norm(), 1e-6) << d;
        EXPECT_EQ(s, s.transpose());
    }
}

TEST(SqrtmPsd, ClampsNegativeEigenvaluesAndRejectsAsymmetry) {
    const Eigen::MatrixXd m = Eigen::Vector2d(4, -1e-12).asDiagonal();
    EXPECT_EQ(sqrtm_psd(m)(1, 1), 0.0);
    Eigen::MatrixXd asym(2, 2);
    asym << 1, 0.5, 0, 1;
    EXPECT_THROW(sqrtm_psd(asym), InvalidArgument);
}

TEST(Frechet, SelfDistanceIsZero) {
    std::mt19937 rng(4);
    const auto a = gaussian(Eigen::VectorXd::Random(16), random_spd(rng, 16));
    EXPECT_NEAR(frechet_distance(a, a).distance, 0.0, 1e-6);
    const auto singular = fit_gaussian(Eigen::MatrixXd::Random(4, 16));
    EXPECT_NEAR(frechet_distance(singular, singular).distance, 0.0, 1e-6);
}

TEST(Frechet, OneDimensionalClosedForm) {
    auto g = [](double mu, double var) {
        return gaussian(Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, var));
    };
    EXPECT_NEAR(frechet_distance(g(0, 1), g(1, 4)).distance, 2.0, 1e-12);

    std::mt19937 rng(5);
    std::uniform_real_distribution<double> mu(-10, 10), sd(0.01, 5);
    for (int t = 0; t < 1000; ++t) {
        const double m1 = mu(rng), m2 = mu(rng), s1 = sd(rng), s2 = sd(rng);
        const double expected = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
        EXPECT_NEAR(frechet_distance(g(m1, s1 * s1), g(m2, s2 * s2)).distance, expected, 1e-8);
    }
}

TEST(Frechet, IsotropicClosedForm) {
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> c(-2, 2), sd(0.1, 3);
    for (int d : {2, 64, 256}) {
        for (int t = 0; t < 5; ++t) {
            const double cc = c(rng), s1 = sd(rng), s2 = sd(rng);
            const auto a = gaussian(Eigen::VectorXd::Zero(d), s1 * s1 * Eigen::MatrixXd::Identity(d, d));
            const auto b = gaussian(Eigen::VectorXd::Constant(d, cc), s2 * s2 * Eigen::MatrixXd::Identity(d, d));
            EXPECT_NEAR(frechet_distance(a, b).distance, d * cc * cc + d * (s1 - s2) * (s1 - s2), 1e-8);
        }
    }
}

TEST(Frechet, DiagonalMatchesOracle) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.1, 4);
    const int d = 40;
    std::vector<double> ma(d), va(d), mb(d), vb(d);
    for (int k = 0; k < d; ++k) ma[k] = u(rng), va[k] = u(rng), mb[k] = u(rng), vb[k] = u(rng);
    auto fit = [&](const std::vector<double>& m, const std::vector<double>& v) {
        return gaussian(Eigen::Map<const Eigen::VectorXd>(m.data(), d),
                        Eigen::Map<const Eigen::VectorXd>(v.data(), d).asDiagonal().toDenseMatrix());
    };
    const double expected = static_cast<double>(oracle::frechet_diagonal(ma, va, mb, vb));
    EXPECT_NEAR(frechet_distance(fit(ma, va), fit(mb, vb)).distance, expected, 1e-9 * expected);
}

TEST(Frechet, SymmetricAndTranslationInvariant) {
    std::mt19937 rng(8);
    for (int t = 0; t < 20; ++t) {
        const int d = 12;
        const Eigen::VectorXd ma = Eigen::VectorXd::Random(d), mb = Eigen::VectorXd::Random(d);
        const Eigen::MatrixXd ca = random_spd(rng, d), cb = random_spd(rng, d);
        const double ab = frechet_distance(gaussian(ma, ca), gaussian(mb, cb)).distance;
        const double ba = frechet_distance(gaussian(mb, cb), gaussian(ma, ca)).distance;
        EXPECT_NEAR(ab, ba, 1e-6 * ab);
        const Eigen::VectorXd shift = 50 * Eigen::VectorXd::Random(d);
        const double shifted = frechet_distance(gaussian(ma + shift, ca), gaussian(mb + shift, cb)).distance;
        EXPECT_NEAR(shifted, ab, 1e-8);
    }
}

TEST(Frechet, DimensionMismatchThrows) {
    const auto a = gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
    const auto b = gaussian(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
    EXPECT_THROW(frechet_distance(a, b), InvalidArgument);
}

TEST(Frechet, OperandReuseMatchesDirect) {
    std::mt19937 rng(9);
    const auto ref = gaussian(Eigen::VectorXd::Random(10), random_spd(rng, 10));
    const FrechetOperand op(ref);
    for (int t = 0; t < 5; ++t) {
        const auto cand = gaussian(Eigen::VectorXd::Random(10), random_spd(rng, 10));
        EXPECT_EQ(frechet_distance(FrechetOperand(cand), op).distance,
                  frechet_distance(cand, ref).distance);
    }
}

TEST(NormalizedFid, Ratios) {
    EXPECT_EQ(normalized_fid(30, 60), 0.5);
    EXPECT_EQ(normalized_fid(7.25, 7.25), 1.0);
    EXPECT_THROW(normalized_fid(1, 0), InvalidArgument);
    EXPECT_THROW(normalized_fid(1, -2), InvalidArgument);
}

TEST(Embeddings, BitExactLayout) {
    const EmbeddingMatrix m{2, 2, {1.0f, -2.0f, 0.5f, 3.0f}};
    const auto bytes = encode_embeddings(m);
    ASSERT_EQ(bytes.size(), 12u + 16u);
    EXPECT_EQ(std::memcmp(bytes.data(), "EMB1", 4), 0);
    EXPECT_EQ(bytes[4], 2);
    EXPECT_EQ(bytes[5], 0);
    EXPECT_EQ(bytes[8], 2);
    // 1.0f = 0x3F800000 little-endian.
    EXPECT_EQ(bytes[12], 0x00);
    EXPECT_EQ(bytes[15], 0x3F);
    // -2.0f = 0xC0000000.
    EXPECT_EQ(bytes[19], 0xC0);
    const auto back = decode_embeddings(bytes);
    EXPECT_EQ(back.n, 2u);
    EXPECT_EQ(back.values, m.values);
}

TEST(Embeddings, DecoderRejectsMalformed) {
    auto bytes = encode_embeddings(EmbeddingMatrix{3, 2, std::vector<float>(6, 1.0f)});
    auto bad_magic = bytes;
    bad_magic[3] = '2';
    EXPECT_THROW(decode_embeddings(bad_magic), ParseError);
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(decode_embeddings(truncated), ParseError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(decode_embeddings(trailing), ParseError);
    EXPECT_THROW(decode_embeddings(std::vector<unsigned char>{'E', 'M', 'B'}), ParseError);
}

TEST(Embeddings, FileAndSidecarRoundTrip) {
    fixture::TempDir dir("emb");
    const auto m = fixture::hadamard_embeddings({{1, 2}, {0.5, 0.25}}, 4);
    write_embeddings(dir / "a.emb", m);
    EXPECT_EQ(read_embeddings(dir / "a.emb").values, m.values);
    const EmbeddingSidecar side{2, "syn", "inception-v3@test"};
    write_sidecar(sidecar_path(dir / "a.emb"), side);
    EXPECT_EQ(sidecar_path(dir / "a.emb").filename(), "a.emb.json");
    const auto back = read_sidecar(sidecar_path(dir / "a.emb"));
    EXPECT_EQ(back.depth_label, 2);
    EXPECT_EQ(back.extractor_id, "inception-v3@test");
    EXPECT_THROW(read_embeddings(dir / "missing.emb"), IoError);
}

TEST(EmbeddingSet, ValidatesInvariants) {
    EXPECT_THROW(EmbeddingSet(Depth::Pool1, EmbeddingMatrix{4, 63, std::vector<float>(4 * 63)}), InvalidArgument);
    EXPECT_THROW(EmbeddingSet(Depth::Pool1, EmbeddingMatrix{1, 64, std::vector<float>(64)}), InvalidArgument);
    std::vector<float> v(2 * 64, 0.0f);
    v[5] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(EmbeddingSet(Depth::Pool1, EmbeddingMatrix{2, 64, v}), InvalidArgument);
    EXPECT_NO_THROW(EmbeddingSet(Depth::Pool1, EmbeddingMatrix{2, 64, std::vector<float>(128)}));
    EXPECT_EQ(depth_from_int(768), Depth::PreAux);
    EXPECT_FALSE(depth_from_int(100));
}

TEST(HadamardFixture, ExactMomentsGiveAnalyticFid) {
    const fixture::DiagonalSpec a{{0.5, -1, 2, 0}, {1, 0.5, 0.25, 2}};
    const fixture::DiagonalSpec b{{0, 0, 1.5, 1}, {0.5, 0.5, 1, 1}};
    const auto ma = fixture::hadamard_embeddings(a, 8), mb = fixture::hadamard_embeddings(b, 16);
    auto to_fit = [](const EmbeddingMatrix& m) {
        Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
            m.values.data(), m.n, m.dim);
        return fit_gaussian(Eigen::MatrixXd(x.cast<double>()));
    };
    const auto fa = to_fit(ma), fb = to_fit(mb);
    const auto va = fixture::hadamard_variance(a, 8), vb = fixture::hadamard_variance(b, 16);
    for (int k = 0; k < 4; ++k) {
        EXPECT_EQ(fa.mean[k], a.mu[k]);
        EXPECT_NEAR(fa.cov(k, k), va[k], 1e-15);
        for (int j = 0; j < 4; ++j)
            if (j != k) EXPECT_EQ(fa.cov(k, j), 0.0);
    }
    const double expected = static_cast<double>(oracle::frechet_diagonal(a.mu, va, b.mu, vb));
    EXPECT_NEAR(frechet_distance(fa, fb).distance, expected, 1e-12 * expected);
}

}  // namespace
}  // namespace domgap
