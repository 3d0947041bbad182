#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "domgap/error.hpp"

namespace domgap {

/// Activation depths of the FID Inception network; the value is the feature dimension.
enum class Depth : int { Pool1 = 64, Pool2 = 192, PreAux = 768, Final = 2048 };

inline constexpr std::array<Depth, 4> kAllDepths = {Depth::Pool1, Depth::Pool2, Depth::PreAux,
                                                    Depth::Final};

inline std::optional<Depth> depth_from_int(long long v) {
    for (Depth d : kAllDepths)
        if (static_cast<long long>(d) == v) return d;
    return std::nullopt;
}

inline int dim_of(Depth d) noexcept { return static_cast<int>(d); }

// ---------------------------------------------------------------------------
// EMB1 file format
//
//   "EMB1" | u32 n | u32 dim | n*dim float32, row-major, all little-endian
// ---------------------------------------------------------------------------

/// Raw contents of an EMB1 file, values kept at their stored precision.
struct EmbeddingMatrix {
    std::uint32_t n = 0;
    std::uint32_t dim = 0;
    std::vector<float> values;  // n*dim, row-major

    float at(std::size_t row, std::size_t col) const { return values[row * dim + col]; }
};

namespace detail {
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace detail

inline constexpr char kEmbeddingMagic[4] = {'E', 'M', 'B', '1'};

inline std::vector<unsigned char> encode_embeddings(const EmbeddingMatrix& m) {
    if (m.values.size() != static_cast<std::size_t>(m.n) * m.dim)
        throw InvalidArgument("embedding buffer length does not match n*dim");
    std::vector<unsigned char> out(kEmbeddingMagic, kEmbeddingMagic + 4);
    out.reserve(12 + m.values.size() * 4);
    detail::put_u32(out, m.n);
    detail::put_u32(out, m.dim);
    for (float v : m.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

/// Parses EMB1 bytes; rejects a wrong magic, a truncated payload or trailing bytes.
inline EmbeddingMatrix decode_embeddings(std::span<const unsigned char> bytes,
                                         const std::string& name = "embedding file") {
    if (bytes.size() < 12) throw ParseError(name + ": truncated header");
    if (std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0)
        throw ParseError(name + ": bad magic (expected EMB1)");
    EmbeddingMatrix m;
    m.n = detail::get_u32(bytes.data() + 4);
    m.dim = detail::get_u32(bytes.data() + 8);
    const std::uint64_t count = static_cast<std::uint64_t>(m.n) * m.dim;
    const std::uint64_t payload = bytes.size() - 12;
    if (payload < count * 4)
        throw ParseError(name + ": truncated payload (" + std::to_string(payload) + " of " +
                         std::to_string(count * 4) + " bytes)");
    if (payload > count * 4) throw ParseError(name + ": trailing bytes after payload");
    m.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i)
        m.values[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + 12 + 4 * i));
    return m;
}

inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                           std::istreambuf_iterator<char>());
    return decode_embeddings(bytes, path.string());
}

inline void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
    const auto bytes = encode_embeddings(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write embedding file " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

/// Metadata stored next to an EMB1 file as "<file>.json".
struct EmbeddingSidecar {
    int depth_label = 0;
    std::string source_collection;
    std::string extractor_id;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& embedding_file) {
    return embedding_file.string() + ".json";
}

inline EmbeddingSidecar read_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open sidecar " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        return {j.at("depth_label").get<int>(), j.at("source_collection").get<std::string>(),
                j.at("extractor_id").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": invalid sidecar: " + e.what());
    }
}

inline void write_sidecar(const std::filesystem::path& path, const EmbeddingSidecar& s) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write sidecar " + path.string());
    out << nlohmann::json{{"depth_label", s.depth_label},
                          {"source_collection", s.source_collection},
                          {"extractor_id", s.extractor_id}}
               .dump(2)
        << '\n';
}

/// Embeddings of one image collection at one depth.
/// Invariants: dim == depth, n >= 2, all values finite.
class EmbeddingSet {
public:
    EmbeddingSet(Depth depth, EmbeddingMatrix matrix) : depth_(depth), matrix_(std::move(matrix)) {
        if (static_cast<int>(matrix_.dim) != dim_of(depth_))
            throw InvalidArgument("embedding dim " + std::to_string(matrix_.dim) +
                                  " does not match depth label " + std::to_string(dim_of(depth_)));
        if (matrix_.n < 2) throw InvalidArgument("embedding set needs at least 2 samples");
        for (float v : matrix_.values)
            if (!std::isfinite(v)) throw InvalidArgument("embedding set contains non-finite values");
    }

    Depth depth() const noexcept { return depth_; }
    std::size_t size() const noexcept { return matrix_.n; }
    std::size_t dim() const noexcept { return matrix_.dim; }
    const EmbeddingMatrix& matrix() const noexcept { return matrix_; }

    /// Samples as an n x dim double matrix.
    Eigen::MatrixXd to_matrix() const {
        Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
            matrix_.values.data(), matrix_.n, matrix_.dim);
        return m.cast<double>();
    }

private:
    Depth depth_;
    EmbeddingMatrix matrix_;
};

/// Reads an EMB1 file and validates it against `depth`.
inline EmbeddingSet load_embedding_set(const std::filesystem::path& path, Depth depth) {
    try {
        return EmbeddingSet(depth, read_embeddings(path));
    } catch (const InvalidArgument& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Gaussian fit and Frechet distance
// ---------------------------------------------------------------------------

struct GaussianFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    std::size_t sample_count = 0;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
    /// Fewer samples than dimensions: the covariance is singular.
    bool rank_deficient() const noexcept { return sample_count < dim(); }
};

/// Column means and unbiased (n-1) covariance of the rows of `samples`.
inline GaussianFit fit_gaussian(const Eigen::MatrixXd& samples) {
    if (samples.rows() < 2) throw InvalidArgument("Gaussian fit needs at least 2 samples");
    if (!samples.allFinite()) throw InvalidArgument("Gaussian fit input contains non-finite values");
    GaussianFit fit;
    fit.sample_count = static_cast<std::size_t>(samples.rows());
    fit.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - fit.mean.transpose();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(samples.cols(), samples.cols());
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
    cov /= static_cast<double>(samples.rows() - 1);
    fit.cov = (cov + cov.transpose()) / 2.0;
    return fit;
}

inline GaussianFit fit_gaussian(const EmbeddingSet& e) { return fit_gaussian(e.to_matrix()); }

namespace detail {
inline void require_symmetric(const Eigen::MatrixXd& m, double tol, const char* what) {
    if (m.rows() != m.cols()) throw InvalidArgument(std::string(what) + ": matrix is not square");
    const double scale = std::max(1.0, m.norm());
    if ((m - m.transpose()).norm() > tol * scale)
        throw InvalidArgument(std::string(what) + ": matrix is not symmetric");
}
}  // namespace detail

/// Principal square root of a symmetric PSD matrix via symmetric
/// eigendecomposition; negative eigenvalues are clamped to zero.
inline Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m, double symmetry_tol = 1e-9) {
    detail::require_symmetric(m, symmetry_tol, "sqrtm_psd");
    if (!m.allFinite()) throw NumericError("sqrtm_psd: non-finite input");
    const Eigen::MatrixXd sym = (m + m.transpose()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericError("sqrtm_psd: eigendecomposition failed");
    const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd s = es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
    return (s + s.transpose()) / 2.0;
}

/// A Gaussian together with the square root of its covariance, so that one
/// reference can be compared against many candidates.
struct FrechetOperand {
    GaussianFit fit;
    Eigen::MatrixXd sqrt_cov;

    explicit FrechetOperand(GaussianFit f) : fit(std::move(f)), sqrt_cov(sqrtm_psd(fit.cov)) {}
};

struct FrechetResult {
    double distance = 0;
    bool regularized = false;  // eps*I was added to both covariances
};

namespace detail {

// Tr((sa * B * sa)^{1/2}) from the eigenvalues of the symmetric product.
// Empty when the eigenvalues show the product is not numerically PSD.
inline std::optional<double> trace_sqrt_product(const Eigen::MatrixXd& sqrt_a,
                                                const Eigen::MatrixXd& b) {
    Eigen::MatrixXd p = sqrt_a * b * sqrt_a;
    p = (p + p.transpose()) / 2.0;
    if (!p.allFinite()) return std::nullopt;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double largest = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -1e-8 * largest) return std::nullopt;
    double tr = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) tr += std::sqrt(std::max(ev[i], 0.0));
    return tr;
}

inline double finish_distance(double d) {
    if (!std::isfinite(d)) throw NumericError("Frechet distance is not finite");
    if (d < 0) {
        if (d >= -1e-6) return 0.0;
        throw NumericError("Frechet distance is negative (" + std::to_string(d) + ")");
    }
    return d;
}

}  // namespace detail

/// ||mu_a - mu_b||^2 + Tr(A + B - 2 (A^{1/2} B A^{1/2})^{1/2}).
/// If the inner square root is not numerically PSD, retries once with
/// A + eps*I and B + eps*I and reports it through `regularized`.
inline FrechetResult frechet_distance(const FrechetOperand& a, const FrechetOperand& b,
                                      double eps = 1e-6) {
    if (a.fit.dim() != b.fit.dim())
        throw InvalidArgument("Frechet distance: dimension mismatch (" +
                              std::to_string(a.fit.dim()) + " vs " + std::to_string(b.fit.dim()) + ")");
    const double mean_term = (a.fit.mean - b.fit.mean).squaredNorm();
    const double trace_a = a.fit.cov.trace();
    const double trace_b = b.fit.cov.trace();

    if (auto tr = detail::trace_sqrt_product(a.sqrt_cov, b.fit.cov))
        return {detail::finish_distance(mean_term + trace_a + trace_b - 2.0 * *tr), false};

    const auto n = static_cast<Eigen::Index>(a.fit.dim());
    const Eigen::MatrixXd reg = eps * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd sqrt_a = sqrtm_psd(a.fit.cov + reg);
    const auto tr = detail::trace_sqrt_product(sqrt_a, b.fit.cov + reg);
    if (!tr) throw NumericError("Frechet distance: square root failed even after regularization");
    const double d = mean_term + trace_a + trace_b + 2.0 * eps * static_cast<double>(n) - 2.0 * *tr;
    return {detail::finish_distance(d), true};
}

inline FrechetResult frechet_distance(const GaussianFit& a, const GaussianFit& b, double eps = 1e-6) {
    if (a.dim() != b.dim())
        throw InvalidArgument("Frechet distance: dimension mismatch (" + std::to_string(a.dim()) +
                              " vs " + std::to_string(b.dim()) + ")");
    return frechet_distance(FrechetOperand(a), FrechetOperand(b), eps);
}

/// Score of a candidate expressed as a fraction of the baseline's score.
inline double normalized_fid(double candidate_vs_reference, double baseline_vs_reference) {
    if (!(baseline_vs_reference > 0))
        throw InvalidArgument("normalized FID needs a positive baseline score");
    return candidate_vs_reference / baseline_vs_reference;
}

}  // namespace domgap
