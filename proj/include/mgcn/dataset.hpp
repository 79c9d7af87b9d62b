#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mgcn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One feature vector per collection element, row-major, 64-bit internally.
class FeatureMatrix {
public:
    FeatureMatrix() = default;

    /// Throws ValidationError on non-finite entries or n < 2 / d < 1.
    explicit FeatureMatrix(RowMatrix values);

    std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }

    std::span<const double> row(std::size_t i) const {
        return {values_.data() + i * cols(), cols()};
    }
    const RowMatrix& values() const { return values_; }

private:
    RowMatrix values_;
};

enum class FeatureFormat { csv, binary };

/// csv for a ".csv" extension, binary otherwise.
FeatureFormat format_from_path(const std::filesystem::path& path);

FeatureMatrix load_features(const std::filesystem::path& path, FeatureFormat format);
void save_features(const std::filesystem::path& path, const FeatureMatrix& x, FeatureFormat format);

// FMAT block: "FMAT", u32 n, u32 d, n*d float32, all little-endian.
RowMatrix read_fmat(const std::filesystem::path& path);
void write_fmat(const std::filesystem::path& path, const Eigen::Ref<const RowMatrix>& m);

inline constexpr int kUnlabeled = -1;

/// Partial labeling of n nodes with dense class ids 0..c-1.
struct LabelAssignment {
    std::size_t n = 0;
    int num_classes = 0;
    std::vector<int> labels;              // size n, kUnlabeled for absent entries
    std::vector<std::string> class_names; // class id -> original label string

    bool is_labeled(std::size_t i) const { return labels[i] != kUnlabeled; }
    std::size_t labeled_count() const;
    bool complete() const;

    /// Copy keeping only the nodes in `keep`; class ids and names are preserved.
    LabelAssignment restricted_to(std::span<const std::size_t> keep) const;
};

/// Lines "index,label_string". Label strings get class ids by first appearance.
/// When `n` is given, indices must be < n; otherwise n = max index + 1.
LabelAssignment load_labels(const std::filesystem::path& path,
                            std::optional<std::size_t> n = std::nullopt);
void save_labels(const std::filesystem::path& path, const LabelAssignment& labels);

struct FoldPlan {
    std::size_t n = 0;
    std::size_t num_folds = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> assignment;  // node -> fold id

    std::vector<std::size_t> members(std::size_t fold) const;
    std::vector<std::size_t> non_members(std::size_t fold) const;
};

/// Seeded shuffle of 0..n-1 dealt round-robin into folds (not stratified).
FoldPlan make_folds(std::size_t n, std::size_t num_folds, std::uint64_t seed);

struct SyntheticData {
    FeatureMatrix features;
    LabelAssignment labels;
};

/// Gaussian blobs around c centers drawn uniformly in [-1,1]^d; point i belongs to class i mod c.
SyntheticData synth_blobs(std::size_t n, int c, std::size_t d, double spread, std::uint64_t seed);

/// splitmix64 finalizer, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace mgcn
