// -*- mode: c++ -*-
#ifndef PERFADAPT_DATASET_HPP
#define PERFADAPT_DATASET_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace perfadapt {

/// Binary class label. The numeric value is the usual -1/+1.
enum class Label : std::int8_t { negative = -1, positive = 1 };

using LabelVector = std::vector<Label>;

[[nodiscard]] constexpr int value(Label y) noexcept { return static_cast<int>(y); }

[[nodiscard]] constexpr Label flip(Label y) noexcept {
    return y == Label::positive ? Label::negative : Label::positive;
}

/// sign(0) = +1 throughout the library.
[[nodiscard]] constexpr Label sign_label(double score) noexcept {
    return score >= 0.0 ? Label::positive : Label::negative;
}

/// Converts -1/+1 to a Label; anything else throws labeling_error.
[[nodiscard]] Label label_from_int(long v);

struct Feature {
    std::uint32_t index;
    double value;

    friend bool operator==(const Feature &, const Feature &) = default;
};

/// Sorted (index, value) pairs. Indices are 0-based and strictly increasing,
/// values finite. Explicit zeros are allowed and never change a dot product.
class SparseVector {
  public:
    SparseVector() = default;
    /// Validates ordering and finiteness; throws parameter_error.
    explicit SparseVector(std::vector<Feature> entries);

    /// Keeps the nonzero entries of a dense vector.
    [[nodiscard]] static SparseVector from_dense(std::span<const double> dense);

    [[nodiscard]] std::span<const Feature> entries() const noexcept { return entries_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    /// 1 + largest stored index, 0 when empty.
    [[nodiscard]] std::size_t min_dimension() const noexcept;

    /// Entries with index >= dense.size() count as zero weight.
    [[nodiscard]] double dot(std::span<const double> dense) const noexcept;
    [[nodiscard]] double dot(const SparseVector &other) const noexcept;
    [[nodiscard]] double squared_norm() const noexcept;

    /// dense += scale * this. dense must cover min_dimension().
    void add_to(std::span<double> dense, double scale) const;
    [[nodiscard]] std::vector<double> to_dense(std::size_t dimension) const;
    /// Same values with every index increased by offset.
    [[nodiscard]] SparseVector shifted(std::uint32_t offset) const;

    friend bool operator==(const SparseVector &, const SparseVector &) = default;

  private:
    std::vector<Feature> entries_;
};

struct Example {
    SparseVector features;
    Label label;

    friend bool operator==(const Example &, const Example &) = default;
};

/// Immutable labeled sample. Keeps the class counts alongside the examples.
class Dataset {
  public:
    Dataset() = default;
    /// dimension is raised to 1 + max feature index when smaller.
    explicit Dataset(std::vector<Example> examples, std::size_t dimension = 0);

    [[nodiscard]] std::size_t size() const noexcept { return examples_.size(); }
    [[nodiscard]] bool empty() const noexcept { return examples_.empty(); }
    [[nodiscard]] std::size_t dimension() const noexcept { return dimension_; }
    [[nodiscard]] std::size_t positives() const noexcept { return positives_; }
    [[nodiscard]] std::size_t negatives() const noexcept { return examples_.size() - positives_; }

    [[nodiscard]] const Example &operator[](std::size_t i) const { return examples_[i]; }
    [[nodiscard]] std::span<const Example> examples() const noexcept { return examples_; }
    [[nodiscard]] LabelVector labels() const;

    /// Scores s_i = w^T x_i.
    [[nodiscard]] std::vector<double> scores(std::span<const double> w) const;

    /// Examples at the given positions, in that order; dimension is kept.
    [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;

    friend bool operator==(const Dataset &, const Dataset &) = default;

  private:
    std::vector<Example> examples_;
    std::size_t dimension_ = 0;
    std::size_t positives_ = 0;
};

/// Row-major n x m matrix of auxiliary classifier outputs.
class LabelMatrix {
  public:
    LabelMatrix() = default;
    LabelMatrix(std::size_t rows, std::size_t cols, Label fill = Label::positive);

    /// Builds from columns (one column per classifier); all must have equal length.
    [[nodiscard]] static LabelMatrix from_columns(std::span<const LabelVector> columns);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] Label operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    Label &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    [[nodiscard]] std::span<const Label> row(std::size_t r) const {
        return std::span<const Label>{ data_ }.subspan(r * cols_, cols_);
    }
    [[nodiscard]] LabelVector column(std::size_t c) const;
    [[nodiscard]] LabelMatrix subset_rows(std::span<const std::size_t> indices) const;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Label> data_;
};

/// Training set whose examples are x'_i = [f_i / sqrt(B) ; x_i]: auxiliary outputs
/// occupy indices [0, m), original features are shifted by m.
struct AugmentedDataset {
    Dataset base;
    LabelMatrix aux_outputs;
    double B = 1.0;
    Dataset augmented;

    [[nodiscard]] std::size_t aux_count() const noexcept { return aux_outputs.cols(); }
};

/// Throws parameter_error for B <= 0 (or non-finite) and shape_error when the
/// row count differs from base.size().
[[nodiscard]] AugmentedDataset augment(const Dataset &base, const LabelMatrix &aux_outputs, double B);

/// Same prefix construction, but for a single feature vector.
[[nodiscard]] SparseVector augment_features(const SparseVector &x, std::span<const Label> aux_row, double B);

/// Reads SVMlight text: "<+-1> <idx>:<val> ...", 1-based strictly increasing
/// indices, '#' comments. Labels 1/+1/-1 only.
[[nodiscard]] Dataset parse_svmlight(std::istream &in);
[[nodiscard]] Dataset parse_svmlight(const std::string &text);
[[nodiscard]] Dataset read_svmlight_file(const std::filesystem::path &path);

/// Writes with 1-based indices and round-trip precision.
void write_svmlight(std::ostream &out, const Dataset &data);
void write_svmlight_file(const std::filesystem::path &path, const Dataset &data);

/// Per-feature max-abs scaling fitted on one dataset and applied to others.
class MaxAbsScaler {
  public:
    [[nodiscard]] static MaxAbsScaler fit(const Dataset &data);
    [[nodiscard]] Dataset apply(const Dataset &data) const;
    [[nodiscard]] std::span<const double> factors() const noexcept { return factors_; }

  private:
    std::vector<double> factors_;
};

/// Observer called with every path the library opens for reading. Used by the
/// harness tests to audit file access; pass an empty function to clear.
using FileAccessHook = std::function<void(const std::filesystem::path &)>;
void set_file_access_hook(FileAccessHook hook);
void notify_file_access(const std::filesystem::path &path);

}  // namespace perfadapt

#endif
