// -*- mode: c++ -*-
#ifndef PERFADAPT_MEASURES_HPP
#define PERFADAPT_MEASURES_HPP

#include "perfadapt/dataset.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace perfadapt {

enum class Measure { error_rate, f1, prbep, auc };

inline constexpr std::array<Measure, 4> all_measures{ Measure::error_rate, Measure::f1, Measure::prbep, Measure::auc };

/// "err", "f1", "prbep", "auc" (case-insensitive); throws parameter_error otherwise.
[[nodiscard]] Measure parse_measure(std::string_view name);
[[nodiscard]] std::string_view measure_name(Measure m) noexcept;
/// Column title used in reports ("Accuracy", "F1", "PRBEP", "AUC").
[[nodiscard]] std::string_view measure_title(Measure m) noexcept;

/// True when the measure needs both classes present.
[[nodiscard]] constexpr bool needs_both_classes(Measure m) noexcept { return m != Measure::error_rate; }

/// Throws measure_undefined_error when the class counts do not support the measure.
void require_defined(Measure m, std::size_t positives, std::size_t negatives);

struct ContingencyTable {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    [[nodiscard]] std::size_t positives() const noexcept { return tp + fn; }
    [[nodiscard]] std::size_t negatives() const noexcept { return fp + tn; }
    [[nodiscard]] std::size_t total() const noexcept { return tp + fp + fn + tn; }

    friend bool operator==(const ContingencyTable &, const ContingencyTable &) = default;
};

[[nodiscard]] ContingencyTable contingency(std::span<const Label> truth, std::span<const Label> predicted);

/// Loss on the 0..100 scale for the contingency-table measures. AUC is not a
/// contingency measure and throws parameter_error; use auc_loss.
[[nodiscard]] double loss(Measure m, const ContingencyTable &ct);

/// Which positive/negative pairs a pairwise label assignment puts in the wrong
/// order. Positives and negatives are numbered by their order of appearance in
/// the dataset; pair (i, j) is positive #i against negative #j.
///
/// Either explicit (one flag per pair) or a threshold rule: pair (i, j) is
/// swapped iff positive_key[i] < negative_key[j]. The threshold form costs
/// O(p + q) memory and is turned explicit by the first set_swapped call.
class PairAssignment {
  public:
    PairAssignment() = default;
    PairAssignment(std::size_t positives, std::size_t negatives) :
        positives_{ positives },
        negatives_{ negatives },
        swapped_(positives * negatives, 0) {}

    [[nodiscard]] static PairAssignment by_threshold(std::vector<double> positive_keys, std::vector<double> negative_keys);

    [[nodiscard]] std::size_t positives() const noexcept { return positives_; }
    [[nodiscard]] std::size_t negatives() const noexcept { return negatives_; }
    [[nodiscard]] bool swapped(std::size_t i, std::size_t j) const {
        return threshold_ ? positive_keys_[i] < negative_keys_[j] : swapped_[i * negatives_ + j] != 0;
    }
    void set_swapped(std::size_t i, std::size_t j, bool v);
    [[nodiscard]] std::size_t swapped_count() const noexcept;
    [[nodiscard]] bool is_threshold() const noexcept { return threshold_; }

    /// Compares pair by pair, whatever the representation.
    friend bool operator==(const PairAssignment &a, const PairAssignment &b);

  private:
    std::size_t positives_ = 0;
    std::size_t negatives_ = 0;
    std::vector<std::uint8_t> swapped_;
    bool threshold_ = false;
    std::vector<double> positive_keys_;
    std::vector<double> negative_keys_;
    std::size_t threshold_count_ = 0;
};

/// 100 * swapped / (p q). truth provides p and q; throws measure_undefined_error
/// when either is zero and shape_error when the assignment does not match.
[[nodiscard]] double auc_loss(std::span<const Label> truth, const PairAssignment &pairs);

/// Test-time metric in [0, 1] from real-valued scores (higher = more positive):
///   error_rate -> accuracy, thresholding at 0 (score >= 0 is +1)
///   f1         -> F1 of the thresholded predictions
///   prbep      -> precision of the top-p scores (ties: lower index first)
///   auc        -> (correct pairs + ties / 2) / (p q)
[[nodiscard]] double evaluate(Measure m, std::span<const Label> truth, std::span<const double> scores);

/// Same metric from hard +-1 predictions, treated as scores.
[[nodiscard]] double evaluate_predictions(Measure m, std::span<const Label> truth, std::span<const Label> predicted);

}  // namespace perfadapt

#endif
