// -*- mode: c++ -*-
#ifndef PERFADAPT_INFERENCE_HPP
#define PERFADAPT_INFERENCE_HPP

#include "perfadapt/dataset.hpp"
#include "perfadapt/measures.hpp"

#include <cstddef>
#include <span>
#include <variant>

namespace perfadapt {

// Most-violated-constraint search for the structural formulation
//
//   argmax_{y' admissible}  Delta(y, y') + w^T Psi(x, y')
//
// Contingency measures use Psi(x, y') = sum_i y'_i x_i. AUC uses the pairwise
// map Psi(x, y') = (1/pq) sum_{i pos, j neg} y'_ij (x_i - x_j), with y'_ij = -1
// for a swapped pair, so a swapped pair contributes 2 (x_i - x_j) / (pq) to the
// feature delta and 100 / (pq) to the loss.

/// Label vector for contingency measures, pair assignment for AUC.
using Witness = std::variant<LabelVector, PairAssignment>;

/// One cutting plane: feature_delta = Psi(x, y) - Psi(x, y'), loss = Delta(y, y').
struct ConstraintRecord {
    SparseVector feature_delta;
    double loss = 0.0;
    Witness witness;
};

/// Score gap below which a positive/negative pair is swapped by the AUC argmax.
inline constexpr double auc_swap_margin = 50.0;

/// Exhaustive search is limited to 2^16 candidates.
inline constexpr std::size_t brute_force_limit = 16;

/// O(n log n + pq) grid search over (a, b) = (#positives predicted +1,
/// #negatives predicted +1) using prefix sums of sorted scores. PRBEP keeps a + b = p.
[[nodiscard]] ConstraintRecord most_violated_contingency(std::span<const double> w, const Dataset &data, Measure m);

/// AUC by the sorted-offset method: positives are shifted down and negatives up
/// by half the swap margin, and per-example swap counts come from binary search.
[[nodiscard]] ConstraintRecord most_violated_auc(std::span<const double> w, const Dataset &data);

/// AUC by deciding every pair independently. Same result as most_violated_auc;
/// kept as a cross-check.
[[nodiscard]] ConstraintRecord most_violated_auc_pairwise(std::span<const double> w, const Dataset &data);

/// Dispatches on the measure.
[[nodiscard]] ConstraintRecord most_violated(std::span<const double> w, const Dataset &data, Measure m);

/// Exhaustive enumeration of the admissible set. Needs n <= 16 for contingency
/// measures and p*q <= 16 for AUC, otherwise throws capacity_error.
[[nodiscard]] ConstraintRecord brute_force_most_violated(std::span<const double> w, const Dataset &data, Measure m);

/// Rebuilds feature_delta and loss from a witness.
[[nodiscard]] ConstraintRecord record_from_witness(const Dataset &data, Measure m, Witness witness);

/// Delta(y, y') + w^T Psi(x, y') for the record's witness.
[[nodiscard]] double constraint_objective(std::span<const double> w, const Dataset &data, Measure m, const ConstraintRecord &rec);

/// w^T Psi(x, y) for the true labels.
[[nodiscard]] double true_label_objective(std::span<const double> w, const Dataset &data, Measure m);

/// loss - w^T feature_delta.
[[nodiscard]] double violation(std::span<const double> w, const ConstraintRecord &rec) noexcept;

/// Loss of the prediction argmax_{y' admissible} w^T Psi(x, y'): sign(s_i) for
/// error/F1, the top-p scores for PRBEP, pairs with s_i < s_j swapped for AUC.
[[nodiscard]] double prediction_loss(std::span<const double> w, const Dataset &data, Measure m);

}  // namespace perfadapt

#endif
