// -*- mode: c++ -*-
#ifndef PERFADAPT_ADAPTATION_HPP
#define PERFADAPT_ADAPTATION_HPP

#include "perfadapt/auxiliary.hpp"
#include "perfadapt/dataset.hpp"
#include "perfadapt/measures.hpp"
#include "perfadapt/solver.hpp"

#include "json.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace perfadapt {

struct AdaptationParams {
    Hyperparams solver;
    /// Penalty scale on the ensemble weights; must be > 0.
    double B = 1.0;
};

/// decision(x) = sum_j a_j f_j(x) + w^T x, label = sign(decision).
struct AdaptedModel {
    std::vector<AuxiliaryPtr> auxiliaries;
    std::vector<double> ensemble_weights;  ///< a, one per auxiliary
    std::vector<double> delta_weights;     ///< w, over the original features
    double B = 1.0;
    Measure measure = Measure::error_rate;
    TrainStats stats;
    double xi = 0.0;
    /// Solver-space weights [sqrt(B) a ; w].
    std::vector<double> solution;

    [[nodiscard]] std::size_t aux_count() const noexcept { return auxiliaries.size(); }
    /// False if any auxiliary only replays stored predictions.
    [[nodiscard]] bool deployable() const noexcept;
};

/// n x m matrix of auxiliary outputs. Built-in classifiers are evaluated in
/// up to `jobs` threads; the result does not depend on `jobs`.
[[nodiscard]] LabelMatrix compute_aux_outputs(std::span<const AuxiliaryPtr> auxiliaries, const Dataset &data, std::size_t jobs = 1);

/// Augments with precomputed outputs, trains, and unpacks a = v[:m] / sqrt(B),
/// w = v[m:]. Throws parameter_error when there are no auxiliaries or the
/// output columns do not match them.
[[nodiscard]] AdaptedModel adapt_with_outputs(const Dataset &data, const LabelMatrix &outputs, std::vector<AuxiliaryPtr> auxiliaries, Measure m,
                                              const AdaptationParams &params, const TrainOptions &opts = {});

[[nodiscard]] AdaptedModel capo_adapt(const Dataset &data, std::vector<AuxiliaryPtr> auxiliaries, Measure m, const AdaptationParams &params,
                                      const TrainOptions &opts = {}, std::size_t jobs = 1);

/// Same solver with the original-feature columns dropped, so w = 0 and only
/// the ensemble weights are learned.
[[nodiscard]] AdaptedModel weighted_ensemble(const Dataset &data, const LabelMatrix &outputs, std::vector<AuxiliaryPtr> auxiliaries, Measure m,
                                             const AdaptationParams &params, const TrainOptions &opts = {});

struct AdaptedPrediction {
    double decision;
    Label label;
};

[[nodiscard]] AdaptedPrediction predict_adapted(const AdaptedModel &model, std::span<const Label> aux_row, const SparseVector &x);
/// Queries each auxiliary on x; external-prediction auxiliaries throw alignment_error.
[[nodiscard]] AdaptedPrediction predict_adapted(const AdaptedModel &model, const SparseVector &x);

[[nodiscard]] std::vector<double> adapted_decisions(const AdaptedModel &model, const Dataset &data, const LabelMatrix &outputs);
[[nodiscard]] std::vector<double> adapted_decisions(const AdaptedModel &model, const Dataset &data, std::size_t jobs = 1);

/// ||w||^2, the squared distance from the weighted auxiliary ensemble.
[[nodiscard]] double delta_norm(const AdaptedModel &model) noexcept;

// ---------------------------------------------------------------------------
// model files

[[nodiscard]] nlohmann::json linear_model_to_json(const LinearModel &model, Measure m, std::size_t dimension);
/// Returns the weight vector; throws format_error.
[[nodiscard]] std::vector<double> linear_weights_from_json(const nlohmann::json &j);

[[nodiscard]] nlohmann::json adapted_model_to_json(const AdaptedModel &model);
/// External-prediction auxiliaries come back as empty placeholders that keep
/// their source path; bind them with bind_external_predictions before use.
/// Throws format_error.
[[nodiscard]] AdaptedModel adapted_model_from_json(const nlohmann::json &j);
/// Replaces the external auxiliaries, in order, by predictions read from
/// `files` for a dataset of n examples. Throws alignment_error when the number
/// of files does not match.
void bind_external_predictions(AdaptedModel &model, std::span<const std::filesystem::path> files, std::size_t n);

}  // namespace perfadapt

#endif
