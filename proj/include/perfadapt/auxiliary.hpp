// -*- mode: c++ -*-
#ifndef PERFADAPT_AUXILIARY_HPP
#define PERFADAPT_AUXILIARY_HPP

#include "perfadapt/dataset.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace perfadapt {

/// A black-box +-1 predictor handed to the adaptation step.
class AuxiliaryClassifier {
  public:
    virtual ~AuxiliaryClassifier() = default;

    /// Predictions for every example, in order.
    [[nodiscard]] virtual LabelVector predict(const Dataset &data) const;
    /// Single-example prediction; classifiers without a feature-based model
    /// (external predictions) throw alignment_error.
    [[nodiscard]] virtual Label predict_one(const SparseVector &x) const = 0;
    /// False when the classifier can only reproduce stored predictions.
    [[nodiscard]] virtual bool deployable() const noexcept { return true; }
    /// Identity tag: kind plus a short training summary.
    [[nodiscard]] virtual std::string name() const = 0;
    /// Self-describing JSON ("kind", parameters, weights/tree).
    [[nodiscard]] virtual nlohmann::json to_json() const = 0;
};

using AuxiliaryPtr = std::shared_ptr<const AuxiliaryClassifier>;

// ---------------------------------------------------------------------------
// CART-style decision tree

struct TreeParams {
    std::size_t max_depth = 12;
    std::size_t min_leaf_size = 5;
    std::uint64_t seed = 1;
};

class TreeModel final : public AuxiliaryClassifier {
  public:
    struct Node {
        // internal node: x[feature] <= threshold goes left
        std::uint32_t feature = 0;
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        Label leaf = Label::positive;

        [[nodiscard]] bool is_leaf() const noexcept { return left < 0; }
        friend bool operator==(const Node &, const Node &) = default;
    };

    TreeModel(std::vector<Node> nodes, TreeParams params);

    [[nodiscard]] Label predict_one(const SparseVector &x) const override;
    [[nodiscard]] std::string name() const override;
    [[nodiscard]] nlohmann::json to_json() const override;

    [[nodiscard]] const std::vector<Node> &nodes() const noexcept { return nodes_; }
    [[nodiscard]] const TreeParams &params() const noexcept { return params_; }
    [[nodiscard]] std::size_t depth() const;

    [[nodiscard]] static TreeModel from_json(const nlohmann::json &j);

  private:
    std::vector<Node> nodes_;  // nodes_[0] is the root
    TreeParams params_;
};

/// Greedy top-down splits maximizing Gini reduction over midpoint thresholds.
/// Throws training_error on an empty dataset.
[[nodiscard]] TreeModel train_tree(const Dataset &data, const TreeParams &params);

// ---------------------------------------------------------------------------
// linear hinge-loss SGD

struct SgdParams {
    double lambda = 1e-4;
    std::size_t epochs = 20;
    std::uint64_t seed = 7;
};

class LinearSgdModel final : public AuxiliaryClassifier {
  public:
    LinearSgdModel(std::vector<double> weights, double bias, SgdParams params);

    [[nodiscard]] Label predict_one(const SparseVector &x) const override;
    [[nodiscard]] std::string name() const override;
    [[nodiscard]] nlohmann::json to_json() const override;

    [[nodiscard]] double decision(const SparseVector &x) const noexcept { return x.dot(weights_) + bias_; }
    [[nodiscard]] const std::vector<double> &weights() const noexcept { return weights_; }
    [[nodiscard]] double bias() const noexcept { return bias_; }
    [[nodiscard]] const SgdParams &params() const noexcept { return params_; }

    [[nodiscard]] static LinearSgdModel from_json(const nlohmann::json &j);

  private:
    std::vector<double> weights_;
    double bias_;
    SgdParams params_;
};

/// Stochastic subgradient descent on the L2-regularized hinge loss, step
/// 1/(lambda t), one seeded shuffle per epoch. The bias is learned as the weight
/// of a constant feature. Throws training_error unless both classes are present.
[[nodiscard]] LinearSgdModel train_linear_sgd(const Dataset &data, const SgdParams &params);

// ---------------------------------------------------------------------------
// externally produced predictions

class ExternalPredictions final : public AuxiliaryClassifier {
  public:
    ExternalPredictions(LabelVector predictions, std::filesystem::path source);

    [[nodiscard]] LabelVector predict(const Dataset &data) const override;
    [[nodiscard]] Label predict_one(const SparseVector &x) const override;
    [[nodiscard]] bool deployable() const noexcept override { return false; }
    [[nodiscard]] std::string name() const override;
    [[nodiscard]] nlohmann::json to_json() const override;

    [[nodiscard]] const LabelVector &predictions() const noexcept { return predictions_; }
    [[nodiscard]] const std::filesystem::path &source() const noexcept { return source_; }

  private:
    LabelVector predictions_;
    std::filesystem::path source_;
};

/// Reads one signed numeric token per example (whitespace separated); the sign
/// is the prediction. Count mismatch or a missing file -> alignment_error,
/// zero or non-numeric token -> labeling_error.
[[nodiscard]] ExternalPredictions load_external_predictions(const std::filesystem::path &path, std::size_t expected_n);

/// Rebuilds a built-in classifier from its JSON; throws format_error.
[[nodiscard]] AuxiliaryPtr auxiliary_from_json(const nlohmann::json &j);

}  // namespace perfadapt

#endif
