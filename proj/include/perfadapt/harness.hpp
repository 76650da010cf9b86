// -*- mode: c++ -*-
#ifndef PERFADAPT_HARNESS_HPP
#define PERFADAPT_HARNESS_HPP

#include "perfadapt/adaptation.hpp"
#include "perfadapt/auxiliary.hpp"
#include "perfadapt/dataset.hpp"
#include "perfadapt/measures.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace perfadapt {

/// Grid syntax: "0.5,1,4" (list), "2^3" (power of two), "2^-7:2^7" (all powers
/// of two between the exponents), or a comma list mixing these. Throws
/// usage_error on an empty or malformed grid and on non-positive values.
[[nodiscard]] std::vector<double> parse_grid(std::string_view text);
[[nodiscard]] std::vector<double> default_c_grid();

/// Auxiliary learner spec:
///   tree[:depth=12,min_leaf=5,seed=1]
///   sgd[:lambda=1e-4,epochs=20,seed=7]
///   pred:<train predictions>[,test=<test predictions>]
struct AuxSpec {
    enum class Kind { tree, sgd, pred };
    Kind kind = Kind::tree;
    TreeParams tree;
    SgdParams sgd;
    std::filesystem::path train_predictions;
    std::filesystem::path test_predictions;
    std::string text;  ///< as given

    [[nodiscard]] bool builtin() const noexcept { return kind != Kind::pred; }
};
[[nodiscard]] AuxSpec parse_aux_spec(std::string_view text);

struct ExperimentConfig {
    std::filesystem::path data;
    std::filesystem::path test;
    Measure measure = Measure::error_rate;
    std::vector<double> c_grid = default_c_grid();
    std::vector<double> b_grid{ 1.0 };
    double epsilon = 0.1;
    std::size_t max_iterations = 5000;
    std::vector<AuxSpec> aux;
    std::size_t folds = 5;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    std::filesystem::path out;
    bool strict = false;

    // eval
    std::filesystem::path model;
    std::vector<std::filesystem::path> aux_predictions;

    /// Throws usage_error (empty grids, folds < 2, missing --data, ...).
    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Fills `config` from a TOML file. Keys: data, test, measure, C, B, epsilon,
/// max_iterations, aux, folds, seed, jobs, out, strict, model,
/// aux_pred. C and B accept a number, an array of numbers, or a grid string.
/// Throws usage_error on unknown keys or wrong types.
void load_config_file(const std::filesystem::path &path, ExperimentConfig &config);
void load_config_text(std::string_view toml_text, ExperimentConfig &config);

// ---------------------------------------------------------------------------
// audit trail

/// Thread-safe ordered event log ("open <path>", "cv begin", "cv end", ...).
class AuditLog {
  public:
    void record(std::string event);
    [[nodiscard]] std::vector<std::string> events() const;

  private:
    mutable std::mutex mutex_;
    std::vector<std::string> events_;
};

/// Routes data/prediction file opens into `log` while alive.
class ScopedFileAudit {
  public:
    explicit ScopedFileAudit(AuditLog &log);
    ~ScopedFileAudit();
    ScopedFileAudit(const ScopedFileAudit &) = delete;
    ScopedFileAudit &operator=(const ScopedFileAudit &) = delete;
};

// ---------------------------------------------------------------------------
// building blocks

/// Runs task(i) for i in [0, count) on up to `jobs` threads. Exceptions are
/// rethrown after all tasks finish, lowest index first.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)> &task);

/// Stratified fold ids: indices are shuffled with `seed`, then positives and
/// then negatives are dealt round-robin. Throws usage_error unless
/// 2 <= folds <= n.
[[nodiscard]] std::vector<std::size_t> fold_assignment(std::span<const Label> labels, std::size_t folds, std::uint64_t seed);

/// Auxiliaries fitted on a set of training rows, able to produce outputs on
/// any rows of the same training set or on a test set.
class AuxiliaryPool {
  public:
    /// Loads the training predictions of pred: specs (aligned to `train`).
    AuxiliaryPool(std::vector<AuxSpec> specs, const Dataset &train);

    struct Fitted {
        std::vector<AuxiliaryPtr> models;
    };

    /// Trains the built-in learners on train.subset(rows).
    [[nodiscard]] Fitted fit(std::span<const std::size_t> rows) const;
    [[nodiscard]] Fitted fit_all() const;
    [[nodiscard]] LabelMatrix outputs_on_rows(const Fitted &fitted, std::span<const std::size_t> rows, std::size_t jobs) const;
    /// Built-ins predict on `test`; pred: specs read their test= file.
    /// Throws alignment_error when a pred: spec has no test file.
    [[nodiscard]] LabelMatrix outputs_on_test(const Fitted &fitted, const Dataset &test, std::size_t jobs) const;

    [[nodiscard]] std::size_t size() const noexcept { return specs_.size(); }
    [[nodiscard]] const std::vector<AuxSpec> &specs() const noexcept { return specs_; }

  private:
    std::vector<AuxSpec> specs_;
    const Dataset *train_;
    std::vector<std::optional<ExternalPredictions>> train_predictions_;
};

struct CvResult {
    std::vector<double> grid;
    std::vector<std::vector<double>> fold_scores;  ///< [grid point][fold]
    std::vector<double> means;
    std::size_t chosen = 0;
    std::size_t nonconverged = 0;
    std::size_t folds = 0;
    [[nodiscard]] double chosen_c() const { return grid[chosen]; }
};

inline constexpr std::string_view selection_rule = "highest mean validation score over folds; ties -> smallest C";

/// k-fold selection of C for plain training (pool == nullptr) or adaptation
/// with the pool's auxiliaries refit on every fold's training part.
[[nodiscard]] CvResult cross_validate(const Dataset &train, const ExperimentConfig &config, const AuxiliaryPool *pool, double B, AuditLog *audit = nullptr);

/// accuracy/f1/prbep/auc of the scores; measures undefined on the labels are null.
[[nodiscard]] nlohmann::json all_metrics(std::span<const Label> truth, std::span<const double> scores);

// ---------------------------------------------------------------------------
// commands

struct RunOutcome {
    nlohmann::json report;     ///< "timing" holds wall-clock durations
    std::string table;         ///< aligned plain-text summary
    nlohmann::json model;      ///< null when the command produces no model
    std::size_t nonconverged = 0;
};

[[nodiscard]] RunOutcome run_train(const ExperimentConfig &config, AuditLog *audit = nullptr);
[[nodiscard]] RunOutcome run_adapt(const ExperimentConfig &config, AuditLog *audit = nullptr);
[[nodiscard]] RunOutcome run_eval(const ExperimentConfig &config, AuditLog *audit = nullptr);
[[nodiscard]] RunOutcome run_sweep(const ExperimentConfig &config, AuditLog *audit = nullptr);
[[nodiscard]] RunOutcome run_bench(const ExperimentConfig &config, AuditLog *audit = nullptr);

/// Writes report.json, report.txt and (if present) model.json into `dir`.
void write_outcome(const std::filesystem::path &dir, const RunOutcome &outcome);

/// Process exit code for an exception escaping a command: 2 usage/config,
/// 3 data/alignment, 4 non-convergence, 1 anything else.
[[nodiscard]] int exit_code_for(const std::exception &e) noexcept;

}  // namespace perfadapt

#endif
