// -*- mode: c++ -*-
#ifndef PERFADAPT_SOLVER_HPP
#define PERFADAPT_SOLVER_HPP

#include "perfadapt/dataset.hpp"
#include "perfadapt/inference.hpp"
#include "perfadapt/measures.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace perfadapt {

struct Hyperparams {
    double C = 1.0;
    /// Stopping tolerance on the 0..100 loss scale.
    double epsilon = 0.1;
    std::size_t max_iterations = 5000;
    /// Constraints whose alpha stayed 0 this many outer iterations are dropped.
    std::size_t prune_after = 50;

    /// Throws parameter_error unless C > 0, epsilon > 0, max_iterations > 0.
    void validate() const;
};

/// Constraints of the restricted problem with their dual multipliers and the
/// cached Gram matrix H(k, l) = <delta_k, delta_l>.
class WorkingSet {
  public:
    /// New constraints enter with alpha = 0; one Gram row is computed.
    void add(ConstraintRecord rec);
    /// Removes the constraints whose flag is set.
    void remove_if(const std::vector<bool> &drop);

    [[nodiscard]] std::size_t size() const noexcept { return constraints_.size(); }
    [[nodiscard]] bool empty() const noexcept { return constraints_.empty(); }
    [[nodiscard]] std::span<const ConstraintRecord> constraints() const noexcept { return constraints_; }
    [[nodiscard]] std::span<const double> alphas() const noexcept { return alphas_; }
    [[nodiscard]] std::span<double> alphas() noexcept { return alphas_; }
    [[nodiscard]] double gram(std::size_t k, std::size_t l) const { return gram_[k][l]; }
    [[nodiscard]] std::span<const double> gram_row(std::size_t k) const { return gram_[k]; }

  private:
    std::vector<ConstraintRecord> constraints_;
    std::vector<double> alphas_;
    std::vector<std::vector<double>> gram_;
};

struct QpSolution {
    std::vector<double> w;
    double xi = 0.0;
    double dual_objective = 0.0;
    std::size_t iterations = 0;
    bool converged = true;
};

/// Maximizes -1/2 a^T H a + sum_k a_k loss_k over a >= 0, sum a <= C by
/// pairwise coordinate ascent on the maximal KKT-violating pair, warm-started
/// from the working set's current alphas (updated in place). Returns
/// w = sum_k a_k delta_k over `dimension` coordinates and
/// xi = max(0, max_k loss_k - w^T delta_k).
QpSolution solve_restricted_qp(WorkingSet &ws, double C, std::size_t dimension, std::size_t max_steps = 200000);

struct TrainStats {
    std::size_t iterations = 0;
    std::size_t inference_count = 0;
    double final_violation = 0.0;
    bool converged = false;
    /// Restricted dual objective after each QP solve.
    std::vector<double> dual_objectives;
};

struct LinearModel {
    std::vector<double> w;
    double xi = 0.0;
    TrainStats stats;
    /// Final working set and multipliers, kept for inspection.
    std::vector<ConstraintRecord> constraints;
    std::vector<double> alphas;

    [[nodiscard]] std::vector<double> decision_values(const Dataset &data) const { return data.scores(w); }
};

using InferenceFn = std::function<ConstraintRecord(std::span<const double> w, const Dataset &data, Measure m)>;

/// One line per outer iteration in key=value form.
struct TraceRecord {
    std::size_t iteration;
    double dual_objective;
    double xi;
    double violation;
    std::size_t inference_count;
};
void write_trace(std::ostream &out, const TraceRecord &rec);

struct TrainOptions {
    InferenceFn infer;                  ///< defaults to most_violated
    std::ostream *trace = nullptr;      ///< optional per-iteration log
    /// Called after every QP solve and inference; used by tests to check invariants.
    std::function<void(const WorkingSet &, const QpSolution &, const ConstraintRecord &)> observer;
};

/// Cutting-plane training. Hitting max_iterations returns the current model
/// with stats.converged = false. Throws measure_undefined_error on data the
/// measure cannot be computed on and parameter_error on invalid hyperparameters.
[[nodiscard]] LinearModel cutting_plane_train(const Dataset &data, Measure m, const Hyperparams &hp, const TrainOptions &opts = {});

/// max over admissible y' of F(x, y') - F(x, y) + Delta(y, y').
[[nodiscard]] double convex_upper_bound(std::span<const double> w, const Dataset &data, Measure m);

}  // namespace perfadapt

#endif
