#include "perfadapt/solver.hpp"

#include "perfadapt/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace perfadapt {

void Hyperparams::validate() const {
    if (!(C > 0.0) || !std::isfinite(C)) {
        throw parameter_error("C must be a positive finite real");
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw parameter_error("epsilon must be a positive finite real");
    }
    if (max_iterations == 0) {
        throw parameter_error("max_iterations must be positive");
    }
}

// ---------------------------------------------------------------------------
// WorkingSet

void WorkingSet::add(ConstraintRecord rec) {
    if (!std::isfinite(rec.loss)) {
        throw parameter_error("constraint loss must be finite");
    }
    std::vector<double> row(constraints_.size() + 1);
    for (std::size_t k = 0; k < constraints_.size(); ++k) {
        row[k] = constraints_[k].feature_delta.dot(rec.feature_delta);
        gram_[k].push_back(row[k]);
    }
    row.back() = rec.feature_delta.squared_norm();
    gram_.push_back(std::move(row));
    constraints_.push_back(std::move(rec));
    alphas_.push_back(0.0);
}

void WorkingSet::remove_if(const std::vector<bool> &drop) {
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < constraints_.size(); ++k) {
        if (!drop[k]) {
            keep.push_back(k);
        }
    }
    if (keep.size() == constraints_.size()) {
        return;
    }
    std::vector<ConstraintRecord> constraints;
    std::vector<double> alphas;
    std::vector<std::vector<double>> gram;
    for (const std::size_t k : keep) {
        constraints.push_back(std::move(constraints_[k]));
        alphas.push_back(alphas_[k]);
        std::vector<double> row;
        row.reserve(keep.size());
        for (const std::size_t l : keep) {
            row.push_back(gram_[k][l]);
        }
        gram.push_back(std::move(row));
    }
    constraints_ = std::move(constraints);
    alphas_ = std::move(alphas);
    gram_ = std::move(gram);
}

// ---------------------------------------------------------------------------
// restricted dual

namespace {

// Primal active-set method on min 1/2 a'Ha - l'a over {a >= 0, sum a + slack = C,
// slack >= 0}, warm-started from `alpha`. Each step solves the equality
// problem on the free set in the reduced space orthogonal to the all-ones
// direction; zero-curvature directions with a descending gradient are
// followed to the boundary. Returns the number of steps taken.
std::size_t active_set_pass(const WorkingSet &ws, std::span<double> alpha, double &slack, double C, std::size_t max_steps) {
    const std::size_t K = ws.size();
    const auto constraints = ws.constraints();
    const std::size_t slack_index = K;
    auto weight = [&](std::size_t k) -> double & { return k == slack_index ? slack : alpha[k]; };
    auto gram = [&](std::size_t k, std::size_t l) { return (k == slack_index || l == slack_index) ? 0.0 : ws.gram(k, l); };

    double scale = 1.0;
    for (std::size_t k = 0; k < K; ++k) {
        scale = std::max(scale, ws.gram(k, k));
    }
    const double pricing_tol = 1e-6 * C;

    // gradient of the minimized objective: (Ha)_k - loss_k, zero for the slack
    std::vector<double> g(K + 1, 0.0);
    auto refresh_gradient = [&] {
        for (std::size_t k = 0; k < K; ++k) {
            const auto row = ws.gram_row(k);
            double Ha = 0.0;
            for (std::size_t l = 0; l < K; ++l) {
                Ha += row[l] * alpha[l];
            }
            g[k] = Ha - constraints[k].loss;
        }
    };

    std::vector<std::size_t> free;
    for (std::size_t k = 0; k <= K; ++k) {
        if (weight(k) > 0.0) {
            free.push_back(k);
        }
    }
    refresh_gradient();

    std::size_t step = 0;
    bool stationary = false;
    while (step < max_steps) {
        ++step;
        if (stationary) {
            // price the bound variables against the free set's common gradient
            double g_max_free = -std::numeric_limits<double>::infinity();
            for (const std::size_t k : free) {
                g_max_free = std::max(g_max_free, g[k]);
            }
            std::size_t entering = K + 1;
            double g_min = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k <= K; ++k) {
                if (g[k] < g_min && std::find(free.begin(), free.end(), k) == free.end()) {
                    g_min = g[k];
                    entering = k;
                }
            }
            if (entering == K + 1 || g_max_free - g_min <= pricing_tol) {
                break;
            }
            free.push_back(entering);
            std::sort(free.begin(), free.end());
            stationary = false;
        }

        const auto nf = static_cast<Eigen::Index>(free.size());
        if (nf <= 1) {
            stationary = true;
            continue;
        }
        // eliminate the last free variable: p = A q with A = [I ; -1']
        const auto n1 = nf - 1;
        const std::size_t last = free.back();
        Eigen::MatrixXd R(n1, n1);
        Eigen::VectorXd r(n1);
        const double h_ll = gram(last, last);
        for (Eigen::Index i = 0; i < n1; ++i) {
            const std::size_t fi = free[static_cast<std::size_t>(i)];
            r(i) = g[fi] - g[last];
            const double h_il = gram(fi, last);
            for (Eigen::Index j = 0; j <= i; ++j) {
                const std::size_t fj = free[static_cast<std::size_t>(j)];
                R(i, j) = gram(fi, fj) - h_il - gram(last, fj) + h_ll;
                R(j, i) = R(i, j);
            }
        }
        // Pivoted LDL' is rank revealing here (R is PSD): pivots at or below
        // lambda_tol are treated as zero curvature. With c = L^-1 P (-r), a zero
        // pivot with c_i != 0 means the objective falls linearly along
        // P' L^-T e_i, which is then followed to the boundary.
        const double pivot_tol = 1e-11 * scale * static_cast<double>(nf);
        const double flat_tol = 1e-12 * (1.0 + r.cwiseAbs().maxCoeff());
        const Eigen::LDLT<Eigen::MatrixXd> ldlt{ R };
        Eigen::VectorXd c = ldlt.transpositionsP() * (-r);
        ldlt.matrixL().solveInPlace(c);
        const auto &D = ldlt.vectorD();
        Eigen::VectorXd newton = Eigen::VectorXd::Zero(n1);
        Eigen::VectorXd descent = Eigen::VectorXd::Zero(n1);
        bool unbounded = false;
        for (Eigen::Index i = 0; i < n1; ++i) {
            if (D(i) > pivot_tol) {
                newton(i) = c(i) / D(i);
            } else if (std::abs(c(i)) > flat_tol) {
                descent(i) = c(i);
                unbounded = true;
            }
        }
        Eigen::VectorXd q = unbounded ? descent : newton;
        ldlt.matrixU().solveInPlace(q);
        q = ldlt.transpositionsP().transpose() * q;

        Eigen::VectorXd p(nf);
        p.head(n1) = q;
        p(n1) = -q.sum();

        double tau = unbounded ? std::numeric_limits<double>::infinity() : 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index i = 0; i < nf; ++i) {
            if (p(i) < 0.0) {
                const double limit = -weight(free[static_cast<std::size_t>(i)]) / p(i);
                if (limit < tau) {
                    tau = limit;
                    blocking = i;
                }
            }
        }
        if (blocking < 0 && unbounded) {
            stationary = true;  // numerically flat; let pricing decide
            continue;
        }
        for (Eigen::Index i = 0; i < nf; ++i) {
            double &a = weight(free[static_cast<std::size_t>(i)]);
            a = std::max(0.0, a + tau * p(i));
        }
        if (blocking >= 0) {
            weight(free[static_cast<std::size_t>(blocking)]) = 0.0;
            free.erase(free.begin() + blocking);
            stationary = false;
        } else {
            stationary = true;
        }
        refresh_gradient();
    }
    return step;
}

}  // namespace

QpSolution solve_restricted_qp(WorkingSet &ws, double C, std::size_t dimension, std::size_t max_steps) {
    QpSolution sol;
    sol.w.assign(dimension, 0.0);
    const std::size_t K = ws.size();
    if (K == 0) {
        return sol;
    }

    auto alpha = ws.alphas();
    const auto constraints = ws.constraints();

    // The slack variable (index K) stands for the implicit constraint y' = y
    // with zero loss and zero feature delta; it turns sum a <= C into sum = C.
    double total = 0.0;
    for (double &a : alpha) {
        a = std::max(a, 0.0);
        total += a;
    }
    if (total > C) {
        for (double &a : alpha) {
            a *= C / total;
        }
        total = C;
    }
    double slack = C - total;

    sol.iterations = active_set_pass(ws, alpha, slack, C, 50 * (K + 1));

    // gradient g_k = loss_k - (H a)_k; the slack's gradient is always 0
    std::vector<double> grad(K);
    for (std::size_t k = 0; k < K; ++k) {
        double Ha = 0.0;
        for (std::size_t l = 0; l < K; ++l) {
            Ha += ws.gram(k, l) * alpha[l];
        }
        grad[k] = constraints[k].loss - Ha;
    }

    const double tolerance = 1e-6 * C;
    const std::size_t slack_index = K;
    auto weight = [&](std::size_t k) -> double & { return k == slack_index ? slack : alpha[k]; };

    sol.converged = false;
    for (std::size_t step = 0; step < max_steps; ++step) {
        std::size_t up = slack_index;
        std::size_t down = slack > 0.0 ? slack_index : K + 1;
        double g_up = 0.0;
        double g_down = slack > 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            const double g = grad[k];
            if (g > g_up) {
                g_up = g;
                up = k;
            }
            if (alpha[k] > 0.0 && g < g_down) {
                g_down = g;
                down = k;
            }
        }
        if (down == K + 1 || g_up - g_down <= tolerance) {
            sol.converged = true;
            sol.iterations += step;
            break;
        }

        // the slack has a zero Gram row
        const double *row_up = up == slack_index ? nullptr : ws.gram_row(up).data();
        const double *row_down = down == slack_index ? nullptr : ws.gram_row(down).data();
        const double h_uu = row_up != nullptr ? row_up[up] : 0.0;
        const double h_dd = row_down != nullptr ? row_down[down] : 0.0;
        const double h_ud = row_up != nullptr && row_down != nullptr ? row_up[down] : 0.0;
        const double eta = h_uu + h_dd - 2.0 * h_ud;
        double &a_down = weight(down);
        double t = eta > 1e-12 ? (g_up - g_down) / eta : a_down;
        const bool clipped = t >= a_down;
        t = std::min(t, a_down);

        weight(up) += t;
        a_down = clipped ? 0.0 : a_down - t;
        if (row_up != nullptr && row_down != nullptr) {
            for (std::size_t k = 0; k < K; ++k) {
                grad[k] -= t * (row_up[k] - row_down[k]);
            }
        } else if (row_up != nullptr) {
            for (std::size_t k = 0; k < K; ++k) {
                grad[k] -= t * row_up[k];
            }
        } else {
            for (std::size_t k = 0; k < K; ++k) {
                grad[k] += t * row_down[k];
            }
        }
    }
    if (!sol.converged) {
        sol.iterations += max_steps;
    }

    double dual = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        dual += 0.5 * alpha[k] * (constraints[k].loss + grad[k]);
        if (alpha[k] > 0.0) {
            constraints[k].feature_delta.add_to(sol.w, alpha[k]);
        }
    }
    sol.dual_objective = dual;

    double xi = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        xi = std::max(xi, violation(sol.w, constraints[k]));
    }
    sol.xi = xi;
    return sol;
}

// ---------------------------------------------------------------------------
// cutting plane

void write_trace(std::ostream &out, const TraceRecord &rec) {
    out << "iteration=" << rec.iteration << " dual=" << rec.dual_objective << " xi=" << rec.xi << " violation=" << rec.violation
        << " inference_count=" << rec.inference_count << '\n';
}

LinearModel cutting_plane_train(const Dataset &data, Measure m, const Hyperparams &hp, const TrainOptions &opts) {
    hp.validate();
    require_defined(m, data.positives(), data.negatives());
    const InferenceFn infer = opts.infer ? opts.infer : InferenceFn{ [](std::span<const double> w, const Dataset &d, Measure measure) {
        return most_violated(w, d, measure);
    } };

    WorkingSet ws;
    std::vector<std::size_t> idle;  // consecutive outer iterations with alpha = 0
    LinearModel model;
    QpSolution qp;

    for (std::size_t iteration = 1;; ++iteration) {
        qp = solve_restricted_qp(ws, hp.C, data.dimension());
        model.stats.iterations = iteration;
        model.stats.dual_objectives.push_back(qp.dual_objective);

        ConstraintRecord rec = infer(qp.w, data, m);
        ++model.stats.inference_count;
        const double viol = violation(qp.w, rec);
        model.stats.final_violation = viol;

        if (opts.trace != nullptr) {
            write_trace(*opts.trace, { iteration, qp.dual_objective, qp.xi, viol, model.stats.inference_count });
        }
        if (opts.observer) {
            opts.observer(ws, qp, rec);
        }
        if (viol <= qp.xi + hp.epsilon) {
            model.stats.converged = true;
            break;
        }
        if (iteration >= hp.max_iterations) {
            break;
        }

        const auto alphas = ws.alphas();
        std::vector<bool> drop_flags(ws.size(), false);
        bool any_drop = false;
        for (std::size_t k = 0; k < ws.size(); ++k) {
            idle[k] = alphas[k] == 0.0 ? idle[k] + 1 : 0;
            if (idle[k] >= hp.prune_after) {
                drop_flags[k] = true;
                any_drop = true;
            }
        }
        if (any_drop) {
            std::vector<std::size_t> kept_idle;
            for (std::size_t k = 0; k < ws.size(); ++k) {
                if (!drop_flags[k]) {
                    kept_idle.push_back(idle[k]);
                }
            }
            ws.remove_if(drop_flags);
            idle = std::move(kept_idle);
        }
        ws.add(std::move(rec));
        idle.push_back(0);
    }

    model.w = std::move(qp.w);
    model.xi = qp.xi;
    model.constraints.assign(ws.constraints().begin(), ws.constraints().end());
    model.alphas.assign(ws.alphas().begin(), ws.alphas().end());
    return model;
}

double convex_upper_bound(std::span<const double> w, const Dataset &data, Measure m) {
    return violation(w, most_violated(w, data, m));
}

}  // namespace perfadapt
