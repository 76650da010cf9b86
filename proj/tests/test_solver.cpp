#include "perfadapt/errors.hpp"
#include "perfadapt/solver.hpp"

#include "doctest.h"
#include "support.hpp"

#include <numeric>
#include <sstream>

using namespace perfadapt;

namespace {

ConstraintRecord record(std::vector<Feature> delta, double loss) {
    return { SparseVector{ std::move(delta) }, loss, LabelVector{} };
}

double dual_objective(const WorkingSet &ws) {
    double lin = 0.0;
    double quad = 0.0;
    const auto a = ws.alphas();
    for (std::size_t k = 0; k < ws.size(); ++k) {
        lin += a[k] * ws.constraints()[k].loss;
        for (std::size_t l = 0; l < ws.size(); ++l) {
            quad += a[k] * a[l] * ws.constraints()[k].feature_delta.dot(ws.constraints()[l].feature_delta);
        }
    }
    return lin - 0.5 * quad;
}

}  // namespace

TEST_CASE("hyperparameter validation") {
    CHECK_NOTHROW(Hyperparams{}.validate());
    CHECK_THROWS_AS((Hyperparams{ 0.0 }.validate()), parameter_error);
    CHECK_THROWS_AS((Hyperparams{ 1.0, -0.1 }.validate()), parameter_error);
    CHECK_THROWS_AS((Hyperparams{ 1.0, 0.1, 0 }.validate()), parameter_error);
}

TEST_CASE("restricted QP: interior single-constraint optimum") {
    // ||delta||^2 = 4, loss 100: alpha* = 25 <= C
    WorkingSet ws;
    ws.add(record({ { 0, 2.0 } }, 100.0));
    const QpSolution sol = solve_restricted_qp(ws, 100.0, 1);
    CHECK(ws.alphas()[0] == doctest::Approx(25.0));
    CHECK(sol.w[0] * 2.0 == doctest::Approx(100.0));
    CHECK(sol.xi == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(sol.converged);
}

TEST_CASE("restricted QP: single constraint clipped at C") {
    WorkingSet ws;
    ws.add(record({ { 0, 2.0 } }, 100.0));
    const QpSolution sol = solve_restricted_qp(ws, 10.0, 1);
    CHECK(ws.alphas()[0] == doctest::Approx(10.0));
    CHECK(sol.w[0] * 2.0 == doctest::Approx(40.0));
    CHECK(sol.xi == doctest::Approx(60.0));
}

TEST_CASE("restricted QP: duplicate directions keep only the larger loss") {
    WorkingSet ws;
    ws.add(record({ { 0, 2.0 } }, 60.0));
    ws.add(record({ { 0, 2.0 } }, 100.0));
    const QpSolution sol = solve_restricted_qp(ws, 100.0, 1);
    CHECK(ws.alphas()[0] == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
    CHECK(ws.alphas()[1] == doctest::Approx(25.0));
    CHECK(sol.xi == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
}

TEST_CASE("restricted QP: a zero-delta constraint absorbs the leftover budget") {
    // max 100a + 5b - 2a^2 with a + b <= 100: 100 - 4a = 5 -> a = 23.75, b = 76.25
    WorkingSet ws;
    ws.add(record({ { 0, 2.0 } }, 100.0));
    ws.add(record({}, 5.0));
    const QpSolution sol = solve_restricted_qp(ws, 100.0, 1);
    CHECK(ws.alphas()[0] == doctest::Approx(23.75));
    CHECK(ws.alphas()[1] == doctest::Approx(76.25));
    CHECK(sol.w[0] == doctest::Approx(47.5));
    CHECK(sol.xi == doctest::Approx(5.0));
}

TEST_CASE("restricted QP: no sampled feasible point beats the solution") {
    std::mt19937_64 rng{ 35 };
    std::uniform_real_distribution<double> loss(0.0, 100.0);
    std::exponential_distribution<double> mass(1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const double C = std::ldexp(1.0, static_cast<int>(trial % 7) - 2);
        WorkingSet ws;
        // more constraints than dimensions, with repeated directions
        const Dataset vectors = testing::random_dataset(rng, 10, 3);
        for (const auto &ex : vectors.examples()) {
            ws.add({ ex.features, loss(rng), LabelVector{} });
            ws.add({ ex.features, loss(rng), LabelVector{} });
        }
        (void)solve_restricted_qp(ws, C, 3);
        const double best = dual_objective(ws);
        const std::vector<double> solved(ws.alphas().begin(), ws.alphas().end());
        for (int sample = 0; sample < 200; ++sample) {
            std::vector<double> a(ws.size());
            double sum = 0.0;
            for (double &v : a) {
                v = mass(rng);
                sum += v;
            }
            const double budget = C * unit(rng);
            for (std::size_t k = 0; k < a.size(); ++k) {
                ws.alphas()[k] = a[k] * budget / sum;
            }
            CHECK(dual_objective(ws) <= best + 1e-9 * (1.0 + std::abs(best)));
        }
        std::copy(solved.begin(), solved.end(), ws.alphas().begin());
    }
}

TEST_CASE("restricted QP: empty working set") {
    WorkingSet ws;
    const QpSolution sol = solve_restricted_qp(ws, 1.0, 3);
    CHECK(sol.w == std::vector<double>(3, 0.0));
    CHECK(sol.xi == 0.0);
}

TEST_CASE("restricted QP: KKT conditions on random working sets") {
    std::mt19937_64 rng{ 31 };
    std::uniform_real_distribution<double> loss(0.0, 100.0);
    for (int trial = 0; trial < 40; ++trial) {
        const double C = std::ldexp(1.0, static_cast<int>(trial % 9) - 3);
        WorkingSet ws;
        const Dataset vectors = testing::random_dataset(rng, 3 + static_cast<std::size_t>(trial % 12), 5);
        for (const auto &ex : vectors.examples()) {
            ws.add({ ex.features, loss(rng), LabelVector{} });
        }
        const QpSolution sol = solve_restricted_qp(ws, C, 5);
        REQUIRE(sol.converged);
        const auto a = ws.alphas();
        const double total = std::accumulate(a.begin(), a.end(), 0.0);
        CHECK(total <= C * (1.0 + 1e-12));
        // w = sum alpha_k delta_k
        std::vector<double> w(5, 0.0);
        for (std::size_t k = 0; k < ws.size(); ++k) {
            CHECK(a[k] >= 0.0);
            ws.constraints()[k].feature_delta.add_to(w, a[k]);
        }
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(sol.w[j] == doctest::Approx(w[j]).epsilon(1e-9).scale(1.0));
        }
        // gradients g_k = loss_k - w^T delta_k = violation; the slack has gradient 0
        double g_max = 0.0;
        for (std::size_t k = 0; k < ws.size(); ++k) {
            g_max = std::max(g_max, violation(sol.w, ws.constraints()[k]));
        }
        CHECK(sol.xi == doctest::Approx(g_max).epsilon(1e-12).scale(1.0));
        for (std::size_t k = 0; k < ws.size(); ++k) {
            if (a[k] > 0.0) {
                // active multipliers sit at the top gradient (0 if the slack is active)
                const double top = total < C * (1.0 - 1e-9) ? 0.0 : g_max;
                CHECK(violation(sol.w, ws.constraints()[k]) == doctest::Approx(top).epsilon(1e-5).scale(C));
            }
        }
        CHECK(sol.dual_objective == doctest::Approx(dual_objective(ws)).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("working set pruning keeps Gram entries aligned") {
    WorkingSet ws;
    ws.add(record({ { 0, 1.0 } }, 1.0));
    ws.add(record({ { 1, 2.0 } }, 2.0));
    ws.add(record({ { 0, 3.0 }, { 1, 1.0 } }, 3.0));
    ws.remove_if({ false, true, false });
    REQUIRE(ws.size() == 2);
    CHECK(ws.gram(0, 0) == 1.0);
    CHECK(ws.gram(0, 1) == 3.0);
    CHECK(ws.gram(1, 1) == 10.0);
    CHECK(ws.constraints()[1].loss == 3.0);
}

TEST_CASE("epsilon larger than any violation stops after one inference") {
    std::mt19937_64 rng{ 1 };
    const Dataset d = testing::random_dataset(rng, 20, 4);
    Hyperparams hp;
    hp.epsilon = 200.0;
    for (const Measure m : all_measures) {
        const LinearModel model = cutting_plane_train(d, m, hp);
        CHECK(model.stats.inference_count == 1);
        CHECK(model.stats.converged);
        CHECK(model.w == std::vector<double>(4, 0.0));
    }
}

TEST_CASE("separable two-point data is fit exactly") {
    const Dataset d = parse_svmlight(std::string{ "1 1:1 2:0.5\n-1 1:-1 2:0.25\n" });
    Hyperparams hp;
    hp.C = 100.0;
    for (const Measure m : all_measures) {
        const LinearModel model = cutting_plane_train(d, m, hp);
        CHECK(model.stats.converged);
        CHECK(evaluate(m, d.labels(), model.decision_values(d)) == 1.0);
    }
}

TEST_CASE("training errors") {
    const Dataset single = parse_svmlight(std::string{ "1 1:1\n1 1:2\n" });
    for (const Measure m : { Measure::f1, Measure::prbep, Measure::auc }) {
        CHECK_THROWS_AS((void)cutting_plane_train(single, m, Hyperparams{}), measure_undefined_error);
    }
    CHECK_THROWS_AS((void)cutting_plane_train(single, Measure::error_rate, Hyperparams{ -1.0 }), parameter_error);
}

TEST_CASE("iteration cap returns a non-converged model") {
    std::mt19937_64 rng{ 2 };
    const Dataset d = testing::random_dataset(rng, 40, 6);
    Hyperparams hp;
    hp.C = 1000.0;
    hp.epsilon = 1e-6;
    hp.max_iterations = 2;
    const LinearModel model = cutting_plane_train(d, Measure::error_rate, hp);
    CHECK_FALSE(model.stats.converged);
    CHECK(model.stats.iterations == 2);
    CHECK(model.stats.inference_count == 2);
}

TEST_CASE("cutting plane invariants") {
    std::mt19937_64 rng{ 3 };
    for (int seed = 0; seed < 4; ++seed) {
        const Dataset d = testing::linear_task(rng, 60, 5, 0.8);
        for (const Measure m : all_measures) {
            for (const double C : { 1.0, 128.0 }) {
                Hyperparams hp;
                hp.C = C;
                hp.prune_after = 3;  // exercise pruning
                std::vector<double> duals;
                TrainOptions opts;
                opts.observer = [&](const WorkingSet &ws, const QpSolution &qp, const ConstraintRecord &rec) {
                    duals.push_back(qp.dual_objective);
                    // w = sum alpha_k delta_k after every solve
                    std::vector<double> w(d.dimension(), 0.0);
                    for (std::size_t k = 0; k < ws.size(); ++k) {
                        ws.constraints()[k].feature_delta.add_to(w, ws.alphas()[k]);
                    }
                    for (std::size_t j = 0; j < w.size(); ++j) {
                        CHECK(qp.w[j] == doctest::Approx(w[j]).epsilon(1e-9).scale(1.0));
                    }
                    CHECK(qp.xi >= 0.0);
                    (void)rec;
                };
                const LinearModel model = cutting_plane_train(d, m, hp, opts);
                REQUIRE(model.stats.converged);
                // pruning may only remove alpha = 0 constraints, so the dual never decreases
                for (std::size_t k = 1; k < duals.size(); ++k) {
                    CHECK(duals[k] >= duals[k - 1] - 1e-7 * std::max(1.0, std::abs(duals[k - 1])));
                }
                const double fresh = violation(model.w, most_violated(model.w, d, m));
                CHECK(fresh <= model.xi + hp.epsilon + 1e-6);
                CHECK(model.stats.dual_objectives == duals);
            }
        }
    }
}

TEST_CASE("added constraints exceed xi + epsilon when added") {
    std::mt19937_64 rng{ 4 };
    const Dataset d = testing::linear_task(rng, 50, 4, 1.0);
    Hyperparams hp;
    hp.C = 10.0;
    std::vector<double> margins;  // violation - (xi + epsilon) per inference
    TrainOptions opts;
    opts.observer = [&](const WorkingSet &, const QpSolution &qp, const ConstraintRecord &rec) {
        margins.push_back(violation(qp.w, rec) - (qp.xi + hp.epsilon));
    };
    const LinearModel model = cutting_plane_train(d, Measure::f1, hp, opts);
    REQUIRE(model.stats.converged);
    REQUIRE(margins.size() == model.stats.inference_count);
    // every call but the last added its constraint
    for (std::size_t k = 0; k + 1 < margins.size(); ++k) {
        CHECK(margins[k] > 0.0);
    }
    CHECK(margins.back() <= 0.0);
}

TEST_CASE("larger C does not increase the final slack") {
    for (const std::uint64_t seed : { 5u, 6u, 7u }) {
        std::mt19937_64 rng{ seed };
        const Dataset d = testing::linear_task(rng, 80, 6, 1.0);
        for (const Measure m : all_measures) {
            double previous = std::numeric_limits<double>::infinity();
            for (const double C : { 0.5, 4.0, 32.0 }) {
                Hyperparams hp;
                hp.C = C;
                hp.epsilon = 0.01;
                const LinearModel model = cutting_plane_train(d, m, hp);
                REQUIRE(model.stats.converged);
                // xi is only certified up to epsilon
                CHECK(model.xi <= previous + 2.0 * hp.epsilon + 1e-6);
                previous = model.xi;
            }
        }
    }
}

TEST_CASE("convex upper bound") {
    std::mt19937_64 rng{ 8 };
    const Dataset d = testing::random_dataset(rng, 20, 5);
    const std::vector<double> zero(5, 0.0);
    for (const Measure m : all_measures) {
        CHECK(convex_upper_bound(zero, d, m) == doctest::Approx(100.0));
    }
    for (int trial = 0; trial < 100; ++trial) {
        const auto w = testing::random_weights(rng, 5);
        for (const Measure m : all_measures) {
            CHECK(convex_upper_bound(w, d, m) >= prediction_loss(w, d, m) - 1e-9);
        }
    }
    const Dataset small = testing::random_dataset(rng, 8, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto w = testing::random_weights(rng, 3);
        for (const Measure m : { Measure::error_rate, Measure::f1, Measure::prbep }) {
            const double oracle = testing::oracle_max(w, small, m) - true_label_objective(w, small, m);
            CHECK(convex_upper_bound(w, small, m) == doctest::Approx(oracle).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("trace lines are key=value records") {
    std::mt19937_64 rng{ 9 };
    const Dataset d = testing::linear_task(rng, 30, 3);
    std::ostringstream trace;
    TrainOptions opts;
    opts.trace = &trace;
    const LinearModel model = cutting_plane_train(d, Measure::error_rate, Hyperparams{}, opts);
    std::istringstream lines{ trace.str() };
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        ++count;
        CHECK(line.rfind("iteration=" + std::to_string(count) + " dual=", 0) == 0);
        CHECK(line.find(" xi=") != std::string::npos);
        CHECK(line.find(" violation=") != std::string::npos);
        CHECK(line.find(" inference_count=" + std::to_string(count)) != std::string::npos);
    }
    CHECK(count == model.stats.iterations);
}
