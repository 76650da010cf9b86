#include "perfadapt/errors.hpp"
#include "perfadapt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace perfadapt {

// ---------------------------------------------------------------------------
// audit

void AuditLog::record(std::string event) {
    const std::lock_guard lock{ mutex_ };
    events_.push_back(std::move(event));
}

std::vector<std::string> AuditLog::events() const {
    const std::lock_guard lock{ mutex_ };
    return events_;
}

ScopedFileAudit::ScopedFileAudit(AuditLog &log) {
    set_file_access_hook([&log](const std::filesystem::path &p) { log.record("open " + p.string()); });
}

ScopedFileAudit::~ScopedFileAudit() {
    set_file_access_hook(nullptr);
}

namespace {

void note(AuditLog *audit, std::string event) {
    if (audit != nullptr) {
        audit->record(std::move(event));
    }
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// building blocks

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)> &task) {
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{ 0 };
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                task(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(jobs, count);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    for (const auto &e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

std::vector<std::size_t> fold_assignment(std::span<const Label> labels, std::size_t folds, std::uint64_t seed) {
    if (folds < 2 || folds > labels.size()) {
        throw usage_error("cannot split " + std::to_string(labels.size()) + " examples into " + std::to_string(folds) + " folds");
    }
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    std::mt19937_64 rng{ seed };
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> fold(labels.size());
    std::size_t dealt = 0;
    for (const Label cls : { Label::positive, Label::negative }) {
        for (const std::size_t i : order) {
            if (labels[i] == cls) {
                fold[i] = dealt++ % folds;
            }
        }
    }
    return fold;
}

// ---------------------------------------------------------------------------
// auxiliary pool

AuxiliaryPool::AuxiliaryPool(std::vector<AuxSpec> specs, const Dataset &train) :
    specs_{ std::move(specs) },
    train_{ &train } {
    for (const auto &spec : specs_) {
        if (spec.builtin()) {
            train_predictions_.emplace_back();
        } else {
            train_predictions_.emplace_back(load_external_predictions(spec.train_predictions, train.size()));
        }
    }
}

AuxiliaryPool::Fitted AuxiliaryPool::fit(std::span<const std::size_t> rows) const {
    Fitted fitted;
    const Dataset part = train_->subset(rows);
    for (std::size_t j = 0; j < specs_.size(); ++j) {
        const auto &spec = specs_[j];
        switch (spec.kind) {
        case AuxSpec::Kind::tree:
            fitted.models.push_back(std::make_shared<TreeModel>(train_tree(part, spec.tree)));
            break;
        case AuxSpec::Kind::sgd:
            fitted.models.push_back(std::make_shared<LinearSgdModel>(train_linear_sgd(part, spec.sgd)));
            break;
        case AuxSpec::Kind::pred: {
            const auto &all = train_predictions_[j]->predictions();
            LabelVector picked;
            picked.reserve(rows.size());
            for (const std::size_t i : rows) {
                picked.push_back(all[i]);
            }
            fitted.models.push_back(std::make_shared<ExternalPredictions>(std::move(picked), spec.train_predictions));
            break;
        }
        }
    }
    return fitted;
}

AuxiliaryPool::Fitted AuxiliaryPool::fit_all() const {
    std::vector<std::size_t> rows(train_->size());
    std::iota(rows.begin(), rows.end(), std::size_t{ 0 });
    return fit(rows);
}

LabelMatrix AuxiliaryPool::outputs_on_rows(const Fitted &fitted, std::span<const std::size_t> rows, std::size_t jobs) const {
    const Dataset part = train_->subset(rows);
    LabelMatrix out{ rows.size(), specs_.size() };
    for (std::size_t j = 0; j < specs_.size(); ++j) {
        if (specs_[j].builtin()) {
            const LabelMatrix column = compute_aux_outputs(std::span{ &fitted.models[j], 1 }, part, jobs);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                out(r, j) = column(r, 0);
            }
        } else {
            const auto &all = train_predictions_[j]->predictions();
            for (std::size_t r = 0; r < rows.size(); ++r) {
                out(r, j) = all[rows[r]];
            }
        }
    }
    return out;
}

LabelMatrix AuxiliaryPool::outputs_on_test(const Fitted &fitted, const Dataset &test, std::size_t jobs) const {
    LabelMatrix out{ test.size(), specs_.size() };
    for (std::size_t j = 0; j < specs_.size(); ++j) {
        LabelVector column;
        if (specs_[j].builtin()) {
            column = compute_aux_outputs(std::span{ &fitted.models[j], 1 }, test, jobs).column(0);
        } else {
            if (specs_[j].test_predictions.empty()) {
                throw alignment_error("aux '" + specs_[j].text + "' has no test predictions (use pred:<train>,test=<path>)");
            }
            column = load_external_predictions(specs_[j].test_predictions, test.size()).predictions();
        }
        for (std::size_t i = 0; i < test.size(); ++i) {
            out(i, j) = column[i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// cross-validation

namespace {

Hyperparams hyperparams(const ExperimentConfig &config, double C) {
    Hyperparams hp;
    hp.C = C;
    hp.epsilon = config.epsilon;
    hp.max_iterations = config.max_iterations;
    return hp;
}

}  // namespace

CvResult cross_validate(const Dataset &train, const ExperimentConfig &config, const AuxiliaryPool *pool, double B, AuditLog *audit) {
    config.validate();
    CvResult result;
    result.grid = config.c_grid;
    result.folds = config.folds;
    const std::size_t k = config.folds;
    const auto fold = fold_assignment(train.labels(), k, config.seed);

    note(audit, "cv begin");
    std::vector<std::vector<std::size_t>> train_rows(k);
    std::vector<std::vector<std::size_t>> val_rows(k);
    for (std::size_t i = 0; i < train.size(); ++i) {
        for (std::size_t f = 0; f < k; ++f) {
            (fold[i] == f ? val_rows[f] : train_rows[f]).push_back(i);
        }
    }
    std::vector<Dataset> fold_train(k);
    std::vector<Dataset> fold_val(k);
    std::vector<AuxiliaryPool::Fitted> fitted(k);
    std::vector<LabelMatrix> out_train(k);
    std::vector<LabelMatrix> out_val(k);
    parallel_for(k, config.jobs, [&](std::size_t f) {
        fold_train[f] = train.subset(train_rows[f]);
        fold_val[f] = train.subset(val_rows[f]);
        if (pool != nullptr) {
            fitted[f] = pool->fit(train_rows[f]);
            out_train[f] = pool->outputs_on_rows(fitted[f], train_rows[f], 1);
            out_val[f] = pool->outputs_on_rows(fitted[f], val_rows[f], 1);
        }
    });

    const std::size_t g = result.grid.size();
    result.fold_scores.assign(g, std::vector<double>(k, 0.0));
    std::atomic<std::size_t> nonconverged{ 0 };
    parallel_for(g * k, config.jobs, [&](std::size_t task) {
        const std::size_t gi = task / k;
        const std::size_t f = task % k;
        const Hyperparams hp = hyperparams(config, result.grid[gi]);
        std::vector<double> scores;
        bool converged = false;
        if (pool == nullptr) {
            const LinearModel model = cutting_plane_train(fold_train[f], config.measure, hp);
            scores = fold_val[f].scores(model.w);
            converged = model.stats.converged;
        } else {
            const AdaptedModel model = adapt_with_outputs(fold_train[f], out_train[f], fitted[f].models, config.measure, { hp, B });
            scores = adapted_decisions(model, fold_val[f], out_val[f]);
            converged = model.stats.converged;
        }
        if (!converged) {
            ++nonconverged;
        }
        result.fold_scores[gi][f] = evaluate(config.measure, fold_val[f].labels(), scores);
    });
    note(audit, "cv end");

    result.nonconverged = nonconverged;
    result.means.resize(g);
    for (std::size_t gi = 0; gi < g; ++gi) {
        double sum = 0.0;
        for (const double s : result.fold_scores[gi]) {
            sum += s;
        }
        result.means[gi] = sum / static_cast<double>(k);
    }
    // grid order does not matter: ties go to the smallest C
    result.chosen = 0;
    for (std::size_t gi = 1; gi < g; ++gi) {
        const double best = result.means[result.chosen];
        if (result.means[gi] > best || (result.means[gi] == best && result.grid[gi] < result.grid[result.chosen])) {
            result.chosen = gi;
        }
    }
    return result;
}

nlohmann::json all_metrics(std::span<const Label> truth, std::span<const double> scores) {
    std::size_t p = 0;
    for (const Label y : truth) {
        p += y == Label::positive ? 1 : 0;
    }
    const std::size_t q = truth.size() - p;
    nlohmann::json out = nlohmann::json::object();
    for (const Measure m : all_measures) {
        const bool defined = truth.size() > 0 && (!needs_both_classes(m) || (p > 0 && q > 0));
        out[std::string{ measure_title(m) }] = defined ? nlohmann::json(evaluate(m, truth, scores)) : nlohmann::json(nullptr);
    }
    return out;
}

// ---------------------------------------------------------------------------
// reports

namespace {

std::string cell(const nlohmann::json &v) {
    if (v.is_null()) {
        return "-";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v.get<double>());
    return buf;
}

std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

class Table {
  public:
    explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    [[nodiscard]] std::string str() const {
        std::vector<std::size_t> width;
        for (const auto &row : rows_) {
            width.resize(std::max(width.size(), row.size()), 0);
            for (std::size_t c = 0; c < row.size(); ++c) {
                width[c] = std::max(width[c], row[c].size());
            }
        }
        std::ostringstream os;
        for (const auto &row : rows_) {
            std::string line;
            for (std::size_t c = 0; c < row.size(); ++c) {
                line += row[c];
                if (c + 1 < row.size()) {
                    line += std::string(width[c] - row[c].size() + 2, ' ');
                }
            }
            os << line << '\n';
        }
        return os.str();
    }

  private:
    std::vector<std::vector<std::string>> rows_;
};

std::vector<std::string> metric_header(std::string first) {
    std::vector<std::string> header{ std::move(first) };
    for (const Measure m : all_measures) {
        header.emplace_back(measure_title(m));
    }
    return header;
}

std::vector<std::string> metric_row(std::string name, const nlohmann::json &metrics) {
    std::vector<std::string> row{ std::move(name) };
    for (const Measure m : all_measures) {
        row.push_back(cell(metrics.at(std::string{ measure_title(m) })));
    }
    return row;
}

// Adapted cell with the auxiliary's raw score in brackets.
std::vector<std::string> bracket_row(std::string name, const nlohmann::json &metrics, const nlohmann::json &raw) {
    std::vector<std::string> row{ std::move(name) };
    for (const Measure m : all_measures) {
        const std::string key{ measure_title(m) };
        row.push_back(cell(metrics.at(key)) + " (" + cell(raw.at(key)) + ")");
    }
    return row;
}

nlohmann::json cv_json(const CvResult &cv) {
    nlohmann::json points = nlohmann::json::array();
    for (std::size_t gi = 0; gi < cv.grid.size(); ++gi) {
        points.push_back({ { "C", cv.grid[gi] }, { "mean", cv.means[gi] }, { "folds", cv.fold_scores[gi] } });
    }
    return { { "rule", selection_rule }, { "folds", cv.folds }, { "chosen_C", cv.chosen_c() }, { "nonconverged", cv.nonconverged }, { "grid", std::move(points) } };
}

nlohmann::json stats_json(const TrainStats &stats, double xi) {
    return { { "iterations", stats.iterations },
             { "inference_count", stats.inference_count },
             { "converged", stats.converged },
             { "final_violation", stats.final_violation },
             { "xi", xi } };
}

std::string selection_line(const ExperimentConfig &config, const std::optional<CvResult> &cv, double C) {
    if (cv) {
        return "C=" + number(C) + " selected by " + std::to_string(config.folds) + "-fold CV over " + std::to_string(config.c_grid.size()) +
               " values (" + std::string{ selection_rule } + ")\n";
    }
    return "C=" + number(C) + " (single grid value, no CV)\n";
}

std::vector<double> prediction_scores(const LabelVector &predicted) {
    std::vector<double> out;
    out.reserve(predicted.size());
    for (const Label y : predicted) {
        out.push_back(value(y));
    }
    return out;
}

Dataset load_train(const ExperimentConfig &config) {
    if (config.data.empty()) {
        throw usage_error("--data is required");
    }
    Dataset train = read_svmlight_file(config.data);
    if (train.empty()) {
        throw parse_error(config.data.string() + " contains no examples");
    }
    require_defined(config.measure, train.positives(), train.negatives());
    return train;
}

double single_b(const ExperimentConfig &config, std::string_view command) {
    if (config.b_grid.size() != 1) {
        throw usage_error(std::string{ command } + " takes a single B; use sweep for B grids");
    }
    return config.b_grid.front();
}

}  // namespace

RunOutcome run_train(const ExperimentConfig &config, AuditLog *audit) {
    const auto start = Clock::now();
    config.validate();
    note(audit, "command train");
    const Dataset train = load_train(config);

    std::optional<CvResult> cv;
    double C = config.c_grid.front();
    if (config.c_grid.size() > 1) {
        cv = cross_validate(train, config, nullptr, 1.0, audit);
        C = cv->chosen_c();
    }
    const double cv_seconds = seconds_since(start);

    const LinearModel model = cutting_plane_train(train, config.measure, hyperparams(config, C));
    RunOutcome outcome;
    outcome.nonconverged = (model.stats.converged ? 0 : 1) + (cv ? cv->nonconverged : 0);
    outcome.model = linear_model_to_json(model, config.measure, train.dimension());

    auto &r = outcome.report;
    r["command"] = "train";
    r["config"] = config.to_json();
    r["chosen"] = { { "C", C } };
    r["selection"] = cv ? cv_json(*cv) : nlohmann::json(nullptr);
    r["model"] = stats_json(model.stats, model.xi);
    r["train_metrics"] = all_metrics(train.labels(), model.decision_values(train));

    Table table{ metric_header("Method") };
    table.add(metric_row("linear (train)", r["train_metrics"]));
    if (!config.test.empty()) {
        note(audit, "test begin");
        const Dataset test = read_svmlight_file(config.test);
        r["test_metrics"] = all_metrics(test.labels(), test.scores(model.w));
        table.add(metric_row("linear (test)", r["test_metrics"]));
    }
    r["nonconverged"] = outcome.nonconverged;
    r["timing"] = { { "cv_seconds", cv_seconds }, { "total_seconds", seconds_since(start) } };

    outcome.table = "train  measure=" + std::string{ measure_name(config.measure) } + "  " + selection_line(config, cv, C) + table.str() +
                    "iterations=" + std::to_string(model.stats.iterations) + " inferences=" + std::to_string(model.stats.inference_count) +
                    " converged=" + (model.stats.converged ? "yes" : "no") + "\n";
    return outcome;
}

RunOutcome run_adapt(const ExperimentConfig &config, AuditLog *audit) {
    const auto start = Clock::now();
    config.validate();
    if (config.aux.empty()) {
        throw usage_error("adapt needs at least one --aux");
    }
    const double B = single_b(config, "adapt");
    note(audit, "command adapt");
    const Dataset train = load_train(config);
    const AuxiliaryPool pool{ config.aux, train };

    std::optional<CvResult> cv;
    double C = config.c_grid.front();
    if (config.c_grid.size() > 1) {
        cv = cross_validate(train, config, &pool, B, audit);
        C = cv->chosen_c();
    }
    const double cv_seconds = seconds_since(start);

    const auto fitted = pool.fit_all();
    std::vector<std::size_t> all_rows(train.size());
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{ 0 });
    const LabelMatrix train_outputs = pool.outputs_on_rows(fitted, all_rows, config.jobs);
    const AdaptedModel model = adapt_with_outputs(train, train_outputs, fitted.models, config.measure, { hyperparams(config, C), B });

    RunOutcome outcome;
    outcome.nonconverged = (model.stats.converged ? 0 : 1) + (cv ? cv->nonconverged : 0);
    outcome.model = adapted_model_to_json(model);

    auto &r = outcome.report;
    r["command"] = "adapt";
    r["config"] = config.to_json();
    r["chosen"] = { { "C", C }, { "B", B } };
    r["selection"] = cv ? cv_json(*cv) : nlohmann::json(nullptr);
    r["model"] = stats_json(model.stats, model.xi);
    r["model"]["a"] = model.ensemble_weights;
    r["model"]["delta_norm"] = delta_norm(model);
    r["model"]["deployable"] = model.deployable();
    r["train_metrics"] = all_metrics(train.labels(), adapted_decisions(model, train, train_outputs));

    nlohmann::json aux = nlohmann::json::array();
    const LabelVector truth = train.labels();
    for (std::size_t j = 0; j < model.aux_count(); ++j) {
        aux.push_back({ { "spec", config.aux[j].text },
                        { "name", model.auxiliaries[j]->name() },
                        { "train_metrics", all_metrics(truth, prediction_scores(train_outputs.column(j))) } });
    }

    Table table{ metric_header("Method") };
    const bool single = model.aux_count() == 1;
    if (single) {
        table.add(bracket_row("adapted (train)", r["train_metrics"], aux[0]["train_metrics"]));
    } else {
        table.add(metric_row("adapted (train)", r["train_metrics"]));
    }
    if (!config.test.empty()) {
        note(audit, "test begin");
        const Dataset test = read_svmlight_file(config.test);
        const LabelMatrix test_outputs = pool.outputs_on_test(fitted, test, config.jobs);
        r["test_metrics"] = all_metrics(test.labels(), adapted_decisions(model, test, test_outputs));
        for (std::size_t j = 0; j < model.aux_count(); ++j) {
            aux[j]["test_metrics"] = all_metrics(test.labels(), prediction_scores(test_outputs.column(j)));
        }
        if (single) {
            table.add(bracket_row("adapted (test)", r["test_metrics"], aux[0]["test_metrics"]));
        } else {
            table.add(metric_row("adapted (test)", r["test_metrics"]));
            for (std::size_t j = 0; j < model.aux_count(); ++j) {
                table.add(metric_row("aux " + config.aux[j].text + " (test)", aux[j]["test_metrics"]));
            }
        }
    }
    r["auxiliaries"] = std::move(aux);
    r["nonconverged"] = outcome.nonconverged;
    r["timing"] = { { "cv_seconds", cv_seconds }, { "total_seconds", seconds_since(start) } };

    std::string weights;
    for (const double a : model.ensemble_weights) {
        weights += (weights.empty() ? "" : ",") + number(a);
    }
    outcome.table = "adapt  measure=" + std::string{ measure_name(config.measure) } + "  B=" + number(B) + "  " + selection_line(config, cv, C) +
                    (single ? "bracketed: raw auxiliary\n" : "") + table.str() + "a=(" + weights + ") delta_norm=" + number(delta_norm(model)) +
                    " iterations=" + std::to_string(model.stats.iterations) + " inferences=" + std::to_string(model.stats.inference_count) +
                    " converged=" + (model.stats.converged ? "yes" : "no") + "\n";
    return outcome;
}

RunOutcome run_eval(const ExperimentConfig &config, AuditLog *audit) {
    const auto start = Clock::now();
    if (config.model.empty() || config.data.empty()) {
        throw usage_error("eval needs --model and --data");
    }
    note(audit, "command eval");
    notify_file_access(config.model);
    std::ifstream in{ config.model };
    if (!in) {
        throw format_error("cannot open model file " + config.model.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw format_error(config.model.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
        throw format_error(config.model.string() + ": not a model file");
    }

    const Dataset data = read_svmlight_file(config.data);
    RunOutcome outcome;
    auto &r = outcome.report;
    r["command"] = "eval";
    r["model_path"] = config.model.string();
    r["data"] = config.data.string();
    std::vector<double> scores;
    const auto kind = j["kind"].get<std::string>();
    if (kind == "linear") {
        if (!config.aux_predictions.empty()) {
            throw usage_error("--aux-pred only applies to adapted models");
        }
        scores = data.scores(linear_weights_from_json(j));
    } else if (kind == "adapted") {
        AdaptedModel model = adapted_model_from_json(j);
        r["deployable"] = model.deployable();
        bind_external_predictions(model, config.aux_predictions, data.size());
        scores = adapted_decisions(model, data, config.jobs);
    } else {
        throw format_error(config.model.string() + ": unknown model kind '" + kind + "'");
    }
    r["kind"] = kind;
    r["metrics"] = all_metrics(data.labels(), scores);
    r["timing"] = { { "total_seconds", seconds_since(start) } };

    Table table{ metric_header("Model") };
    table.add(metric_row(kind, r["metrics"]));
    outcome.table = "eval  " + config.data.string() + "\n" + table.str();
    return outcome;
}

RunOutcome run_sweep(const ExperimentConfig &config, AuditLog *audit) {
    const auto start = Clock::now();
    config.validate();
    const bool adapted = !config.aux.empty();
    if (!adapted && config.b_grid.size() > 1) {
        throw usage_error("a B grid needs at least one --aux");
    }
    note(audit, "command sweep");
    const Dataset train = load_train(config);
    std::optional<AuxiliaryPool> pool;
    AuxiliaryPool::Fitted fitted;
    LabelMatrix train_outputs;
    if (adapted) {
        pool.emplace(config.aux, train);
        fitted = pool->fit_all();
        std::vector<std::size_t> rows(train.size());
        std::iota(rows.begin(), rows.end(), std::size_t{ 0 });
        train_outputs = pool->outputs_on_rows(fitted, rows, config.jobs);
    }
    std::optional<Dataset> test;
    LabelMatrix test_outputs;
    if (!config.test.empty()) {
        test = read_svmlight_file(config.test);
        if (adapted) {
            test_outputs = pool->outputs_on_test(fitted, *test, config.jobs);
        }
    }

    struct Point {
        double C;
        double B;
    };
    std::vector<Point> points;
    for (const double B : adapted ? config.b_grid : std::vector<double>{ 1.0 }) {
        for (const double C : config.c_grid) {
            points.push_back({ C, B });
        }
    }
    std::vector<nlohmann::json> rows(points.size());
    std::atomic<std::size_t> nonconverged{ 0 };
    parallel_for(points.size(), config.jobs, [&](std::size_t k) {
        const auto [C, B] = points[k];
        nlohmann::json row = { { "C", C } };
        std::vector<double> train_scores;
        std::vector<double> test_scores;
        TrainStats stats;
        if (adapted) {
            const AdaptedModel model = adapt_with_outputs(train, train_outputs, fitted.models, config.measure, { hyperparams(config, C), B });
            row["B"] = B;
            row["a"] = model.ensemble_weights;
            row["delta_norm"] = delta_norm(model);
            train_scores = adapted_decisions(model, train, train_outputs);
            if (test) {
                test_scores = adapted_decisions(model, *test, test_outputs);
            }
            stats = model.stats;
        } else {
            const LinearModel model = cutting_plane_train(train, config.measure, hyperparams(config, C));
            train_scores = model.decision_values(train);
            if (test) {
                test_scores = test->scores(model.w);
            }
            stats = model.stats;
        }
        if (!stats.converged) {
            ++nonconverged;
        }
        row["iterations"] = stats.iterations;
        row["inference_count"] = stats.inference_count;
        row["converged"] = stats.converged;
        row["train_score"] = evaluate(config.measure, train.labels(), train_scores);
        if (test) {
            row["test_metrics"] = all_metrics(test->labels(), test_scores);
        }
        rows[k] = std::move(row);
    });

    RunOutcome outcome;
    outcome.nonconverged = nonconverged;
    auto &r = outcome.report;
    r["command"] = "sweep";
    r["config"] = config.to_json();
    r["mode"] = adapted ? "adapted" : "linear";
    r["rows"] = rows;
    r["nonconverged"] = outcome.nonconverged;
    r["timing"] = { { "total_seconds", seconds_since(start) } };

    std::vector<std::string> header{ "C", "B", "iterations", "inferences", "converged", "train " + std::string{ measure_title(config.measure) } };
    if (test) {
        for (const Measure m : all_measures) {
            header.push_back("test " + std::string{ measure_title(m) });
        }
    }
    Table table{ header };
    for (const auto &row : rows) {
        std::vector<std::string> line{ number(row["C"].get<double>()),
                                       adapted ? number(row["B"].get<double>()) : "-",
                                       std::to_string(row["iterations"].get<std::size_t>()),
                                       std::to_string(row["inference_count"].get<std::size_t>()),
                                       row["converged"].get<bool>() ? "yes" : "no",
                                       cell(row["train_score"]) };
        if (test) {
            for (const Measure m : all_measures) {
                line.push_back(cell(row["test_metrics"][std::string{ measure_title(m) }]));
            }
        }
        table.add(std::move(line));
    }
    outcome.table = "sweep  measure=" + std::string{ measure_name(config.measure) } + "  mode=" + (adapted ? "adapted" : "linear") + "\n" + table.str();
    return outcome;
}

RunOutcome run_bench(const ExperimentConfig &config, AuditLog *audit) {
    const auto start = Clock::now();
    config.validate();
    if (config.aux.empty()) {
        throw usage_error("bench compares plain and adapted training and needs at least one --aux");
    }
    const double B = single_b(config, "bench");
    note(audit, "command bench");
    const Dataset train = load_train(config);
    const AuxiliaryPool pool{ config.aux, train };
    const auto fitted = pool.fit_all();
    std::vector<std::size_t> all_rows(train.size());
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{ 0 });
    const LabelMatrix outputs = pool.outputs_on_rows(fitted, all_rows, config.jobs);

    const std::size_t g = config.c_grid.size();
    std::vector<TrainStats> plain(g);
    std::vector<TrainStats> adapted(g);
    parallel_for(2 * g, config.jobs, [&](std::size_t task) {
        const std::size_t gi = task / 2;
        const Hyperparams hp = hyperparams(config, config.c_grid[gi]);
        if (task % 2 == 0) {
            plain[gi] = cutting_plane_train(train, config.measure, hp).stats;
        } else {
            adapted[gi] = adapt_with_outputs(train, outputs, fitted.models, config.measure, { hp, B }).stats;
        }
    });

    RunOutcome outcome;
    auto &r = outcome.report;
    r["command"] = "bench";
    r["config"] = config.to_json();
    nlohmann::json pairs = nlohmann::json::array();
    Table table{ { "C", "plain inferences", "adapted inferences", "plain converged", "adapted converged" } };
    for (std::size_t gi = 0; gi < g; ++gi) {
        outcome.nonconverged += (plain[gi].converged ? 0 : 1) + (adapted[gi].converged ? 0 : 1);
        pairs.push_back({ { "C", config.c_grid[gi] },
                          { "B", B },
                          { "plain", { { "inference_count", plain[gi].inference_count }, { "converged", plain[gi].converged } } },
                          { "adapted", { { "inference_count", adapted[gi].inference_count }, { "converged", adapted[gi].converged } } } });
        table.add({ number(config.c_grid[gi]), std::to_string(plain[gi].inference_count), std::to_string(adapted[gi].inference_count),
                    plain[gi].converged ? "yes" : "no", adapted[gi].converged ? "yes" : "no" });
    }
    r["pairs"] = std::move(pairs);
    r["nonconverged"] = outcome.nonconverged;
    r["timing"] = { { "total_seconds", seconds_since(start) } };
    outcome.table = "bench  measure=" + std::string{ measure_name(config.measure) } + "  B=" + number(B) + "\n" + table.str();
    return outcome;
}

void write_outcome(const std::filesystem::path &dir, const RunOutcome &outcome) {
    std::filesystem::create_directories(dir);
    auto write = [&](const char *name, const std::string &text) {
        std::ofstream out{ dir / name, std::ios::binary };
        if (!out) {
            throw std::filesystem::filesystem_error("cannot write", dir / name, std::make_error_code(std::errc::io_error));
        }
        out << text;
    };
    write("report.json", outcome.report.dump(2) + "\n");
    write("report.txt", outcome.table);
    if (!outcome.model.is_null()) {
        write("model.json", outcome.model.dump(2) + "\n");
    }
}

int exit_code_for(const std::exception &e) noexcept {
    if (dynamic_cast<const usage_error *>(&e) != nullptr || dynamic_cast<const parameter_error *>(&e) != nullptr) {
        return 2;
    }
    if (dynamic_cast<const convergence_error *>(&e) != nullptr) {
        return 4;
    }
    if (dynamic_cast<const error *>(&e) != nullptr || dynamic_cast<const std::filesystem::filesystem_error *>(&e) != nullptr) {
        return 3;
    }
    return 1;
}

}  // namespace perfadapt
