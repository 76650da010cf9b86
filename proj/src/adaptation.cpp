#include "perfadapt/adaptation.hpp"

#include "perfadapt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace perfadapt {

bool AdaptedModel::deployable() const noexcept {
    return std::all_of(auxiliaries.begin(), auxiliaries.end(), [](const AuxiliaryPtr &aux) { return aux->deployable(); });
}

LabelMatrix compute_aux_outputs(std::span<const AuxiliaryPtr> auxiliaries, const Dataset &data, std::size_t jobs) {
    LabelMatrix out{ data.size(), auxiliaries.size() };
    for (std::size_t j = 0; j < auxiliaries.size(); ++j) {
        const auto &aux = *auxiliaries[j];
        if (!aux.deployable() || jobs <= 1 || data.size() < 2 * jobs) {
            const LabelVector column = aux.predict(data);
            for (std::size_t i = 0; i < data.size(); ++i) {
                out(i, j) = column[i];
            }
            continue;
        }
        // disjoint row ranges; each cell is written by exactly one thread
        const std::size_t chunk = (data.size() + jobs - 1) / jobs;
        std::vector<std::jthread> workers;
        for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
            const std::size_t end = std::min(data.size(), begin + chunk);
            workers.emplace_back([&, begin, end] {
                for (std::size_t i = begin; i < end; ++i) {
                    out(i, j) = aux.predict_one(data[i].features);
                }
            });
        }
    }
    return out;
}

namespace {

void check_outputs(const Dataset &data, const LabelMatrix &outputs, std::size_t m) {
    if (m == 0) {
        throw parameter_error("adaptation needs at least one auxiliary classifier");
    }
    if (outputs.cols() != m) {
        throw parameter_error("auxiliary output matrix has " + std::to_string(outputs.cols()) + " columns for " + std::to_string(m) + " auxiliaries");
    }
    if (outputs.rows() != data.size()) {
        throw shape_error("auxiliary output rows (" + std::to_string(outputs.rows()) + ") != examples (" + std::to_string(data.size()) + ")");
    }
}

AdaptedModel unpack(LinearModel trained, std::vector<AuxiliaryPtr> auxiliaries, std::size_t base_dimension, Measure m, double B, bool with_delta) {
    const std::size_t k = auxiliaries.size();
    AdaptedModel model;
    model.auxiliaries = std::move(auxiliaries);
    model.B = B;
    model.measure = m;
    model.xi = trained.xi;
    model.stats = std::move(trained.stats);
    model.ensemble_weights.resize(k);
    const double root_b = std::sqrt(B);
    for (std::size_t j = 0; j < k; ++j) {
        model.ensemble_weights[j] = trained.w[j] / root_b;
    }
    model.delta_weights.assign(base_dimension, 0.0);
    if (with_delta) {
        std::copy(trained.w.begin() + static_cast<std::ptrdiff_t>(k), trained.w.end(), model.delta_weights.begin());
    }
    model.solution = std::move(trained.w);
    return model;
}

}  // namespace

AdaptedModel adapt_with_outputs(const Dataset &data, const LabelMatrix &outputs, std::vector<AuxiliaryPtr> auxiliaries, Measure m,
                                const AdaptationParams &params, const TrainOptions &opts) {
    check_outputs(data, outputs, auxiliaries.size());
    const AugmentedDataset aug = augment(data, outputs, params.B);
    LinearModel trained = cutting_plane_train(aug.augmented, m, params.solver, opts);
    return unpack(std::move(trained), std::move(auxiliaries), data.dimension(), m, params.B, true);
}

AdaptedModel capo_adapt(const Dataset &data, std::vector<AuxiliaryPtr> auxiliaries, Measure m, const AdaptationParams &params, const TrainOptions &opts,
                        std::size_t jobs) {
    if (auxiliaries.empty()) {
        throw parameter_error("adaptation needs at least one auxiliary classifier");
    }
    const LabelMatrix outputs = compute_aux_outputs(auxiliaries, data, jobs);
    return adapt_with_outputs(data, outputs, std::move(auxiliaries), m, params, opts);
}

AdaptedModel weighted_ensemble(const Dataset &data, const LabelMatrix &outputs, std::vector<AuxiliaryPtr> auxiliaries, Measure m,
                               const AdaptationParams &params, const TrainOptions &opts) {
    check_outputs(data, outputs, auxiliaries.size());
    if (!(params.B > 0.0) || !std::isfinite(params.B)) {
        throw parameter_error("B must be a positive finite real");
    }
    std::vector<Example> examples;
    examples.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        examples.push_back({ augment_features(SparseVector{}, outputs.row(i), params.B), data[i].label });
    }
    const Dataset ensemble_only{ std::move(examples), auxiliaries.size() };
    LinearModel trained = cutting_plane_train(ensemble_only, m, params.solver, opts);
    return unpack(std::move(trained), std::move(auxiliaries), data.dimension(), m, params.B, false);
}

AdaptedPrediction predict_adapted(const AdaptedModel &model, std::span<const Label> aux_row, const SparseVector &x) {
    double decision = 0.0;
    for (std::size_t j = 0; j < model.ensemble_weights.size(); ++j) {
        decision += model.ensemble_weights[j] * value(aux_row[j]);
    }
    decision += x.dot(model.delta_weights);
    return { decision, sign_label(decision) };
}

AdaptedPrediction predict_adapted(const AdaptedModel &model, const SparseVector &x) {
    LabelVector row;
    row.reserve(model.auxiliaries.size());
    for (const auto &aux : model.auxiliaries) {
        row.push_back(aux->predict_one(x));
    }
    return predict_adapted(model, row, x);
}

std::vector<double> adapted_decisions(const AdaptedModel &model, const Dataset &data, const LabelMatrix &outputs) {
    check_outputs(data, outputs, model.aux_count());
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out[i] = predict_adapted(model, outputs.row(i), data[i].features).decision;
    }
    return out;
}

std::vector<double> adapted_decisions(const AdaptedModel &model, const Dataset &data, std::size_t jobs) {
    return adapted_decisions(model, data, compute_aux_outputs(model.auxiliaries, data, jobs));
}

double delta_norm(const AdaptedModel &model) noexcept {
    double sum = 0.0;
    for (const double v : model.delta_weights) {
        sum += v * v;
    }
    return sum;
}

// ---------------------------------------------------------------------------
// model files

namespace {

template <typename T>
T field(const nlohmann::json &j, const char *key) {
    if (!j.is_object() || !j.contains(key)) {
        throw format_error(std::string{ "model file is missing '" } + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception &e) {
        throw format_error(std::string{ "model file field '" } + key + "': " + e.what());
    }
}

Measure measure_field(const nlohmann::json &j) {
    try {
        return parse_measure(field<std::string>(j, "measure"));
    } catch (const parameter_error &e) {
        throw format_error(e.what());
    }
}

}  // namespace

nlohmann::json linear_model_to_json(const LinearModel &model, Measure m, std::size_t dimension) {
    std::vector<double> w = model.w;
    w.resize(dimension, 0.0);
    return { { "kind", "linear" },
             { "measure", measure_name(m) },
             { "dimension", dimension },
             { "xi", model.xi },
             { "iterations", model.stats.iterations },
             { "inference_count", model.stats.inference_count },
             { "converged", model.stats.converged },
             { "w", std::move(w) } };
}

std::vector<double> linear_weights_from_json(const nlohmann::json &j) {
    if (field<std::string>(j, "kind") != "linear") {
        throw format_error("not a linear model file");
    }
    auto w = field<std::vector<double>>(j, "w");
    if (w.size() != field<std::size_t>(j, "dimension")) {
        throw format_error("linear model weight count does not match its dimension");
    }
    if (!std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); })) {
        throw format_error("linear model has non-finite weights");
    }
    return w;
}

nlohmann::json adapted_model_to_json(const AdaptedModel &model) {
    nlohmann::json aux = nlohmann::json::array();
    for (const auto &a : model.auxiliaries) {
        aux.push_back(a->to_json());
    }
    return { { "kind", "adapted" },
             { "measure", measure_name(model.measure) },
             { "B", model.B },
             { "a", model.ensemble_weights },
             { "dimension", model.delta_weights.size() },
             { "w", model.delta_weights },
             { "deployable", model.deployable() },
             { "xi", model.xi },
             { "iterations", model.stats.iterations },
             { "inference_count", model.stats.inference_count },
             { "converged", model.stats.converged },
             { "auxiliaries", std::move(aux) } };
}

AdaptedModel adapted_model_from_json(const nlohmann::json &j) {
    if (field<std::string>(j, "kind") != "adapted") {
        throw format_error("not an adapted model file");
    }
    AdaptedModel model;
    model.measure = measure_field(j);
    model.B = field<double>(j, "B");
    if (!(model.B > 0.0) || !std::isfinite(model.B)) {
        throw format_error("adapted model has an invalid B");
    }
    model.ensemble_weights = field<std::vector<double>>(j, "a");
    model.delta_weights = field<std::vector<double>>(j, "w");
    if (model.delta_weights.size() != field<std::size_t>(j, "dimension")) {
        throw format_error("adapted model weight count does not match its dimension");
    }
    model.xi = field<double>(j, "xi");
    model.stats.iterations = field<std::size_t>(j, "iterations");
    model.stats.inference_count = field<std::size_t>(j, "inference_count");
    model.stats.converged = field<bool>(j, "converged");
    for (const auto &aj : field<nlohmann::json>(j, "auxiliaries")) {
        if (field<std::string>(aj, "kind") == "external") {
            model.auxiliaries.push_back(std::make_shared<ExternalPredictions>(LabelVector{}, field<std::string>(aj, "path")));
        } else {
            model.auxiliaries.push_back(auxiliary_from_json(aj));
        }
    }
    if (model.auxiliaries.empty() || model.auxiliaries.size() != model.ensemble_weights.size()) {
        throw format_error("adapted model needs one ensemble weight per auxiliary");
    }
    const double root_b = std::sqrt(model.B);
    for (const double a : model.ensemble_weights) {
        model.solution.push_back(a * root_b);
    }
    model.solution.insert(model.solution.end(), model.delta_weights.begin(), model.delta_weights.end());
    if (!std::all_of(model.solution.begin(), model.solution.end(), [](double v) { return std::isfinite(v); })) {
        throw format_error("adapted model has non-finite weights");
    }
    return model;
}

void bind_external_predictions(AdaptedModel &model, std::span<const std::filesystem::path> files, std::size_t n) {
    std::size_t next = 0;
    for (auto &aux : model.auxiliaries) {
        if (aux->deployable()) {
            continue;
        }
        if (next >= files.size()) {
            throw alignment_error("model has more external-prediction auxiliaries than supplied prediction files");
        }
        aux = std::make_shared<ExternalPredictions>(load_external_predictions(files[next++], n));
    }
    if (next != files.size()) {
        throw alignment_error("more prediction files supplied than the model has external-prediction auxiliaries");
    }
}

}  // namespace perfadapt
