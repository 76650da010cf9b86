#include "perfadapt/auxiliary.hpp"

#include "perfadapt/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace perfadapt {

LabelVector AuxiliaryClassifier::predict(const Dataset &data) const {
    LabelVector out;
    out.reserve(data.size());
    for (const auto &ex : data.examples()) {
        out.push_back(predict_one(ex.features));
    }
    return out;
}

namespace {

double feature_value(const SparseVector &x, std::uint32_t feature) {
    const auto entries = x.entries();
    const auto it = std::lower_bound(entries.begin(), entries.end(), feature, [](const Feature &f, std::uint32_t j) { return f.index < j; });
    return (it != entries.end() && it->index == feature) ? it->value : 0.0;
}

template <typename T>
T json_get(const nlohmann::json &j, const char *key) {
    if (!j.is_object() || !j.contains(key)) {
        throw format_error(std::string{ "model JSON is missing '" } + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception &e) {
        throw format_error(std::string{ "model JSON field '" } + key + "': " + e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// tree

TreeModel::TreeModel(std::vector<Node> nodes, TreeParams params) :
    nodes_{ std::move(nodes) },
    params_{ params } {
    if (nodes_.empty()) {
        throw format_error("a tree needs at least one node");
    }
    for (const auto &node : nodes_) {
        const auto n = static_cast<std::int32_t>(nodes_.size());
        if (!node.is_leaf() && (node.left >= n || node.right < 0 || node.right >= n)) {
            throw format_error("tree node refers to a missing child");
        }
    }
}

Label TreeModel::predict_one(const SparseVector &x) const {
    std::size_t k = 0;
    for (std::size_t guard = 0; guard <= nodes_.size(); ++guard) {
        const Node &node = nodes_[k];
        if (node.is_leaf()) {
            return node.leaf;
        }
        k = static_cast<std::size_t>(feature_value(x, node.feature) <= node.threshold ? node.left : node.right);
    }
    throw format_error("tree contains a cycle");
}

std::size_t TreeModel::depth() const {
    std::vector<std::pair<std::size_t, std::size_t>> stack{ { 0, 0 } };
    std::size_t deepest = 0;
    while (!stack.empty()) {
        const auto [k, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (!nodes_[k].is_leaf() && d <= nodes_.size()) {
            stack.emplace_back(static_cast<std::size_t>(nodes_[k].left), d + 1);
            stack.emplace_back(static_cast<std::size_t>(nodes_[k].right), d + 1);
        }
    }
    return deepest;
}

std::string TreeModel::name() const {
    return "tree(depth=" + std::to_string(params_.max_depth) + ",min_leaf=" + std::to_string(params_.min_leaf_size) + ",nodes=" + std::to_string(nodes_.size()) + ")";
}

nlohmann::json TreeModel::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto &node : nodes_) {
        if (node.is_leaf()) {
            nodes.push_back({ { "leaf", value(node.leaf) } });
        } else {
            nodes.push_back({ { "feature", node.feature }, { "threshold", node.threshold }, { "left", node.left }, { "right", node.right } });
        }
    }
    return { { "kind", "tree" },
             { "max_depth", params_.max_depth },
             { "min_leaf_size", params_.min_leaf_size },
             { "seed", params_.seed },
             { "nodes", std::move(nodes) } };
}

TreeModel TreeModel::from_json(const nlohmann::json &j) {
    if (json_get<std::string>(j, "kind") != "tree") {
        throw format_error("not a tree model");
    }
    TreeParams params;
    params.max_depth = json_get<std::size_t>(j, "max_depth");
    params.min_leaf_size = json_get<std::size_t>(j, "min_leaf_size");
    params.seed = json_get<std::uint64_t>(j, "seed");
    std::vector<Node> nodes;
    for (const auto &jn : json_get<nlohmann::json>(j, "nodes")) {
        Node node;
        if (jn.contains("leaf")) {
            node.leaf = label_from_int(json_get<long>(jn, "leaf"));
        } else {
            node.feature = json_get<std::uint32_t>(jn, "feature");
            node.threshold = json_get<double>(jn, "threshold");
            node.left = json_get<std::int32_t>(jn, "left");
            node.right = json_get<std::int32_t>(jn, "right");
        }
        nodes.push_back(node);
    }
    return TreeModel{ std::move(nodes), params };
}

namespace {

struct ClassCounts {
    std::size_t pos = 0;
    std::size_t neg = 0;

    [[nodiscard]] std::size_t total() const noexcept { return pos + neg; }
    // n * gini = n - (pos^2 + neg^2) / n
    [[nodiscard]] double weighted_gini() const noexcept {
        if (total() == 0) {
            return 0.0;
        }
        const auto n = static_cast<double>(total());
        return n - (static_cast<double>(pos) * static_cast<double>(pos) + static_cast<double>(neg) * static_cast<double>(neg)) / n;
    }
    [[nodiscard]] Label majority() const noexcept { return pos >= neg ? Label::positive : Label::negative; }
};

class TreeBuilder {
  public:
    TreeBuilder(const Dataset &data, const TreeParams &params) :
        data_{ data },
        params_{ params },
        feature_order_(data.dimension()),
        buckets_(data.dimension()) {
        std::iota(feature_order_.begin(), feature_order_.end(), std::uint32_t{ 0 });
        std::mt19937_64 rng{ params.seed };
        std::shuffle(feature_order_.begin(), feature_order_.end(), rng);
    }

    std::vector<TreeModel::Node> build() {
        std::vector<std::size_t> all(data_.size());
        std::iota(all.begin(), all.end(), std::size_t{ 0 });
        grow(all, 0);
        return std::move(nodes_);
    }

  private:
    struct Split {
        std::uint32_t feature = 0;
        double threshold = 0.0;
        double gain = -1.0;
    };

    std::int32_t grow(const std::vector<std::size_t> &members, std::size_t depth) {
        ClassCounts counts;
        for (const std::size_t i : members) {
            data_[i].label == Label::positive ? ++counts.pos : ++counts.neg;
        }
        const auto id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back({});
        nodes_[static_cast<std::size_t>(id)].leaf = counts.majority();

        if (depth >= params_.max_depth || counts.pos == 0 || counts.neg == 0 || members.size() < 2 * std::max<std::size_t>(params_.min_leaf_size, 1)) {
            return id;
        }
        const Split split = best_split(members, counts);
        if (split.gain < 0.0) {
            return id;
        }

        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        for (const std::size_t i : members) {
            (feature_value(data_[i].features, split.feature) <= split.threshold ? left : right).push_back(i);
        }
        const std::int32_t l = grow(left, depth + 1);
        const std::int32_t r = grow(right, depth + 1);
        auto &node = nodes_[static_cast<std::size_t>(id)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = l;
        node.right = r;
        node.leaf = Label::positive;
        return id;
    }

    Split best_split(const std::vector<std::size_t> &members, const ClassCounts &counts) {
        for (auto &b : buckets_) {
            b.clear();
        }
        for (const std::size_t i : members) {
            for (const auto &[index, v] : data_[i].features.entries()) {
                buckets_[index].push_back({ v, data_[i].label });
            }
        }

        const std::size_t min_leaf = std::max<std::size_t>(params_.min_leaf_size, 1);
        const double parent = counts.weighted_gini();
        Split best;
        for (const std::uint32_t f : feature_order_) {
            auto &bucket = buckets_[f];
            if (bucket.empty()) {
                continue;
            }
            // implicit zeros of the sparse rows
            ClassCounts zeros = counts;
            for (const auto &[v, y] : bucket) {
                y == Label::positive ? --zeros.pos : --zeros.neg;
            }
            if (zeros.total() > 0) {
                for (std::size_t k = 0; k < zeros.pos; ++k) {
                    bucket.push_back({ 0.0, Label::positive });
                }
                for (std::size_t k = 0; k < zeros.neg; ++k) {
                    bucket.push_back({ 0.0, Label::negative });
                }
            }
            std::sort(bucket.begin(), bucket.end(), [](const auto &a, const auto &b) { return a.first < b.first; });

            ClassCounts left;
            for (std::size_t k = 0; k + 1 < bucket.size(); ++k) {
                bucket[k].second == Label::positive ? ++left.pos : ++left.neg;
                if (bucket[k].first == bucket[k + 1].first) {
                    continue;
                }
                const ClassCounts right{ counts.pos - left.pos, counts.neg - left.neg };
                if (left.total() < min_leaf || right.total() < min_leaf) {
                    continue;
                }
                const double gain = (parent - left.weighted_gini() - right.weighted_gini()) / static_cast<double>(counts.total());
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = f;
                    best.threshold = 0.5 * (bucket[k].first + bucket[k + 1].first);
                }
            }
        }
        if (best.gain < 0.0) {
            best.gain = -1.0;
        }
        return best;
    }

    const Dataset &data_;
    TreeParams params_;
    std::vector<std::uint32_t> feature_order_;
    std::vector<std::vector<std::pair<double, Label>>> buckets_;
    std::vector<TreeModel::Node> nodes_;
};

}  // namespace

TreeModel train_tree(const Dataset &data, const TreeParams &params) {
    if (data.empty()) {
        throw training_error("cannot train a tree on an empty dataset");
    }
    TreeBuilder builder{ data, params };
    return TreeModel{ builder.build(), params };
}

// ---------------------------------------------------------------------------
// linear SGD

LinearSgdModel::LinearSgdModel(std::vector<double> weights, double bias, SgdParams params) :
    weights_{ std::move(weights) },
    bias_{ bias },
    params_{ params } {
    if (!std::isfinite(bias_) || !std::all_of(weights_.begin(), weights_.end(), [](double v) { return std::isfinite(v); })) {
        throw training_error("linear model has non-finite weights");
    }
}

Label LinearSgdModel::predict_one(const SparseVector &x) const {
    return sign_label(decision(x));
}

std::string LinearSgdModel::name() const {
    std::ostringstream os;
    os << "sgd(lambda=" << params_.lambda << ",epochs=" << params_.epochs << ",seed=" << params_.seed << ")";
    return os.str();
}

nlohmann::json LinearSgdModel::to_json() const {
    return { { "kind", "sgd" }, { "lambda", params_.lambda }, { "epochs", params_.epochs }, { "seed", params_.seed }, { "bias", bias_ }, { "weights", weights_ } };
}

LinearSgdModel LinearSgdModel::from_json(const nlohmann::json &j) {
    if (json_get<std::string>(j, "kind") != "sgd") {
        throw format_error("not an sgd model");
    }
    SgdParams params;
    params.lambda = json_get<double>(j, "lambda");
    params.epochs = json_get<std::size_t>(j, "epochs");
    params.seed = json_get<std::uint64_t>(j, "seed");
    return LinearSgdModel{ json_get<std::vector<double>>(j, "weights"), json_get<double>(j, "bias"), params };
}

LinearSgdModel train_linear_sgd(const Dataset &data, const SgdParams &params) {
    if (data.size() < 2 || data.positives() == 0 || data.negatives() == 0) {
        throw training_error("linear SGD needs at least one example of each class");
    }
    if (!(params.lambda > 0.0) || params.epochs == 0) {
        throw parameter_error("linear SGD needs lambda > 0 and epochs > 0");
    }
    const std::size_t d = data.dimension();
    // w = scale * v; v[d] is the weight of the constant bias feature
    std::vector<double> v(d + 1, 0.0);
    double scale = 1.0;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    std::mt19937_64 rng{ params.seed };

    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (const std::size_t i : order) {
            ++t;
            const double eta = 1.0 / (params.lambda * static_cast<double>(t));
            const auto &ex = data[i];
            const double y = value(ex.label);
            const double margin = y * scale * (ex.features.dot(v) + v[d]);

            if (t == 1) {
                std::fill(v.begin(), v.end(), 0.0);
                scale = 1.0;
            } else {
                scale *= 1.0 - 1.0 / static_cast<double>(t);
            }
            if (margin < 1.0) {
                const double step = eta * y / scale;
                ex.features.add_to(std::span<double>{ v }.first(d), step);
                v[d] += step;
            }
            if (scale < 1e-9) {
                for (double &vi : v) {
                    vi *= scale;
                }
                scale = 1.0;
            }
        }
    }
    for (double &vi : v) {
        vi *= scale;
    }
    const double bias = v[d];
    v.pop_back();
    return LinearSgdModel{ std::move(v), bias, params };
}

// ---------------------------------------------------------------------------
// external predictions

ExternalPredictions::ExternalPredictions(LabelVector predictions, std::filesystem::path source) :
    predictions_{ std::move(predictions) },
    source_{ std::move(source) } {}

LabelVector ExternalPredictions::predict(const Dataset &data) const {
    if (data.size() != predictions_.size()) {
        throw alignment_error("predictions from " + source_.string() + " have " + std::to_string(predictions_.size()) + " entries, dataset has " +
                              std::to_string(data.size()));
    }
    return predictions_;
}

Label ExternalPredictions::predict_one(const SparseVector &) const {
    throw alignment_error("external predictions from " + source_.string() + " cannot score unseen examples");
}

std::string ExternalPredictions::name() const {
    return "pred(" + source_.filename().string() + ")";
}

nlohmann::json ExternalPredictions::to_json() const {
    return { { "kind", "external" }, { "path", source_.string() }, { "n", predictions_.size() } };
}

ExternalPredictions load_external_predictions(const std::filesystem::path &path, std::size_t expected_n) {
    notify_file_access(path);
    std::ifstream in{ path };
    if (!in) {
        throw alignment_error("cannot open predictions file " + path.string());
    }
    LabelVector predictions;
    std::string token;
    while (in >> token) {
        std::string_view tv{ token };
        if (!tv.empty() && tv.front() == '+') {
            tv.remove_prefix(1);
        }
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(tv.data(), tv.data() + tv.size(), v);
        if (ec != std::errc{} || ptr != tv.data() + tv.size() || !std::isfinite(v)) {
            throw labeling_error(path.string() + ": token " + std::to_string(predictions.size() + 1) + " ('" + token + "') is not a number");
        }
        if (v == 0.0) {
            throw labeling_error(path.string() + ": token " + std::to_string(predictions.size() + 1) + " is zero and has no sign");
        }
        predictions.push_back(sign_label(v));
    }
    if (predictions.size() != expected_n) {
        throw alignment_error(path.string() + " has " + std::to_string(predictions.size()) + " predictions, expected " + std::to_string(expected_n));
    }
    return ExternalPredictions{ std::move(predictions), path };
}

AuxiliaryPtr auxiliary_from_json(const nlohmann::json &j) {
    const auto kind = json_get<std::string>(j, "kind");
    if (kind == "tree") {
        return std::make_shared<TreeModel>(TreeModel::from_json(j));
    }
    if (kind == "sgd") {
        return std::make_shared<LinearSgdModel>(LinearSgdModel::from_json(j));
    }
    if (kind == "external") {
        throw format_error("external predictions cannot be rebuilt from JSON; supply a predictions file");
    }
    throw format_error("unknown auxiliary kind '" + kind + "'");
}

}  // namespace perfadapt
