#include "perfadapt/errors.hpp"
#include "perfadapt/harness.hpp"

#include "toml.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace perfadapt {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) {
            return parts;
        }
        start = pos + 1;
    }
}

template <typename T>
bool parse_number(std::string_view token, T &out) {
    if (!token.empty() && token.front() == '+') {
        token.remove_prefix(1);
    }
    const auto *end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, out);
    return !token.empty() && ec == std::errc{} && ptr == end;
}

template <typename T>
T number_or_throw(std::string_view token, std::string_view what) {
    T v{};
    if (!parse_number(token, v)) {
        throw usage_error(std::string{ what } + ": '" + std::string{ token } + "' is not a valid number");
    }
    return v;
}

int power_of_two_exponent(std::string_view token) {
    if (token.substr(0, 2) != "2^") {
        throw usage_error("grid range ends must be powers of two like 2^-7, got '" + std::string{ token } + "'");
    }
    return number_or_throw<int>(token.substr(2), "grid exponent");
}

}  // namespace

std::vector<double> parse_grid(std::string_view text) {
    std::vector<double> grid;
    if (trim(text).empty()) {
        throw usage_error("empty grid");
    }
    for (const auto token : split(text, ',')) {
        if (token.empty()) {
            throw usage_error("empty entry in grid '" + std::string{ text } + "'");
        }
        if (const auto colon = token.find(':'); colon != std::string_view::npos) {
            const int lo = power_of_two_exponent(trim(token.substr(0, colon)));
            const int hi = power_of_two_exponent(trim(token.substr(colon + 1)));
            if (lo > hi) {
                throw usage_error("grid range '" + std::string{ token } + "' is empty");
            }
            for (int k = lo; k <= hi; ++k) {
                grid.push_back(std::ldexp(1.0, k));
            }
        } else if (token.substr(0, 2) == "2^") {
            grid.push_back(std::ldexp(1.0, power_of_two_exponent(token)));
        } else {
            grid.push_back(number_or_throw<double>(token, "grid value"));
        }
    }
    for (const double v : grid) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw usage_error("grid values must be positive and finite");
        }
    }
    return grid;
}

std::vector<double> default_c_grid() {
    return parse_grid("2^-7:2^7");
}

AuxSpec parse_aux_spec(std::string_view text) {
    AuxSpec spec;
    spec.text = std::string{ trim(text) };
    const std::string_view body = spec.text;
    const auto colon = body.find(':');
    const std::string_view kind = body.substr(0, colon);
    const std::string_view rest = colon == std::string_view::npos ? std::string_view{} : body.substr(colon + 1);

    if (kind == "pred") {
        spec.kind = AuxSpec::Kind::pred;
        const auto test_at = rest.find(",test=");
        spec.train_predictions = std::string{ trim(rest.substr(0, test_at)) };
        if (test_at != std::string_view::npos) {
            spec.test_predictions = std::string{ trim(rest.substr(test_at + 6)) };
        }
        if (spec.train_predictions.empty()) {
            throw usage_error("aux spec '" + spec.text + "' needs a predictions path");
        }
        return spec;
    }
    if (kind == "tree") {
        spec.kind = AuxSpec::Kind::tree;
    } else if (kind == "sgd") {
        spec.kind = AuxSpec::Kind::sgd;
    } else {
        throw usage_error("unknown auxiliary kind in '" + spec.text + "' (expected tree, sgd or pred)");
    }
    if (rest.empty()) {
        return spec;
    }
    for (const auto item : split(rest, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw usage_error("aux parameter '" + std::string{ item } + "' is not key=value");
        }
        const auto key = trim(item.substr(0, eq));
        const auto val = trim(item.substr(eq + 1));
        if (spec.kind == AuxSpec::Kind::tree && key == "depth") {
            spec.tree.max_depth = number_or_throw<std::size_t>(val, "tree depth");
        } else if (spec.kind == AuxSpec::Kind::tree && key == "min_leaf") {
            spec.tree.min_leaf_size = number_or_throw<std::size_t>(val, "tree min_leaf");
        } else if (spec.kind == AuxSpec::Kind::tree && key == "seed") {
            spec.tree.seed = number_or_throw<std::uint64_t>(val, "tree seed");
        } else if (spec.kind == AuxSpec::Kind::sgd && key == "lambda") {
            spec.sgd.lambda = number_or_throw<double>(val, "sgd lambda");
        } else if (spec.kind == AuxSpec::Kind::sgd && key == "epochs") {
            spec.sgd.epochs = number_or_throw<std::size_t>(val, "sgd epochs");
        } else if (spec.kind == AuxSpec::Kind::sgd && key == "seed") {
            spec.sgd.seed = number_or_throw<std::uint64_t>(val, "sgd seed");
        } else {
            throw usage_error("unknown parameter '" + std::string{ key } + "' in aux spec '" + spec.text + "'");
        }
    }
    if (spec.kind == AuxSpec::Kind::sgd && (!(spec.sgd.lambda > 0.0) || spec.sgd.epochs == 0)) {
        throw usage_error("sgd needs lambda > 0 and epochs > 0");
    }
    return spec;
}

void ExperimentConfig::validate() const {
    if (c_grid.empty()) {
        throw usage_error("the C grid is empty");
    }
    if (b_grid.empty()) {
        throw usage_error("the B grid is empty");
    }
    for (const double b : b_grid) {
        if (!(b > 0.0) || !std::isfinite(b)) {
            throw usage_error("B must be positive and finite");
        }
    }
    if (folds < 2) {
        throw usage_error("folds must be at least 2");
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw usage_error("epsilon must be positive and finite");
    }
    if (max_iterations == 0) {
        throw usage_error("max_iterations must be positive");
    }
    if (jobs == 0) {
        throw usage_error("jobs must be at least 1");
    }
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json aux_texts = nlohmann::json::array();
    for (const auto &a : aux) {
        aux_texts.push_back(a.text);
    }
    return { { "data", data.string() },
             { "test", test.string() },
             { "measure", measure_name(measure) },
             { "C", c_grid },
             { "B", b_grid },
             { "epsilon", epsilon },
             { "max_iterations", max_iterations },
             { "aux", std::move(aux_texts) },
             { "folds", folds },
             { "seed", seed } };
}

// ---------------------------------------------------------------------------
// TOML

namespace {

std::vector<double> grid_from_node(const toml::node &node, std::string_view key) {
    if (const auto *s = node.as_string()) {
        return parse_grid(s->get());
    }
    if (const auto v = node.value<double>()) {
        if (!(*v > 0.0) || !std::isfinite(*v)) {
            throw usage_error("grid values must be positive and finite");
        }
        return { *v };
    }
    if (const auto *arr = node.as_array()) {
        std::vector<double> grid;
        for (const auto &item : *arr) {
            const auto v = item.value<double>();
            if (!v) {
                throw usage_error("config key '" + std::string{ key } + "' must hold numbers");
            }
            grid.push_back(*v);
        }
        if (grid.empty()) {
            throw usage_error("config key '" + std::string{ key } + "' is an empty grid");
        }
        for (const double g : grid) {
            if (!(g > 0.0) || !std::isfinite(g)) {
                throw usage_error("grid values must be positive and finite");
            }
        }
        return grid;
    }
    throw usage_error("config key '" + std::string{ key } + "' must be a number, an array or a grid string");
}

template <typename T>
T scalar(const toml::node &node, std::string_view key) {
    const auto v = node.value<T>();
    if (!v) {
        throw usage_error("config key '" + std::string{ key } + "' has the wrong type");
    }
    return *v;
}

std::vector<std::string> strings(const toml::node &node, std::string_view key) {
    std::vector<std::string> out;
    if (const auto *s = node.as_string()) {
        out.push_back(s->get());
        return out;
    }
    const auto *arr = node.as_array();
    if (arr == nullptr) {
        throw usage_error("config key '" + std::string{ key } + "' must be a string or an array of strings");
    }
    for (const auto &item : *arr) {
        const auto *s = item.as_string();
        if (s == nullptr) {
            throw usage_error("config key '" + std::string{ key } + "' must hold strings");
        }
        out.push_back(s->get());
    }
    return out;
}

std::size_t count(const toml::node &node, std::string_view key) {
    const auto v = scalar<std::int64_t>(node, key);
    if (v < 0) {
        throw usage_error("config key '" + std::string{ key } + "' must be non-negative");
    }
    return static_cast<std::size_t>(v);
}

void apply_table(const toml::table &table, ExperimentConfig &config) {
    for (const auto &[k, node] : table) {
        const std::string_view key = k.str();
        if (key == "data") {
            config.data = scalar<std::string>(node, key);
        } else if (key == "test") {
            config.test = scalar<std::string>(node, key);
        } else if (key == "measure") {
            try {
                config.measure = parse_measure(scalar<std::string>(node, key));
            } catch (const parameter_error &e) {
                throw usage_error(e.what());
            }
        } else if (key == "C") {
            config.c_grid = grid_from_node(node, key);
        } else if (key == "B") {
            config.b_grid = grid_from_node(node, key);
        } else if (key == "epsilon") {
            config.epsilon = scalar<double>(node, key);
        } else if (key == "max_iterations") {
            config.max_iterations = count(node, key);
        } else if (key == "aux") {
            config.aux.clear();
            for (const auto &s : strings(node, key)) {
                config.aux.push_back(parse_aux_spec(s));
            }
        } else if (key == "folds") {
            config.folds = count(node, key);
        } else if (key == "seed") {
            config.seed = static_cast<std::uint64_t>(count(node, key));
        } else if (key == "jobs") {
            config.jobs = count(node, key);
        } else if (key == "out") {
            config.out = scalar<std::string>(node, key);
        } else if (key == "strict") {
            config.strict = scalar<bool>(node, key);
        } else if (key == "model") {
            config.model = scalar<std::string>(node, key);
        } else if (key == "aux_pred") {
            config.aux_predictions.clear();
            for (const auto &s : strings(node, key)) {
                config.aux_predictions.emplace_back(s);
            }
        } else {
            throw usage_error("unknown config key '" + std::string{ key } + "'");
        }
    }
}

}  // namespace

void load_config_text(std::string_view toml_text, ExperimentConfig &config) {
    try {
        apply_table(toml::parse(toml_text), config);
    } catch (const toml::parse_error &e) {
        std::ostringstream os;
        os << "config: " << e.description() << " (line " << e.source().begin.line << ")";
        throw usage_error(os.str());
    }
}

void load_config_file(const std::filesystem::path &path, ExperimentConfig &config) {
    try {
        apply_table(toml::parse_file(path.string()), config);
    } catch (const toml::parse_error &e) {
        std::ostringstream os;
        os << path.string() << ": " << e.description() << " (line " << e.source().begin.line << ")";
        throw usage_error(os.str());
    }
}

}  // namespace perfadapt
