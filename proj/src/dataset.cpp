#include "perfadapt/dataset.hpp"

#include "perfadapt/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string_view>

namespace perfadapt {

Label label_from_int(long v) {
    if (v == 1) {
        return Label::positive;
    }
    if (v == -1) {
        return Label::negative;
    }
    throw labeling_error("label must be -1 or +1, got " + std::to_string(v));
}

// ---------------------------------------------------------------------------
// SparseVector

SparseVector::SparseVector(std::vector<Feature> entries) :
    entries_{ std::move(entries) } {
    for (std::size_t k = 0; k < entries_.size(); ++k) {
        if (!std::isfinite(entries_[k].value)) {
            throw parameter_error("non-finite feature value at index " + std::to_string(entries_[k].index));
        }
        if (k > 0 && entries_[k].index <= entries_[k - 1].index) {
            throw parameter_error("feature indices must be strictly increasing");
        }
    }
}

SparseVector SparseVector::from_dense(std::span<const double> dense) {
    std::vector<Feature> entries;
    for (std::size_t j = 0; j < dense.size(); ++j) {
        if (dense[j] != 0.0) {
            entries.push_back({ static_cast<std::uint32_t>(j), dense[j] });
        }
    }
    return SparseVector{ std::move(entries) };
}

std::size_t SparseVector::min_dimension() const noexcept {
    return entries_.empty() ? 0 : static_cast<std::size_t>(entries_.back().index) + 1;
}

double SparseVector::dot(std::span<const double> dense) const noexcept {
    double sum = 0.0;
    for (const auto &[index, value] : entries_) {
        if (index >= dense.size()) {
            break;
        }
        sum += value * dense[index];
    }
    return sum;
}

double SparseVector::dot(const SparseVector &other) const noexcept {
    double sum = 0.0;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    while (a != entries_.end() && b != other.entries_.end()) {
        if (a->index < b->index) {
            ++a;
        } else if (b->index < a->index) {
            ++b;
        } else {
            sum += a->value * b->value;
            ++a;
            ++b;
        }
    }
    return sum;
}

double SparseVector::squared_norm() const noexcept {
    double sum = 0.0;
    for (const auto &e : entries_) {
        sum += e.value * e.value;
    }
    return sum;
}

void SparseVector::add_to(std::span<double> dense, double scale) const {
    if (min_dimension() > dense.size()) {
        throw shape_error("dense vector too short for sparse update");
    }
    for (const auto &[index, value] : entries_) {
        dense[index] += scale * value;
    }
}

std::vector<double> SparseVector::to_dense(std::size_t dimension) const {
    std::vector<double> dense(std::max(dimension, min_dimension()), 0.0);
    add_to(dense, 1.0);
    return dense;
}

SparseVector SparseVector::shifted(std::uint32_t offset) const {
    SparseVector out;
    out.entries_.reserve(entries_.size());
    for (const auto &[index, value] : entries_) {
        out.entries_.push_back({ index + offset, value });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<Example> examples, std::size_t dimension) :
    examples_{ std::move(examples) },
    dimension_{ dimension } {
    for (const auto &ex : examples_) {
        dimension_ = std::max(dimension_, ex.features.min_dimension());
        if (ex.label == Label::positive) {
            ++positives_;
        } else if (ex.label != Label::negative) {
            throw labeling_error("example label must be -1 or +1");
        }
    }
}

LabelVector Dataset::labels() const {
    LabelVector y;
    y.reserve(examples_.size());
    for (const auto &ex : examples_) {
        y.push_back(ex.label);
    }
    return y;
}

std::vector<double> Dataset::scores(std::span<const double> w) const {
    std::vector<double> s;
    s.reserve(examples_.size());
    for (const auto &ex : examples_) {
        s.push_back(ex.features.dot(w));
    }
    return s;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    std::vector<Example> picked;
    picked.reserve(indices.size());
    for (const std::size_t i : indices) {
        picked.push_back(examples_.at(i));
    }
    return Dataset{ std::move(picked), dimension_ };
}

// ---------------------------------------------------------------------------
// LabelMatrix

LabelMatrix::LabelMatrix(std::size_t rows, std::size_t cols, Label fill) :
    rows_{ rows },
    cols_{ cols },
    data_(rows * cols, fill) {}

LabelMatrix LabelMatrix::from_columns(std::span<const LabelVector> columns) {
    const std::size_t rows = columns.empty() ? 0 : columns.front().size();
    LabelMatrix m{ rows, columns.size() };
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].size() != rows) {
            throw shape_error("auxiliary output columns differ in length");
        }
        for (std::size_t r = 0; r < rows; ++r) {
            m(r, c) = columns[c][r];
        }
    }
    return m;
}

LabelVector LabelMatrix::column(std::size_t c) const {
    LabelVector col;
    col.reserve(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        col.push_back((*this)(r, c));
    }
    return col;
}

LabelMatrix LabelMatrix::subset_rows(std::span<const std::size_t> indices) const {
    LabelMatrix m{ indices.size(), cols_ };
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto src = row(indices[k]);
        std::copy(src.begin(), src.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(k * cols_));
    }
    return m;
}

// ---------------------------------------------------------------------------
// augmentation

SparseVector augment_features(const SparseVector &x, std::span<const Label> aux_row, double B) {
    const double scale = 1.0 / std::sqrt(B);
    std::vector<Feature> entries;
    entries.reserve(aux_row.size() + x.size());
    for (std::size_t j = 0; j < aux_row.size(); ++j) {
        entries.push_back({ static_cast<std::uint32_t>(j), value(aux_row[j]) * scale });
    }
    const auto offset = static_cast<std::uint32_t>(aux_row.size());
    for (const auto &[index, v] : x.entries()) {
        entries.push_back({ index + offset, v });
    }
    return SparseVector{ std::move(entries) };
}

AugmentedDataset augment(const Dataset &base, const LabelMatrix &aux_outputs, double B) {
    if (!(B > 0.0) || !std::isfinite(B)) {
        throw parameter_error("B must be a positive finite real");
    }
    if (aux_outputs.rows() != base.size()) {
        throw shape_error("auxiliary output rows (" + std::to_string(aux_outputs.rows()) + ") != examples (" + std::to_string(base.size()) + ")");
    }
    std::vector<Example> examples;
    examples.reserve(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        examples.push_back({ augment_features(base[i].features, aux_outputs.row(i), B), base[i].label });
    }
    const std::size_t dimension = aux_outputs.cols() + base.dimension();
    return AugmentedDataset{ base, aux_outputs, B, Dataset{ std::move(examples), dimension } };
}

// ---------------------------------------------------------------------------
// SVMlight text format

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view token, double &out) {
    if (!token.empty() && token.front() == '+') {
        token.remove_prefix(1);
    }
    const auto *end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

Label parse_label(std::string_view token, std::size_t line) {
    double v = 0.0;
    if (!parse_double(token, v)) {
        throw parse_error("unparseable label '" + std::string{ token } + "'", line);
    }
    if (v == 1.0) {
        return Label::positive;
    }
    if (v == -1.0) {
        return Label::negative;
    }
    throw labeling_error("line " + std::to_string(line) + ": label must be -1 or +1, got '" + std::string{ token } + "'");
}

}  // namespace

Dataset parse_svmlight(std::istream &in) {
    std::vector<Example> examples;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line{ raw };
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }

        std::vector<std::string_view> tokens;
        std::size_t pos = 0;
        while (pos < line.size()) {
            const auto start = line.find_first_not_of(" \t", pos);
            if (start == std::string_view::npos) {
                break;
            }
            auto stop = line.find_first_of(" \t", start);
            if (stop == std::string_view::npos) {
                stop = line.size();
            }
            tokens.push_back(line.substr(start, stop - start));
            pos = stop;
        }

        const Label label = parse_label(tokens.front(), line_no);
        std::vector<Feature> features;
        features.reserve(tokens.size() - 1);
        for (std::size_t t = 1; t < tokens.size(); ++t) {
            const auto tok = tokens[t];
            const auto colon = tok.find(':');
            if (colon == std::string_view::npos) {
                throw parse_error("expected <index>:<value>, got '" + std::string{ tok } + "'", line_no);
            }
            const auto key = tok.substr(0, colon);
            if (key == "qid") {
                continue;
            }
            unsigned long long index = 0;
            const auto [kp, kec] = std::from_chars(key.data(), key.data() + key.size(), index);
            if (kec != std::errc{} || kp != key.data() + key.size() || index == 0 || index > UINT32_MAX) {
                throw parse_error("invalid feature index '" + std::string{ key } + "'", line_no);
            }
            double v = 0.0;
            if (!parse_double(tok.substr(colon + 1), v) || !std::isfinite(v)) {
                throw parse_error("invalid feature value in '" + std::string{ tok } + "'", line_no);
            }
            const auto zero_based = static_cast<std::uint32_t>(index - 1);
            if (!features.empty() && zero_based <= features.back().index) {
                throw parse_error("feature indices must be strictly increasing", line_no);
            }
            features.push_back({ zero_based, v });
        }
        examples.push_back({ SparseVector{ std::move(features) }, label });
    }
    return Dataset{ std::move(examples) };
}

Dataset parse_svmlight(const std::string &text) {
    std::istringstream in{ text };
    return parse_svmlight(in);
}

Dataset read_svmlight_file(const std::filesystem::path &path) {
    notify_file_access(path);
    std::ifstream in{ path };
    if (!in) {
        throw parse_error("cannot open data file " + path.string());
    }
    try {
        return parse_svmlight(in);
    } catch (const parse_error &e) {
        throw parse_error(path.string() + ": " + e.what(), e.line());
    }
}

void write_svmlight(std::ostream &out, const Dataset &data) {
    std::array<char, 64> buf{};
    for (const auto &ex : data.examples()) {
        out << (ex.label == Label::positive ? "+1" : "-1");
        for (const auto &[index, v] : ex.features.entries()) {
            const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
            out << ' ' << (index + 1) << ':' << std::string_view(buf.data(), static_cast<std::size_t>(ptr - buf.data()));
        }
        out << '\n';
    }
}

void write_svmlight_file(const std::filesystem::path &path, const Dataset &data) {
    std::ofstream out{ path };
    if (!out) {
        throw format_error("cannot write " + path.string());
    }
    write_svmlight(out, data);
}

// ---------------------------------------------------------------------------
// scaling

MaxAbsScaler MaxAbsScaler::fit(const Dataset &data) {
    MaxAbsScaler s;
    std::vector<double> max_abs(data.dimension(), 0.0);
    for (const auto &ex : data.examples()) {
        for (const auto &[index, v] : ex.features.entries()) {
            max_abs[index] = std::max(max_abs[index], std::abs(v));
        }
    }
    s.factors_.resize(max_abs.size());
    for (std::size_t j = 0; j < max_abs.size(); ++j) {
        s.factors_[j] = max_abs[j] > 0.0 ? 1.0 / max_abs[j] : 1.0;
    }
    return s;
}

Dataset MaxAbsScaler::apply(const Dataset &data) const {
    std::vector<Example> out;
    out.reserve(data.size());
    for (const auto &ex : data.examples()) {
        std::vector<Feature> entries{ ex.features.entries().begin(), ex.features.entries().end() };
        for (auto &e : entries) {
            if (e.index < factors_.size()) {
                e.value *= factors_[e.index];
            }
        }
        out.push_back({ SparseVector{ std::move(entries) }, ex.label });
    }
    return Dataset{ std::move(out), data.dimension() };
}

// ---------------------------------------------------------------------------
// file access audit

namespace {
std::mutex hook_mutex;
FileAccessHook access_hook;
}  // namespace

void set_file_access_hook(FileAccessHook hook) {
    const std::lock_guard lock{ hook_mutex };
    access_hook = std::move(hook);
}

void notify_file_access(const std::filesystem::path &path) {
    const std::lock_guard lock{ hook_mutex };
    if (access_hook) {
        access_hook(path);
    }
}

}  // namespace perfadapt
