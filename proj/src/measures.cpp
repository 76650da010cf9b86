#include "perfadapt/measures.hpp"

#include "perfadapt/errors.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <string>

namespace perfadapt {

Measure parse_measure(std::string_view name) {
    std::string lower{ name };
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "err") {
        return Measure::error_rate;
    }
    if (lower == "f1") {
        return Measure::f1;
    }
    if (lower == "prbep") {
        return Measure::prbep;
    }
    if (lower == "auc") {
        return Measure::auc;
    }
    throw parameter_error("unknown measure '" + std::string{ name } + "' (expected err, f1, prbep or auc)");
}

std::string_view measure_name(Measure m) noexcept {
    switch (m) {
        case Measure::error_rate: return "err";
        case Measure::f1: return "f1";
        case Measure::prbep: return "prbep";
        case Measure::auc: return "auc";
    }
    return "?";
}

std::string_view measure_title(Measure m) noexcept {
    switch (m) {
        case Measure::error_rate: return "Accuracy";
        case Measure::f1: return "F1";
        case Measure::prbep: return "PRBEP";
        case Measure::auc: return "AUC";
    }
    return "?";
}

void require_defined(Measure m, std::size_t positives, std::size_t negatives) {
    if (positives + negatives == 0) {
        throw measure_undefined_error(std::string{ measure_name(m) } + " is undefined on an empty label vector");
    }
    if (needs_both_classes(m) && (positives == 0 || negatives == 0)) {
        throw measure_undefined_error(std::string{ measure_name(m) } + " needs at least one positive and one negative example");
    }
}

ContingencyTable contingency(std::span<const Label> truth, std::span<const Label> predicted) {
    if (truth.size() != predicted.size()) {
        throw shape_error("truth and prediction lengths differ");
    }
    ContingencyTable ct;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool actual = truth[i] == Label::positive;
        const bool guess = predicted[i] == Label::positive;
        if (actual) {
            guess ? ++ct.tp : ++ct.fn;
        } else {
            guess ? ++ct.fp : ++ct.tn;
        }
    }
    return ct;
}

double loss(Measure m, const ContingencyTable &ct) {
    require_defined(m, ct.positives(), ct.negatives());
    const auto tp = static_cast<double>(ct.tp);
    const auto fp = static_cast<double>(ct.fp);
    const auto fn = static_cast<double>(ct.fn);
    switch (m) {
        case Measure::error_rate:
            return 100.0 * (fp + fn) / static_cast<double>(ct.total());
        case Measure::f1:
            // 2tp + fp + fn >= p >= 1
            return 100.0 * (1.0 - 2.0 * tp / (2.0 * tp + fp + fn));
        case Measure::prbep:
            if (ct.tp + ct.fp != ct.positives()) {
                throw admissibility_error("PRBEP requires exactly p predicted positives");
            }
            return 100.0 * (1.0 - tp / static_cast<double>(ct.positives()));
        case Measure::auc:
            break;
    }
    throw parameter_error("AUC loss is defined on pair assignments, not contingency tables");
}

PairAssignment PairAssignment::by_threshold(std::vector<double> positive_keys, std::vector<double> negative_keys) {
    PairAssignment pairs;
    pairs.positives_ = positive_keys.size();
    pairs.negatives_ = negative_keys.size();
    pairs.threshold_ = true;
    std::vector<double> sorted = negative_keys;
    std::sort(sorted.begin(), sorted.end());
    for (const double key : positive_keys) {
        pairs.threshold_count_ += static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), key));
    }
    pairs.positive_keys_ = std::move(positive_keys);
    pairs.negative_keys_ = std::move(negative_keys);
    return pairs;
}

void PairAssignment::set_swapped(std::size_t i, std::size_t j, bool v) {
    if (threshold_) {
        swapped_.assign(positives_ * negatives_, 0);
        for (std::size_t a = 0; a < positives_; ++a) {
            for (std::size_t b = 0; b < negatives_; ++b) {
                swapped_[a * negatives_ + b] = positive_keys_[a] < negative_keys_[b] ? 1 : 0;
            }
        }
        threshold_ = false;
        positive_keys_.clear();
        negative_keys_.clear();
    }
    swapped_[i * negatives_ + j] = v ? 1 : 0;
}

std::size_t PairAssignment::swapped_count() const noexcept {
    if (threshold_) {
        return threshold_count_;
    }
    return static_cast<std::size_t>(std::count(swapped_.begin(), swapped_.end(), std::uint8_t{ 1 }));
}

bool operator==(const PairAssignment &a, const PairAssignment &b) {
    if (a.positives_ != b.positives_ || a.negatives_ != b.negatives_) {
        return false;
    }
    for (std::size_t i = 0; i < a.positives_; ++i) {
        for (std::size_t j = 0; j < a.negatives_; ++j) {
            if (a.swapped(i, j) != b.swapped(i, j)) {
                return false;
            }
        }
    }
    return true;
}

double auc_loss(std::span<const Label> truth, const PairAssignment &pairs) {
    const auto p = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), Label::positive));
    const std::size_t q = truth.size() - p;
    require_defined(Measure::auc, p, q);
    if (pairs.positives() != p || pairs.negatives() != q) {
        throw shape_error("pair assignment does not match the label vector");
    }
    return 100.0 * static_cast<double>(pairs.swapped_count()) / (static_cast<double>(p) * static_cast<double>(q));
}

namespace {

double auc_from_scores(std::span<const Label> truth, std::span<const double> scores, std::size_t p, std::size_t q) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // walk groups of equal score in ascending order; each positive beats every
    // negative strictly below it and ties with the negatives in its group
    double correct = 0.0;
    std::size_t negatives_below = 0;
    std::size_t k = 0;
    while (k < order.size()) {
        std::size_t end = k;
        std::size_t group_pos = 0;
        std::size_t group_neg = 0;
        while (end < order.size() && scores[order[end]] == scores[order[k]]) {
            truth[order[end]] == Label::positive ? ++group_pos : ++group_neg;
            ++end;
        }
        correct += static_cast<double>(group_pos) * (static_cast<double>(negatives_below) + 0.5 * static_cast<double>(group_neg));
        negatives_below += group_neg;
        k = end;
    }
    return correct / (static_cast<double>(p) * static_cast<double>(q));
}

double prbep_from_scores(std::span<const Label> truth, std::span<const double> scores, std::size_t p) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t hits = 0;
    for (std::size_t k = 0; k < p; ++k) {
        if (truth[order[k]] == Label::positive) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(p);
}

}  // namespace

double evaluate(Measure m, std::span<const Label> truth, std::span<const double> scores) {
    if (truth.size() != scores.size()) {
        throw shape_error("truth and score lengths differ");
    }
    const auto p = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), Label::positive));
    const std::size_t q = truth.size() - p;
    require_defined(m, p, q);

    switch (m) {
        case Measure::error_rate:
        case Measure::f1: {
            LabelVector predicted;
            predicted.reserve(scores.size());
            for (const double s : scores) {
                predicted.push_back(sign_label(s));
            }
            const auto ct = contingency(truth, predicted);
            return 1.0 - loss(m, ct) / 100.0;
        }
        case Measure::prbep:
            return prbep_from_scores(truth, scores, p);
        case Measure::auc:
            return auc_from_scores(truth, scores, p, q);
    }
    return 0.0;
}

double evaluate_predictions(Measure m, std::span<const Label> truth, std::span<const Label> predicted) {
    std::vector<double> scores;
    scores.reserve(predicted.size());
    for (const Label y : predicted) {
        scores.push_back(static_cast<double>(value(y)));
    }
    return evaluate(m, truth, scores);
}

}  // namespace perfadapt
