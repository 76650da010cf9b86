#include "perfadapt/inference.hpp"

#include "perfadapt/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <numeric>

namespace perfadapt {

namespace {

struct ClassSplit {
    std::vector<std::size_t> positives;  // dataset indices, ascending
    std::vector<std::size_t> negatives;
};

ClassSplit split_by_class(const Dataset &data) {
    ClassSplit split;
    split.positives.reserve(data.positives());
    split.negatives.reserve(data.negatives());
    for (std::size_t i = 0; i < data.size(); ++i) {
        (data[i].label == Label::positive ? split.positives : split.negatives).push_back(i);
    }
    return split;
}

// Descending by score; equal scores keep ascending index order.
void sort_by_score_desc(std::vector<std::size_t> &idx, std::span<const double> s) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
}

SparseVector delta_from_labels(const Dataset &data, std::span<const Label> witness) {
    std::vector<double> dense(data.dimension(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int diff = value(data[i].label) - value(witness[i]);
        if (diff != 0) {
            data[i].features.add_to(dense, static_cast<double>(diff));
        }
    }
    return SparseVector::from_dense(dense);
}

// Per-example swap counts -> (2/pq) (sum_i c_i x_i - sum_j c_j x_j).
SparseVector delta_from_counts(const Dataset &data, const ClassSplit &split, std::span<const std::size_t> pos_counts,
                               std::span<const std::size_t> neg_counts) {
    const double scale = 2.0 / (static_cast<double>(split.positives.size()) * static_cast<double>(split.negatives.size()));
    std::vector<double> dense(data.dimension(), 0.0);
    for (std::size_t k = 0; k < split.positives.size(); ++k) {
        if (pos_counts[k] != 0) {
            data[split.positives[k]].features.add_to(dense, scale * static_cast<double>(pos_counts[k]));
        }
    }
    for (std::size_t k = 0; k < split.negatives.size(); ++k) {
        if (neg_counts[k] != 0) {
            data[split.negatives[k]].features.add_to(dense, -scale * static_cast<double>(neg_counts[k]));
        }
    }
    return SparseVector::from_dense(dense);
}

double pair_loss(std::size_t swapped, std::size_t p, std::size_t q) {
    return 100.0 * static_cast<double>(swapped) / (static_cast<double>(p) * static_cast<double>(q));
}

}  // namespace

ConstraintRecord most_violated_contingency(std::span<const double> w, const Dataset &data, Measure m) {
    if (m == Measure::auc) {
        throw parameter_error("most_violated_contingency does not handle AUC");
    }
    const std::size_t p = data.positives();
    const std::size_t q = data.negatives();
    require_defined(m, p, q);

    const auto s = data.scores(w);
    auto split = split_by_class(data);
    sort_by_score_desc(split.positives, s);
    sort_by_score_desc(split.negatives, s);

    std::vector<double> pos_prefix(p + 1, 0.0);
    std::vector<double> neg_prefix(q + 1, 0.0);
    for (std::size_t k = 0; k < p; ++k) {
        pos_prefix[k + 1] = pos_prefix[k] + s[split.positives[k]];
    }
    for (std::size_t k = 0; k < q; ++k) {
        neg_prefix[k + 1] = neg_prefix[k] + s[split.negatives[k]];
    }

    // objective(a, b) = Delta(a, b) + (2 P[a] - P[p]) + (2 N[b] - N[q])
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_a = 0;
    std::size_t best_b = 0;
    auto consider = [&](std::size_t a, std::size_t b) {
        const ContingencyTable ct{ a, b, p - a, q - b };
        const double obj = loss(m, ct) + (2.0 * pos_prefix[a] - pos_prefix[p]) + (2.0 * neg_prefix[b] - neg_prefix[q]);
        if (obj > best) {
            best = obj;
            best_a = a;
            best_b = b;
        }
    };
    if (m == Measure::prbep) {
        for (std::size_t a = p > q ? p - q : 0; a <= p; ++a) {
            consider(a, p - a);
        }
    } else {
        for (std::size_t a = 0; a <= p; ++a) {
            for (std::size_t b = 0; b <= q; ++b) {
                consider(a, b);
            }
        }
    }

    LabelVector witness(data.size(), Label::negative);
    for (std::size_t k = 0; k < best_a; ++k) {
        witness[split.positives[k]] = Label::positive;
    }
    for (std::size_t k = 0; k < best_b; ++k) {
        witness[split.negatives[k]] = Label::positive;
    }
    ConstraintRecord rec;
    rec.feature_delta = delta_from_labels(data, witness);
    rec.loss = loss(m, ContingencyTable{ best_a, best_b, p - best_a, q - best_b });
    rec.witness = std::move(witness);
    return rec;
}

ConstraintRecord most_violated_auc(std::span<const double> w, const Dataset &data) {
    const std::size_t p = data.positives();
    const std::size_t q = data.negatives();
    require_defined(Measure::auc, p, q);

    const auto s = data.scores(w);
    const auto split = split_by_class(data);
    constexpr double offset = auc_swap_margin / 2.0;

    std::vector<double> pos_adjusted(p);
    std::vector<double> neg_adjusted(q);
    for (std::size_t k = 0; k < p; ++k) {
        pos_adjusted[k] = s[split.positives[k]] - offset;
    }
    for (std::size_t k = 0; k < q; ++k) {
        neg_adjusted[k] = s[split.negatives[k]] + offset;
    }
    auto pos_sorted = pos_adjusted;
    auto neg_sorted = neg_adjusted;
    std::sort(pos_sorted.begin(), pos_sorted.end());
    std::sort(neg_sorted.begin(), neg_sorted.end());

    // pair (i, j) is swapped iff pos_adjusted[i] < neg_adjusted[j]
    std::vector<std::size_t> pos_counts(p);
    std::vector<std::size_t> neg_counts(q);
    std::size_t swapped = 0;
    for (std::size_t k = 0; k < p; ++k) {
        const auto above = std::upper_bound(neg_sorted.begin(), neg_sorted.end(), pos_adjusted[k]);
        pos_counts[k] = static_cast<std::size_t>(neg_sorted.end() - above);
        swapped += pos_counts[k];
    }
    for (std::size_t k = 0; k < q; ++k) {
        const auto below = std::lower_bound(pos_sorted.begin(), pos_sorted.end(), neg_adjusted[k]);
        neg_counts[k] = static_cast<std::size_t>(below - pos_sorted.begin());
    }

    ConstraintRecord rec;
    rec.feature_delta = delta_from_counts(data, split, pos_counts, neg_counts);
    rec.loss = pair_loss(swapped, p, q);
    rec.witness = PairAssignment::by_threshold(std::move(pos_adjusted), std::move(neg_adjusted));
    return rec;
}

ConstraintRecord most_violated_auc_pairwise(std::span<const double> w, const Dataset &data) {
    const std::size_t p = data.positives();
    const std::size_t q = data.negatives();
    require_defined(Measure::auc, p, q);

    const auto s = data.scores(w);
    const auto split = split_by_class(data);
    PairAssignment pairs{ p, q };
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
            pairs.set_swapped(i, j, s[split.positives[i]] - s[split.negatives[j]] < auc_swap_margin);
        }
    }
    return record_from_witness(data, Measure::auc, std::move(pairs));
}

ConstraintRecord most_violated(std::span<const double> w, const Dataset &data, Measure m) {
    return m == Measure::auc ? most_violated_auc(w, data) : most_violated_contingency(w, data, m);
}

ConstraintRecord record_from_witness(const Dataset &data, Measure m, Witness witness) {
    ConstraintRecord rec;
    if (m == Measure::auc) {
        const auto *pairs = std::get_if<PairAssignment>(&witness);
        if (pairs == nullptr) {
            throw parameter_error("AUC constraints need a pair assignment witness");
        }
        const auto labels = data.labels();
        rec.loss = auc_loss(labels, *pairs);
        const auto split = split_by_class(data);
        std::vector<std::size_t> pos_counts(split.positives.size(), 0);
        std::vector<std::size_t> neg_counts(split.negatives.size(), 0);
        for (std::size_t i = 0; i < split.positives.size(); ++i) {
            for (std::size_t j = 0; j < split.negatives.size(); ++j) {
                if (pairs->swapped(i, j)) {
                    ++pos_counts[i];
                    ++neg_counts[j];
                }
            }
        }
        rec.feature_delta = delta_from_counts(data, split, pos_counts, neg_counts);
    } else {
        const auto *labels = std::get_if<LabelVector>(&witness);
        if (labels == nullptr) {
            throw parameter_error("contingency constraints need a label vector witness");
        }
        if (labels->size() != data.size()) {
            throw shape_error("witness length differs from the dataset");
        }
        rec.loss = loss(m, contingency(data.labels(), *labels));
        rec.feature_delta = delta_from_labels(data, *labels);
    }
    rec.witness = std::move(witness);
    return rec;
}

double true_label_objective(std::span<const double> w, const Dataset &data, Measure m) {
    const auto s = data.scores(w);
    if (m == Measure::auc) {
        const auto split = split_by_class(data);
        double sum = 0.0;
        for (const std::size_t i : split.positives) {
            for (const std::size_t j : split.negatives) {
                sum += s[i] - s[j];
            }
        }
        return sum / (static_cast<double>(split.positives.size()) * static_cast<double>(split.negatives.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        sum += value(data[i].label) * s[i];
    }
    return sum;
}

double constraint_objective(std::span<const double> w, const Dataset &data, Measure m, const ConstraintRecord &rec) {
    const auto s = data.scores(w);
    if (m == Measure::auc) {
        const auto &pairs = std::get<PairAssignment>(rec.witness);
        const auto split = split_by_class(data);
        double sum = 0.0;
        for (std::size_t i = 0; i < split.positives.size(); ++i) {
            for (std::size_t j = 0; j < split.negatives.size(); ++j) {
                const double gap = s[split.positives[i]] - s[split.negatives[j]];
                sum += pairs.swapped(i, j) ? -gap : gap;
            }
        }
        return rec.loss + sum / (static_cast<double>(split.positives.size()) * static_cast<double>(split.negatives.size()));
    }
    const auto &labels = std::get<LabelVector>(rec.witness);
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        sum += value(labels[i]) * s[i];
    }
    return rec.loss + sum;
}

double violation(std::span<const double> w, const ConstraintRecord &rec) noexcept {
    return rec.loss - rec.feature_delta.dot(w);
}

ConstraintRecord brute_force_most_violated(std::span<const double> w, const Dataset &data, Measure m) {
    const std::size_t n = data.size();
    const std::size_t p = data.positives();
    const std::size_t q = data.negatives();
    require_defined(m, p, q);
    const auto s = data.scores(w);
    const auto truth = data.labels();

    if (m == Measure::auc) {
        const std::size_t pairs_total = p * q;
        if (pairs_total > brute_force_limit) {
            throw capacity_error("exhaustive AUC search limited to p*q <= 16");
        }
        const auto split = split_by_class(data);
        std::vector<double> gaps;
        for (const std::size_t i : split.positives) {
            for (const std::size_t j : split.negatives) {
                gaps.push_back(s[i] - s[j]);
            }
        }
        // mask bit (pairs_total - 1 - k) set <=> pair k swapped, so masks run in
        // lexicographic order of the assignment
        double best = -std::numeric_limits<double>::infinity();
        std::uint32_t best_mask = 0;
        for (std::uint32_t mask = 0; mask < (1U << pairs_total); ++mask) {
            double sum = 0.0;
            for (std::size_t k = 0; k < pairs_total; ++k) {
                const bool swapped = ((mask >> (pairs_total - 1 - k)) & 1U) != 0;
                sum += swapped ? -gaps[k] : gaps[k];
            }
            const double obj = pair_loss(static_cast<std::size_t>(std::popcount(mask)), p, q) + sum / static_cast<double>(pairs_total);
            if (obj > best) {
                best = obj;
                best_mask = mask;
            }
        }
        PairAssignment pairs{ p, q };
        for (std::size_t k = 0; k < pairs_total; ++k) {
            pairs.set_swapped(k / q, k % q, ((best_mask >> (pairs_total - 1 - k)) & 1U) != 0);
        }
        return record_from_witness(data, m, std::move(pairs));
    }

    if (n > brute_force_limit) {
        throw capacity_error("exhaustive search limited to n <= 16");
    }
    double best = -std::numeric_limits<double>::infinity();
    LabelVector best_labels;
    LabelVector candidate(n);
    for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
        if (m == Measure::prbep && static_cast<std::size_t>(std::popcount(mask)) != p) {
            continue;
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            candidate[i] = ((mask >> (n - 1 - i)) & 1U) != 0 ? Label::positive : Label::negative;
            sum += value(candidate[i]) * s[i];
        }
        const double obj = loss(m, contingency(truth, candidate)) + sum;
        if (obj > best) {
            best = obj;
            best_labels = candidate;
        }
    }
    return record_from_witness(data, m, std::move(best_labels));
}

double prediction_loss(std::span<const double> w, const Dataset &data, Measure m) {
    const std::size_t p = data.positives();
    const std::size_t q = data.negatives();
    require_defined(m, p, q);
    const auto s = data.scores(w);
    const auto truth = data.labels();

    switch (m) {
        case Measure::error_rate:
        case Measure::f1: {
            LabelVector predicted;
            predicted.reserve(s.size());
            for (const double v : s) {
                predicted.push_back(sign_label(v));
            }
            return loss(m, contingency(truth, predicted));
        }
        case Measure::prbep: {
            std::vector<std::size_t> order(s.size());
            std::iota(order.begin(), order.end(), std::size_t{ 0 });
            sort_by_score_desc(order, s);
            LabelVector predicted(s.size(), Label::negative);
            for (std::size_t k = 0; k < p; ++k) {
                predicted[order[k]] = Label::positive;
            }
            return loss(m, contingency(truth, predicted));
        }
        case Measure::auc: {
            const auto split = split_by_class(data);
            std::size_t swapped = 0;
            for (const std::size_t i : split.positives) {
                for (const std::size_t j : split.negatives) {
                    if (s[i] < s[j]) {
                        ++swapped;
                    }
                }
            }
            return pair_loss(swapped, p, q);
        }
    }
    return 0.0;
}

}  // namespace perfadapt
