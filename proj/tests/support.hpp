// -*- mode: c++ -*-
// Shared generators and small oracles for the test binaries.
#ifndef PERFADAPT_TEST_SUPPORT_HPP
#define PERFADAPT_TEST_SUPPORT_HPP

#include "perfadapt/dataset.hpp"
#include "perfadapt/measures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace testing {

using namespace perfadapt;

/// Random sparse dataset with at least `min_each` examples of each class when
/// n allows it.
inline Dataset random_dataset(std::mt19937_64 &rng, std::size_t n, std::size_t d, double density = 0.6, std::size_t min_each = 1) {
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    std::bernoulli_distribution present(density);
    std::bernoulli_distribution coin(0.5);
    std::vector<Example> examples;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Feature> entries;
        for (std::uint32_t j = 0; j < d; ++j) {
            if (present(rng)) {
                entries.push_back({ j, value(rng) });
            }
        }
        Label y = coin(rng) ? Label::positive : Label::negative;
        if (i < min_each) {
            y = Label::positive;
        } else if (i < 2 * min_each) {
            y = Label::negative;
        }
        examples.push_back({ SparseVector{ std::move(entries) }, y });
    }
    std::shuffle(examples.begin(), examples.end(), rng);
    return Dataset{ std::move(examples), d };
}

inline Dataset random_dataset_with_counts(std::mt19937_64 &rng, std::size_t p, std::size_t q, std::size_t d) {
    Dataset base = random_dataset(rng, p + q, d, 0.7, 0);
    std::vector<Example> examples(base.examples().begin(), base.examples().end());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        examples[i].label = i < p ? Label::positive : Label::negative;
    }
    std::shuffle(examples.begin(), examples.end(), rng);
    return Dataset{ std::move(examples), d };
}

inline std::vector<double> random_weights(std::mt19937_64 &rng, std::size_t d, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> value(lo, hi);
    std::vector<double> w(d);
    for (double &v : w) {
        v = value(rng);
    }
    return w;
}

/// Linearly separable-ish data: label = sign(u^T x + noise).
inline Dataset linear_task(std::mt19937_64 &rng, std::size_t n, std::size_t d, double noise = 0.3) {
    const auto u = random_weights(rng, d, -1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Example> examples;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(d);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            x[j] = gauss(rng);
            s += u[j] * x[j];
        }
        s += noise * gauss(rng);
        Label y = sign_label(s);
        if (i + 1 == n && pos == 0) {
            y = Label::positive;
        } else if (i + 1 == n && pos == n - 1) {
            y = Label::negative;
        }
        pos += y == Label::positive ? 1 : 0;
        examples.push_back({ SparseVector::from_dense(x), y });
    }
    return Dataset{ std::move(examples), d };
}

/// 60-position nucleotide sequences coded A,C,G,T -> -1,-1/3,1/3,1 with a
/// label driven by an interacting motif around the middle, plus label noise.
/// A stand-in for splice-junction data that favors trees over linear models.
inline Dataset nucleotide_task(std::size_t n, std::uint64_t seed, double noise = 0.05) {
    std::mt19937_64 rng{ seed };
    std::uniform_int_distribution<int> base(0, 3);
    std::bernoulli_distribution noisy(noise);
    constexpr double code[4] = { -1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0 };
    std::vector<Example> examples;
    for (std::size_t i = 0; i < n; ++i) {
        int s[60];
        std::vector<double> x(60);
        for (int k = 0; k < 60; ++k) {
            s[k] = base(rng);
            x[static_cast<std::size_t>(k)] = code[s[k]];
        }
        // A-G at the junction, a purine after it, and a C upstream
        const int motif = (s[29] == 0 ? 1 : 0) + (s[30] == 2 ? 1 : 0) + ((s[31] == 0 || s[31] == 2) ? 1 : 0) + (s[25] == 1 ? 1 : 0);
        const bool junction = motif >= 2 && !(s[29] == 3 && s[30] == 3);
        Label y = junction ? Label::positive : Label::negative;
        if (noisy(rng)) {
            y = perfadapt::flip(y);
        }
        examples.push_back({ SparseVector::from_dense(x), y });
    }
    return Dataset{ std::move(examples), 60 };
}

/// Loss on the 0..100 scale straight from the textbook formulas.
inline double oracle_loss(Measure m, std::span<const Label> truth, std::span<const Label> pred) {
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] == Label::positive;
        const bool p = pred[i] == Label::positive;
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
        tn += !t && !p;
    }
    switch (m) {
    case Measure::error_rate:
        return 100.0 * (fp + fn) / static_cast<double>(truth.size());
    case Measure::f1:
        return 100.0 * (1.0 - 2.0 * tp / (2.0 * tp + fp + fn));
    case Measure::prbep:
        return 100.0 * (1.0 - tp / (tp + fn));
    case Measure::auc:
        break;
    }
    return std::nan("");
}

/// Exhaustive max over admissible label vectors of Delta + sum_i y'_i s_i.
inline double oracle_contingency_max(std::span<const double> w, const Dataset &data, Measure m) {
    const auto s = data.scores(w);
    const LabelVector truth = data.labels();
    const std::size_t n = truth.size();
    double best = -std::numeric_limits<double>::infinity();
    LabelVector y(n);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{ 1 } << n); ++mask) {
        std::size_t predicted = 0;
        double fit = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = (mask >> i) & 1U ? Label::positive : Label::negative;
            predicted += y[i] == Label::positive ? 1 : 0;
            fit += value(y[i]) * s[i];
        }
        if (m == Measure::prbep && predicted != data.positives()) {
            continue;
        }
        best = std::max(best, oracle_loss(m, truth, y) + fit);
    }
    return best;
}

/// Exhaustive max over all swapped/ordered assignments of the p*q pairs of
/// 100 * swapped / pq + (1 / pq) sum_pairs y'_ij (s_i - s_j).
inline double oracle_auc_max(std::span<const double> w, const Dataset &data) {
    const auto s = data.scores(w);
    std::vector<double> gaps;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].label != Label::positive) {
            continue;
        }
        for (std::size_t j = 0; j < data.size(); ++j) {
            if (data[j].label == Label::negative) {
                gaps.push_back(s[i] - s[j]);
            }
        }
    }
    const double pq = static_cast<double>(gaps.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < (std::uint64_t{ 1 } << gaps.size()); ++mask) {
        double swapped = 0.0;
        double fit = 0.0;
        for (std::size_t k = 0; k < gaps.size(); ++k) {
            const bool sw = (mask >> k) & 1U;
            swapped += sw ? 1.0 : 0.0;
            fit += sw ? -gaps[k] : gaps[k];
        }
        best = std::max(best, 100.0 * swapped / pq + fit / pq);
    }
    return best;
}

inline double oracle_max(std::span<const double> w, const Dataset &data, Measure m) {
    return m == Measure::auc ? oracle_auc_max(w, data) : oracle_contingency_max(w, data, m);
}

class TempDir {
  public:
    TempDir() {
        static std::mt19937_64 rng{ std::random_device{}() };
        path_ = std::filesystem::temp_directory_path() / ("perfadapt-test-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    [[nodiscard]] const std::filesystem::path &path() const noexcept { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

    std::filesystem::path write(const std::string &name, const std::string &text) const {
        const auto p = path_ / name;
        std::ofstream{ p, std::ios::binary } << text;
        return p;
    }

  private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path &p) {
    std::ifstream in{ p, std::ios::binary };
    return { std::istreambuf_iterator<char>{ in }, std::istreambuf_iterator<char>{} };
}

}  // namespace testing

#endif
