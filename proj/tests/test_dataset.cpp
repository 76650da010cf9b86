#include "perfadapt/dataset.hpp"
#include "perfadapt/errors.hpp"

#include "doctest.h"
#include "support.hpp"

#include <limits>
#include <sstream>

using namespace perfadapt;
using testing::TempDir;

TEST_CASE("parse_svmlight reads labels, 1-based indices and the dimension") {
    const Dataset d = parse_svmlight(std::string{ "+1 1:0.5 3:2.0\n-1 2:1.0" });
    CHECK(d.size() == 2);
    CHECK(d.dimension() == 3);
    CHECK(d.positives() == 1);
    CHECK(d.negatives() == 1);
    REQUIRE(d[0].features.size() == 2);
    CHECK(d[0].features.entries()[0] == Feature{ 0, 0.5 });
    CHECK(d[0].features.entries()[1] == Feature{ 2, 2.0 });
    CHECK(d[1].features.entries()[0] == Feature{ 1, 1.0 });
    CHECK(d[1].label == Label::negative);
}

TEST_CASE("parse_svmlight accepts an empty stream") {
    const Dataset d = parse_svmlight(std::string{});
    CHECK(d.size() == 0);
    CHECK(d.empty());
}

TEST_CASE("parse_svmlight skips comments, blank lines and qid tokens") {
    const Dataset d = parse_svmlight(std::string{ "# header\n\n1 qid:3 2:1 # trailing\r\n  -1\t4:-2.5e-3  \n" });
    REQUIRE(d.size() == 2);
    CHECK(d[0].features.entries()[0] == Feature{ 1, 1.0 });
    CHECK(d[1].features.entries()[0] == Feature{ 3, -2.5e-3 });
    CHECK(d.dimension() == 4);
}

TEST_CASE("parse_svmlight error reporting") {
    SUBCASE("label zero is a labeling error") {
        CHECK_THROWS_AS((void)parse_svmlight(std::string{ "1 1:1\n0 1:1\n" }), labeling_error);
    }
    SUBCASE("labels other than +-1 are labeling errors") {
        CHECK_THROWS_AS((void)parse_svmlight(std::string{ "2 1:1\n" }), labeling_error);
    }
    SUBCASE("malformed token carries its line number") {
        try {
            (void)parse_svmlight(std::string{ "1 1:1\n-1 1:1\n1 a:b\n" });
            FAIL("expected parse_error");
        } catch (const parse_error &e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("decreasing indices") {
        CHECK_THROWS_AS((void)parse_svmlight(std::string{ "1 3:1 2:1\n" }), parse_error);
    }
    SUBCASE("repeated index") {
        CHECK_THROWS_AS((void)parse_svmlight(std::string{ "1 2:1 2:1\n" }), parse_error);
    }
    SUBCASE("index zero is not 1-based") {
        CHECK_THROWS_AS((void)parse_svmlight(std::string{ "1 0:1\n" }), parse_error);
    }
    SUBCASE("non-finite value") {
        CHECK_THROWS_AS((void)parse_svmlight(std::string{ "1 1:nan\n" }), parse_error);
    }
    SUBCASE("unparseable label") {
        CHECK_THROWS_AS((void)parse_svmlight(std::string{ "yes 1:1\n" }), parse_error);
    }
}

TEST_CASE("SparseVector validates its entries") {
    CHECK_THROWS_AS(SparseVector({ { 2, 1.0 }, { 1, 1.0 } }), parameter_error);
    CHECK_THROWS_AS(SparseVector({ { 1, 1.0 }, { 1, 1.0 } }), parameter_error);
    CHECK_THROWS_AS(SparseVector({ { 1, std::numeric_limits<double>::infinity() } }), parameter_error);
}

TEST_CASE("stored zeros do not change dot products") {
    std::mt19937_64 rng{ 11 };
    for (int trial = 0; trial < 50; ++trial) {
        const auto w = testing::random_weights(rng, 12);
        std::vector<double> dense = testing::random_weights(rng, 12);
        for (std::size_t j = 0; j < dense.size(); j += 3) {
            dense[j] = 0.0;
        }
        std::vector<Feature> with_zeros;
        for (std::uint32_t j = 0; j < dense.size(); ++j) {
            with_zeros.push_back({ j, dense[j] });
        }
        const SparseVector a{ with_zeros };
        const SparseVector b = SparseVector::from_dense(dense);
        CHECK(a.dot(w) == b.dot(w));
        CHECK(a.squared_norm() == b.squared_norm());
        CHECK(a.dot(b) == b.dot(b));
    }
}

TEST_CASE("SparseVector arithmetic matches dense arithmetic") {
    std::mt19937_64 rng{ 5 };
    const Dataset d = testing::random_dataset(rng, 20, 9, 0.5);
    const auto w = testing::random_weights(rng, 9);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto xi = d[i].features.to_dense(9);
        double oracle = 0.0;
        for (std::size_t j = 0; j < 9; ++j) {
            oracle += xi[j] * w[j];
        }
        CHECK(d[i].features.dot(w) == doctest::Approx(oracle).epsilon(1e-14));
        for (std::size_t k = 0; k < d.size(); ++k) {
            const auto xk = d[k].features.to_dense(9);
            double pair = 0.0;
            for (std::size_t j = 0; j < 9; ++j) {
                pair += xi[j] * xk[j];
            }
            CHECK(d[i].features.dot(d[k].features) == doctest::Approx(pair).epsilon(1e-14));
        }
    }
    std::vector<double> acc(9, 0.0);
    d[0].features.add_to(acc, 2.0);
    const auto x0 = d[0].features.to_dense(9);
    for (std::size_t j = 0; j < 9; ++j) {
        CHECK(acc[j] == 2.0 * x0[j]);
    }
    std::vector<double> too_short(2, 0.0);
    if (d[0].features.min_dimension() > 2) {
        CHECK_THROWS_AS(d[0].features.add_to(too_short, 1.0), shape_error);
    }
}

TEST_CASE("Dataset keeps class counts and supports subsets") {
    std::mt19937_64 rng{ 3 };
    const Dataset d = testing::random_dataset(rng, 30, 5);
    std::size_t p = 0;
    for (const auto &ex : d.examples()) {
        p += ex.label == Label::positive ? 1 : 0;
    }
    CHECK(d.positives() == p);
    CHECK(d.positives() + d.negatives() == d.size());
    const std::vector<std::size_t> rows{ 4, 0, 7 };
    const Dataset s = d.subset(rows);
    CHECK(s.size() == 3);
    CHECK(s.dimension() == d.dimension());
    CHECK(s[0] == d[4]);
    CHECK(s[2] == d[7]);
}

TEST_CASE("svmlight write/parse round trip is value-identical") {
    std::mt19937_64 rng{ 17 };
    for (int trial = 0; trial < 25; ++trial) {
        const Dataset d = testing::random_dataset(rng, 15, 40, 0.3);
        std::ostringstream out;
        write_svmlight(out, d);
        const Dataset back = parse_svmlight(out.str());
        REQUIRE(back.size() == d.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            CHECK(back[i] == d[i]);
        }
    }
}

TEST_CASE("format round trip for large sparse benchmark-style files") {
    // wide index space, exponent notation, integer values, a CRLF line and
    // examples with no features at all
    const std::string text =
        "-1 3:0.9 18:-0.129 22:1e-05 47236:0.0417\r\n"
        "+1 1:255 2:0 7:1.5E+2 16000:-3.25e-7\n"
        "1\n"
        "-1 9:0.000123456789012345678 10:-1.7976931348623157e308\n";
    const Dataset d = parse_svmlight(text);
    REQUIRE(d.size() == 4);
    CHECK(d.dimension() == 47236);
    CHECK(d[0].features.entries()[3] == Feature{ 47235, 0.0417 });
    CHECK(d[1].features.entries()[2] == Feature{ 6, 150.0 });
    CHECK(d[2].features.empty());
    std::ostringstream out;
    write_svmlight(out, d);
    const Dataset back = parse_svmlight(out.str());
    CHECK(back == d);

    std::mt19937_64 rng{ 99 };
    std::uniform_int_distribution<std::uint32_t> gap(1, 5000);
    std::uniform_real_distribution<double> mag(-300.0, 300.0);
    std::vector<Example> examples;
    for (int i = 0; i < 40; ++i) {
        std::vector<Feature> entries;
        std::uint32_t index = 0;
        for (int k = 0; k < 30; ++k) {
            index += gap(rng);
            entries.push_back({ index, std::pow(10.0, mag(rng)) * (k % 2 == 0 ? 1.0 : -1.0) });
        }
        examples.push_back({ SparseVector{ std::move(entries) }, i % 3 == 0 ? Label::positive : Label::negative });
    }
    const Dataset wide{ std::move(examples) };
    std::ostringstream wide_out;
    write_svmlight(wide_out, wide);
    CHECK(parse_svmlight(wide_out.str()) == wide);
}

TEST_CASE("file round trip and access hook") {
    TempDir dir;
    std::mt19937_64 rng{ 4 };
    const Dataset d = testing::random_dataset(rng, 10, 6);
    const auto path = dir / "data.svm";
    write_svmlight_file(path, d);
    std::vector<std::filesystem::path> seen;
    set_file_access_hook([&](const std::filesystem::path &p) { seen.push_back(p); });
    const Dataset back = read_svmlight_file(path);
    set_file_access_hook(nullptr);
    CHECK(back == d);
    REQUIRE(seen.size() == 1);
    CHECK(seen[0] == path);
    CHECK_THROWS_AS((void)read_svmlight_file(dir / "missing.svm"), parse_error);
}

TEST_CASE("augment: single auxiliary with B = 1") {
    const Dataset base{ { { SparseVector{ { { 1, 0.5 } } }, Label::positive } }, 2 };
    LabelMatrix aux{ 1, 1, Label::positive };
    const AugmentedDataset aug = augment(base, aux, 1.0);
    const auto e = aug.augmented[0].features.entries();
    REQUIRE(e.size() == 2);
    CHECK(e[0] == Feature{ 0, 1.0 });
    CHECK(e[1] == Feature{ 2, 0.5 });
    CHECK(aug.augmented.dimension() == 3);
}

TEST_CASE("augment: two auxiliaries with B = 4 and an empty example") {
    const Dataset base{ { { SparseVector{}, Label::negative } }, 1 };
    LabelMatrix aux{ 1, 2 };
    aux(0, 0) = Label::positive;
    aux(0, 1) = Label::negative;
    const AugmentedDataset aug = augment(base, aux, 4.0);
    const auto e = aug.augmented[0].features.entries();
    REQUIRE(e.size() == 2);
    CHECK(e[0] == Feature{ 0, 0.5 });
    CHECK(e[1] == Feature{ 1, -0.5 });
}

TEST_CASE("augment: dense reconstruction oracle and kernel identity") {
    std::mt19937_64 rng{ 21 };
    std::bernoulli_distribution coin(0.5);
    for (const double B : { 1.0, 0.25, 7.0 }) {
        const Dataset base = testing::random_dataset(rng, 12, 60, 0.4);
        LabelMatrix aux{ base.size(), 3 };
        for (std::size_t i = 0; i < base.size(); ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                aux(i, j) = coin(rng) ? Label::positive : Label::negative;
            }
        }
        const AugmentedDataset aug = augment(base, aux, B);
        CHECK(aug.augmented.dimension() == 63);
        CHECK(aug.augmented.size() == base.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(aug.augmented[i].label == base[i].label);
            // dense oracle: [f / sqrt(B) ; x]
            std::vector<double> dense(63, 0.0);
            for (std::size_t j = 0; j < 3; ++j) {
                dense[j] = value(aux(i, j)) / std::sqrt(B);
            }
            const auto x = base[i].features.to_dense(60);
            std::copy(x.begin(), x.end(), dense.begin() + 3);
            CHECK(aug.augmented[i].features.to_dense(63) == dense);
            for (std::size_t k = 0; k < base.size(); ++k) {
                double ff = 0.0;
                for (std::size_t j = 0; j < 3; ++j) {
                    ff += value(aux(i, j)) * value(aux(k, j));
                }
                const double expected = ff / B + base[i].features.dot(base[k].features);
                CHECK(aug.augmented[i].features.dot(aug.augmented[k].features) == doctest::Approx(expected).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("augment rejects invalid B and mismatched rows") {
    const Dataset base{ { { SparseVector{}, Label::positive }, { SparseVector{}, Label::negative } }, 1 };
    CHECK_THROWS_AS((void)augment(base, LabelMatrix{ 2, 1 }, 0.0), parameter_error);
    CHECK_THROWS_AS((void)augment(base, LabelMatrix{ 2, 1 }, -1.0), parameter_error);
    CHECK_THROWS_AS((void)augment(base, LabelMatrix{ 3, 1 }, 1.0), shape_error);
}

TEST_CASE("LabelMatrix columns and row subsets") {
    const std::vector<LabelVector> cols{ { Label::positive, Label::negative, Label::positive }, { Label::negative, Label::negative, Label::positive } };
    const LabelMatrix m = LabelMatrix::from_columns(cols);
    CHECK(m.rows() == 3);
    CHECK(m.cols() == 2);
    CHECK(m.column(1) == cols[1]);
    const std::vector<std::size_t> rows{ 2, 0 };
    const LabelMatrix s = m.subset_rows(rows);
    CHECK(s(0, 0) == Label::positive);
    CHECK(s(0, 1) == Label::positive);
    CHECK(s(1, 1) == Label::negative);
}

TEST_CASE("MaxAbsScaler maps every feature into [-1, 1]") {
    const Dataset d = parse_svmlight(std::string{ "1 1:4 2:-0.5\n-1 1:-2 3:10\n" });
    const MaxAbsScaler scaler = MaxAbsScaler::fit(d);
    const Dataset s = scaler.apply(d);
    CHECK(s[0].features.entries()[0].value == 1.0);
    CHECK(s[0].features.entries()[1].value == -1.0);
    CHECK(s[1].features.entries()[0].value == -0.5);
    CHECK(s[1].features.entries()[1].value == 1.0);
}
