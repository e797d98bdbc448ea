#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "driftwatch/ingest.hpp"
#include "driftwatch/rng.hpp"
#include "oracles.hpp"

using namespace driftwatch;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path("/tmp/driftwatch_test_" + name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_csv: shapes, optional labels, and validation errors") {
    TempFile f("basic.csv", "a,b,label\n1,2,0\n3,4,1\n5,6,0\n");
    CsvSchema schema;
    schema.label_column = "label";
    LabeledStream s = load_csv(f.path, schema);
    CHECK(s.size() == 3);
    CHECK(s.dim() == 2);
    REQUIRE(s.labels.has_value());
    CHECK((*s.labels)[1] == 1);

    CsvSchema unlabeled;
    LabeledStream u = load_csv(f.path, unlabeled);
    CHECK(u.dim() == 3);  // label column treated as a feature when not named
    CHECK_FALSE(u.labels.has_value());

    CsvSchema missing;
    missing.label_column = "target";
    CHECK_THROWS_WITH_AS(load_csv(f.path, missing), doctest::Contains("target"), std::runtime_error);
}

TEST_CASE("load_csv: non-numeric cell names row and column") {
    TempFile f("bad.csv", "a,b\n1,2\n3,abc\n");
    CsvSchema schema;
    CHECK_THROWS_WITH_AS(load_csv(f.path, schema), doctest::Contains("row 3"), std::runtime_error);
    CHECK_THROWS_WITH_AS(load_csv(f.path, schema), doctest::Contains("column 2"), std::runtime_error);
}

TEST_CASE("load_csv: ragged rows and empty files are rejected") {
    TempFile ragged("ragged.csv", "a,b\n1,2\n3\n");
    CsvSchema schema;
    CHECK_THROWS_AS(load_csv(ragged.path, schema), std::runtime_error);
    TempFile empty("empty.csv", "");
    CHECK_THROWS_AS(load_csv(empty.path, schema), std::runtime_error);
    TempFile headeronly("header.csv", "a,b\n");
    CHECK_THROWS_AS(load_csv(headeronly.path, schema), std::runtime_error);
}

TEST_CASE("csv round-trip through write_csv preserves values at float64") {
    Rng rng(3);
    LabeledStream s;
    s.labels = std::vector<int>{};
    for (int i = 0; i < 20; ++i) {
        s.instances.push_back({rng.uniform(-5, 5), rng.gaussian(), rng.uniform(0, 1e-7)});
        s.labels->push_back(i % 5 == 0);
    }
    TempFile f("roundtrip.csv", "");
    write_csv(f.path, s);
    CsvSchema schema;
    schema.label_column = "label";
    LabeledStream back = load_csv(f.path, schema);
    REQUIRE(back.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(back.instances[i] == s.instances[i]);
        CHECK((*back.labels)[i] == (*s.labels)[i]);
    }
}

TEST_CASE("shingle: sliding windows, labels, and errors") {
    LabeledStream s = shingle({1.0, 2.0, 3.0, 4.0}, nullptr, 2);
    REQUIRE(s.size() == 3);
    CHECK(s.instances[0] == std::vector<double>{1.0, 2.0});
    CHECK(s.instances[1] == std::vector<double>{2.0, 3.0});
    CHECK(s.instances[2] == std::vector<double>{3.0, 4.0});

    // point anomaly at index 5, width 3: windows 3, 4, 5 are anomalous
    std::vector<double> series(10, 0.0);
    std::vector<int> labels(10, 0);
    labels[5] = 1;
    LabeledStream t = shingle(series, &labels, 3);
    REQUIRE(t.size() == 8);
    for (std::size_t i = 0; i < t.size(); ++i)
        CHECK((*t.labels)[i] == ((i >= 3 && i <= 5) ? 1 : 0));

    CHECK_THROWS_AS(shingle({1.0, 2.0}, nullptr, 1), std::invalid_argument);
    CHECK_THROWS_AS(shingle({1.0, 2.0}, nullptr, 3), std::invalid_argument);
}

TEST_CASE("shingle: output count and first-column reconstruction") {
    Rng rng(5);
    std::vector<double> series;
    for (int i = 0; i < 137; ++i) series.push_back(rng.uniform(-1, 1));
    const std::size_t width = 10;
    LabeledStream s = shingle(series, nullptr, width);
    CHECK(s.size() == series.size() - width + 1);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.instances[i][0] == series[i]);
}

TEST_CASE("synth_stream: clean abrupt stream has all-normal labels and one marker per switch") {
    DriftSpec spec = make_default_spec(DriftKind::Abrupt, 2000, 4, 2, 0.0, 4.0);
    LabeledStream s = synth_stream(spec, 7);
    CHECK(s.size() == 2000);
    CHECK(s.dim() == 4);
    CHECK(s.drift_markers.size() == 1);  // 2 concepts, one switch
    for (int l : *s.labels) CHECK(l == 0);

    DriftSpec three = make_default_spec(DriftKind::Abrupt, 3000, 3, 3, 0.0, 4.0);
    CHECK(synth_stream(three, 9).drift_markers.size() == 2);
}

TEST_CASE("synth_stream: anomaly count lands in the Binomial 99% interval") {
    DriftSpec spec = make_default_spec(DriftKind::Abrupt, 10000, 4, 2, 0.01, 4.0);
    LabeledStream s = synth_stream(spec, 21);
    std::size_t count = 0;
    for (int l : *s.labels) count += l;
    // Binomial(10000, 0.01): mean 100, sd ~9.95; 99% interval ~ [74, 126]
    CHECK(count >= 74);
    CHECK(count <= 126);
}

TEST_CASE("synth_stream: anomalies sit outside 3 sigma of the active concept") {
    DriftSpec spec = make_default_spec(DriftKind::Abrupt, 4000, 3, 2, 0.05, 5.0);
    LabeledStream s = synth_stream(spec, 31);
    const std::size_t marker = s.drift_markers.at(0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((*s.labels)[i] == 0) continue;
        const ConceptSpec& c = spec.concepts[i < marker ? 0 : 1];
        double dist2 = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            const double off = (s.instances[i][j] - c.mean[j]) / c.scale;
            dist2 += off * off;
        }
        CHECK(dist2 > 9.0);
    }
}

TEST_CASE("synth_stream: seeded determinism") {
    DriftSpec spec = make_default_spec(DriftKind::Gradual, 3000, 4, 3, 0.02, 3.0);
    LabeledStream a = synth_stream(spec, 55);
    LabeledStream b = synth_stream(spec, 55);
    CHECK(a.instances == b.instances);
    CHECK(*a.labels == *b.labels);
    CHECK(a.drift_markers == b.drift_markers);
    LabeledStream c = synth_stream(spec, 56);
    CHECK(a.instances != c.instances);
}

TEST_CASE("synth_stream: recurrent kind revisits an earlier concept") {
    DriftSpec spec = make_default_spec(DriftKind::Recurrent, 5000, 3, 2, 0.0, 4.0);
    spec.min_segment = 400;
    spec.max_segment = 800;
    LabeledStream s = synth_stream(spec, 3);
    CHECK(s.drift_markers.size() >= 3);  // cycles 0,1,0,... over 5000 instances
}

TEST_CASE("synth_stream: invalid specs are rejected") {
    DriftSpec spec = make_default_spec(DriftKind::Abrupt, 1000, 3, 2, 0.0, 4.0);
    spec.anomaly_rate = 0.6;
    CHECK_THROWS_AS(synth_stream(spec, 1), std::invalid_argument);
    spec = make_default_spec(DriftKind::Abrupt, 1000, 3, 2, 0.0, 4.0);
    spec.concepts.pop_back();
    CHECK_THROWS_AS(synth_stream(spec, 1), std::invalid_argument);
    spec = make_default_spec(DriftKind::Abrupt, 1000, 3, 2, 0.0, 4.0);
    spec.concepts[1].scale = 0.0;
    CHECK_THROWS_AS(synth_stream(spec, 1), std::invalid_argument);
}

TEST_CASE("auc_roc: perfect, inverted, and single-class validation") {
    CHECK(auc_roc({0.1, 0.9}, {0, 1}) == doctest::Approx(1.0));
    CHECK(auc_roc({0.9, 0.1}, {0, 1}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(auc_roc({0.5, 0.7}, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(auc_roc({0.5}, {1, 0}), std::invalid_argument);
}

TEST_CASE("auc_roc: matches the O(n^2) pairwise oracle, ties included") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 10 + rng.index(190);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.bernoulli(0.3) ? 0.5 : rng.uniform(0.0, 1.0);  // force ties
            labels[i] = rng.bernoulli(0.4);
            (labels[i] ? pos : neg) = true;
        }
        if (!pos || !neg) continue;
        CHECK(auc_roc(scores, labels) ==
              doctest::Approx(oracles::auc_roc_bruteforce(scores, labels)).epsilon(1e-9));
    }
}

TEST_CASE("auc_roc properties: monotone-transform invariance and label flip") {
    Rng rng(19);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 150; ++i) {
        scores.push_back(rng.uniform(0.0, 4.0));
        labels.push_back(rng.bernoulli(0.3));
    }
    labels[0] = 1;
    labels[1] = 0;
    const double base = auc_roc(scores, labels);

    std::vector<double> transformed(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) transformed[i] = std::exp(2.0 * scores[i]) + 5.0;
    CHECK(auc_roc(transformed, labels) == doctest::Approx(base).epsilon(1e-12));

    std::vector<int> flipped(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) flipped[i] = 1 - labels[i];
    CHECK(auc_roc(scores, flipped) == doctest::Approx(1.0 - base).epsilon(1e-12));
}

TEST_CASE("auc_pr: perfect case, hand value, and oracle agreement") {
    CHECK(auc_pr({0.9, 0.1}, {1, 0}) == doctest::Approx(1.0));
    CHECK(auc_pr({0.9, 0.1}, {0, 1}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(auc_pr({0.5, 0.7}, {0, 0}), std::invalid_argument);

    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 5 + rng.index(195);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool pos = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.uniform(0.0, 1.0);
            labels[i] = rng.bernoulli(0.25);
            pos |= labels[i] != 0;
        }
        if (!pos) labels[0] = 1;
        CHECK(auc_pr(scores, labels) ==
              doctest::Approx(oracles::auc_pr_bruteforce(scores, labels)).epsilon(1e-9));
    }
}

TEST_CASE("evaluate: perfect detector, degenerate windowing, misalignment") {
    std::vector<Verdict> verdicts;
    std::vector<int> labels;
    Rng rng(29);
    for (int i = 0; i < 200; ++i) {
        Verdict v;
        v.index = i;
        const bool anom = rng.bernoulli(0.2);
        v.score = anom ? rng.uniform(2.0, 3.0) : rng.uniform(0.0, 1.0);
        v.is_anomaly = v.score > 1.5;
        v.uncertainty = 0.01;
        verdicts.push_back(v);
        labels.push_back(anom);
    }
    EvalReport r = evaluate(verdicts, labels, 200);
    CHECK(r.aucroc == doctest::Approx(1.0));
    CHECK(r.aucpr == doctest::Approx(1.0));
    CHECK(r.fpr == doctest::Approx(0.0));
    CHECK(r.fnr == doctest::Approx(0.0));
    REQUIRE(r.windows.size() == 1);
    REQUIRE(r.windows[0].aucroc.has_value());
    CHECK(*r.windows[0].aucroc == doctest::Approx(r.aucroc));
    CHECK(r.windows[0].mean_uncertainty == doctest::Approx(0.01));

    labels.pop_back();
    CHECK_THROWS_AS(evaluate(verdicts, labels, 100), std::invalid_argument);
}

TEST_CASE("evaluate: single-class windows report null aucroc") {
    std::vector<Verdict> verdicts;
    std::vector<int> labels;
    for (int i = 0; i < 100; ++i) {
        Verdict v;
        v.index = i;
        v.score = 0.5;
        verdicts.push_back(v);
        labels.push_back(i >= 50);  // first window all-normal, second all-anomalous
    }
    EvalReport r = evaluate(verdicts, labels, 50);
    REQUIRE(r.windows.size() == 2);
    CHECK_FALSE(r.windows[0].aucroc.has_value());
    CHECK_FALSE(r.windows[1].aucroc.has_value());
    const std::string json_text = report_to_json(r);
    CHECK(json_text.find("null") != std::string::npos);
}
