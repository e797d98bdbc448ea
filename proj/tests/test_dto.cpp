#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "driftwatch/dto.hpp"
#include "driftwatch/rng.hpp"
#include "oracles.hpp"

using namespace driftwatch;

namespace {

Verdict make_verdict(double score, bool anomaly, double uncertainty = 0.0, double recon = -1.0) {
    Verdict v;
    v.score = score;
    v.is_anomaly = anomaly;
    v.uncertainty = uncertainty;
    v.recon_error = recon < 0.0 ? score : recon;
    return v;
}

ThresholdState fresh_state(double bootstrap = 1000.0, double mu_t = 0.5, DtoParams p = DtoParams{}) {
    return ThresholdState(p, 1.0, mu_t, bootstrap);
}

}  // namespace

TEST_CASE("anomaly_score: calibration off, zero exponent, and the hand value") {
    CHECK(anomaly_score(3.7, 0.9, 1.0, 0.0) == doctest::Approx(3.7));
    CHECK(anomaly_score(2.0, 0.5, 2.0, 0.6) == doctest::Approx(2.0));
    CHECK(anomaly_score(2.0, 0.5, 3.0, 0.6) == doctest::Approx(2.0 * std::exp(0.3)).epsilon(1e-12));
    CHECK(anomaly_score(2.0, 0.5, 3.0, 0.6) == doctest::Approx(2.6997176).epsilon(1e-6));
    CHECK_THROWS_AS(anomaly_score(-1.0, 0.5, 1.0, 0.6), std::invalid_argument);
    CHECK_THROWS_AS(anomaly_score(1.0, -0.5, 1.0, 0.6), std::invalid_argument);
}

TEST_CASE("anomaly_score: exponent clamped at +-30 with a counted warning") {
    std::uint64_t clamps = 0;
    const double a = anomaly_score(1.0, 10.0, 100.0, 1.0, &clamps);  // raw exponent 990
    CHECK(clamps == 1);
    CHECK(a == doctest::Approx(std::exp(30.0)));
    anomaly_score(100.0, 10.0, 0.0, 1.0, &clamps);  // raw exponent -100000
    CHECK(clamps == 2);
}

TEST_CASE("anomaly_score calibration direction: shrinks above the pivot, grows below") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const double pivot = rng.uniform(0.5, 5.0);
        const double u = rng.uniform(0.01, 0.19);
        const double lambda = rng.uniform(0.1, 1.0);
        const double above = pivot + rng.uniform(0.01, 5.0);
        const double below = pivot * rng.uniform(0.01, 0.99);
        CHECK(anomaly_score(above, u, pivot, lambda) < above);
        CHECK(anomaly_score(below, u, pivot, lambda) > below);
    }
}

TEST_CASE("update_pivot: frozen, full replacement, and the hand value") {
    CHECK(update_pivot(3.0, 2.0, 1.0) == doctest::Approx(3.0));
    CHECK(update_pivot(3.0, 2.0, 0.0) == doctest::Approx(2.0));
    CHECK(update_pivot(3.0, 2.0, 0.99) == doctest::Approx(2.99));
    CHECK_THROWS_AS(update_pivot(3.0, 2.0, 1.5), std::invalid_argument);
}

TEST_CASE("window_quantile: reference cases") {
    std::vector<double> w;
    for (int i = 1; i <= 100; ++i) w.push_back(static_cast<double>(i));
    CHECK(window_quantile(w, 0.95) == doctest::Approx(95.0));
    CHECK(window_quantile({7.0, 7.0, 7.0}, 0.3) == doctest::Approx(7.0));
    CHECK(window_quantile({1.0, 2.0}, 0.5) == doctest::Approx(1.0));
    CHECK_THROWS_AS(window_quantile({}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(window_quantile({1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("window_quantile: matches brute force across random windows and a q grid") {
    Rng rng(5);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<double> w;
        const std::size_t n = 1 + rng.index(500);
        for (std::size_t i = 0; i < n; ++i) w.push_back(rng.uniform(-10.0, 10.0));
        for (int qi = 1; qi <= 99; qi += 7) {
            const double q = qi / 100.0;
            CHECK(window_quantile(w, q) == doctest::Approx(oracles::quantile_bruteforce(w, q)));
        }
    }
}

TEST_CASE("window_quantile: raising q never lowers the result") {
    Rng rng(6);
    std::vector<double> w;
    for (int i = 0; i < 64; ++i) w.push_back(rng.uniform(0.0, 1.0));
    double prev = window_quantile(w, 0.01);
    for (int qi = 2; qi <= 99; ++qi) {
        const double cur = window_quantile(w, qi / 100.0);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("mad: reference cases and brute force") {
    CHECK(mad({1.0, 2.0, 3.0, 4.0, 5.0}) == doctest::Approx(1.0));
    CHECK(mad({4.0, 4.0, 4.0}) == doctest::Approx(0.0));
    CHECK(mad({1.0, 1.0, 2.0, 2.0, 4.0, 6.0, 9.0}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(mad({}), std::invalid_argument);

    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> w;
        const std::size_t n = 1 + rng.index(300);
        for (std::size_t i = 0; i < n; ++i) w.push_back(rng.uniform(-5.0, 5.0));
        CHECK(mad(w) == doctest::Approx(oracles::mad_bruteforce(w)));
    }
}

TEST_CASE("admit_candidate: conjunction with a closed band") {
    CHECK(admit_candidate(0.5, 10.0, 0.1, 10.0, 0.5));
    CHECK_FALSE(admit_candidate(0.05, 10.0, 0.1, 10.0, 0.5));
    CHECK(admit_candidate(0.5, 10.5, 0.1, 10.0, 0.5));   // boundary inclusive
    CHECK(admit_candidate(0.5, 9.5, 0.1, 10.0, 0.5));
    CHECK_FALSE(admit_candidate(0.5, 10.51, 0.1, 10.0, 0.5));
}

TEST_CASE("regularizer: aligned median, hand value, and empty fallback") {
    CHECK(regularizer(10.0, {10.0, 10.0, 10.0}, 0.8) == doctest::Approx(0.0));
    CHECK(regularizer(10.0, {8.0}, 0.8) == doctest::Approx(1.6));
    CHECK(regularizer(10.0, {}, 0.8) == doctest::Approx(0.0));
}

TEST_CASE("current_threshold: bootstrap during warm-up, mu_a0 + mu_ar after") {
    ThresholdState st = fresh_state(123.0);
    CHECK(st.in_warmup());
    CHECK(st.current_threshold() == doctest::Approx(123.0));

    for (int i = 0; i < 64; ++i) st.observe(make_verdict(static_cast<double>(i + 1), false));
    CHECK_FALSE(st.in_warmup());
    CHECK(st.current_threshold() == doctest::Approx(st.mu_a0() + st.mu_ar()));
    // 64 normals 1..64, tau=0.95: quantile lands on the 61st order statistic
    CHECK(st.mu_a0() == doctest::Approx(61.0));
}

TEST_CASE("observe: FIFO eviction at capacity 64") {
    ThresholdState st = fresh_state();
    for (int i = 0; i < 65; ++i) st.observe(make_verdict(static_cast<double>(i), false));
    CHECK(st.normal_window_size() == 64);
    std::vector<double> w = st.normal_window();
    CHECK(w.front() == doctest::Approx(1.0));  // oldest (0) evicted
    CHECK(w.back() == doctest::Approx(64.0));
}

TEST_CASE("observe: anomaly verdicts never enter W_N") {
    ThresholdState st = fresh_state(10.0);
    st.observe(make_verdict(3.0, false));
    st.observe(make_verdict(50.0, true));
    st.observe(make_verdict(4.0, false));
    CHECK(st.normal_window_size() == 2);
    CHECK(st.arrival_window().size() == 3);  // flagged score still informs the arrival window
}

TEST_CASE("observe: candidate admission feeds W_C") {
    DtoParams p;
    p.warmup_min = 4;
    ThresholdState st = fresh_state(1000.0, 0.1, p);
    for (int i = 0; i < 32; ++i) st.observe(make_verdict(5.0 + 0.01 * i, false));
    const double mu_a0 = st.mu_a0();
    // uncertain score right at mu_a0: admitted
    st.observe(make_verdict(mu_a0, false, 0.5));
    CHECK(st.candidate_window_size() == 1);
    // confident score at mu_a0: not admitted
    st.observe(make_verdict(mu_a0, false, 0.05));
    CHECK(st.candidate_window_size() == 1);
}

TEST_CASE("observe: pivot follows the EMA of reconstruction errors") {
    ThresholdState st = fresh_state();
    CHECK(st.pivot() == doctest::Approx(1.0));
    st.observe(make_verdict(3.0, false, 0.0, 2.0));
    CHECK(st.pivot() == doctest::Approx(0.99 * 1.0 + 0.01 * 2.0));
}

TEST_CASE("reinitialize_on_drift: windows empty, bootstrap threshold, pivot retained") {
    ThresholdState st = fresh_state(77.0, 0.1);
    for (int i = 0; i < 40; ++i) st.observe(make_verdict(1.0 + i * 0.1, false, i % 3 ? 0.0 : 0.4));
    const double pivot_before = st.pivot();
    CHECK_FALSE(st.in_warmup());
    st.reinitialize_on_drift();
    CHECK(st.normal_window_size() == 0);
    CHECK(st.candidate_window_size() == 0);
    CHECK(st.in_warmup());
    CHECK(st.current_threshold() == doctest::Approx(77.0));
    CHECK(st.pivot() == doctest::Approx(pivot_before));
}

TEST_CASE("long-run FPR on a stationary iid stream stays within tau-complement + slack") {
    // lambda = 0: score == error. tau = 0.95 targets a 5% flag rate.
    Rng rng(11);
    DtoParams p;
    ThresholdState st(p, 1.0, 0.5, 5.0);  // bootstrap ~= max of a modest training sample
    std::size_t flagged = 0;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) {
        const double err = -std::log(rng.uniform() + 1e-300);  // Exp(1) scores, heavy-ish tail
        Verdict v = make_verdict(err, false);
        v.threshold = st.current_threshold();
        v.is_anomaly = v.score > v.threshold;
        st.observe(v);
        flagged += v.is_anomaly;
    }
    CHECK(static_cast<double>(flagged) / static_cast<double>(n) <= 0.07);
}

TEST_CASE("decision boundary consistency under replay") {
    Rng rng(13);
    DtoParams p;
    ThresholdState a(p, 1.0, 0.5, 4.0);
    ThresholdState b(p, 1.0, 0.5, 4.0);
    std::vector<double> scores;
    for (int i = 0; i < 500; ++i) scores.push_back(rng.uniform(0.0, 3.0) + (i % 97 == 0 ? 5.0 : 0.0));

    auto run = [](ThresholdState& st, const std::vector<double>& s) {
        std::vector<bool> decisions;
        for (double score : s) {
            Verdict v = make_verdict(score, false);
            v.threshold = st.current_threshold();
            v.is_anomaly = v.score > v.threshold;
            decisions.push_back(v.is_anomaly);
            st.observe(v);
        }
        return decisions;
    };
    CHECK(run(a, scores) == run(b, scores));
}

TEST_CASE("raising tau never lowers mu_a0 on a fixed pure-normal window") {
    Rng rng(17);
    std::vector<double> scores;
    for (int i = 0; i < 64; ++i) scores.push_back(rng.uniform(0.0, 2.0));
    double prev = -1e300;
    for (double tau : {0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99}) {
        DtoParams p;
        p.tau = tau;
        ThresholdState st(p, 1.0, 0.5, 100.0);
        for (double s : scores) st.observe(make_verdict(s, false));
        CHECK(st.mu_a0() >= prev);
        prev = st.mu_a0();
    }
}

TEST_CASE("threshold state JSON round-trip is bit-exact") {
    Rng rng(19);
    DtoParams p;
    ThresholdState st(p, 0.123456789012345678, 0.0321, 9.87654321);
    for (int i = 0; i < 100; ++i) {
        Verdict v = make_verdict(rng.uniform(0.0, 3.0), rng.bernoulli(0.1), rng.uniform(0.0, 0.19));
        v.threshold = st.current_threshold();
        st.observe(v);
    }
    const std::string j = st.to_json();
    ThresholdState back = ThresholdState::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.pivot() == st.pivot());  // bitwise: serialized via shortest round-trip repr
    CHECK(back.current_threshold() == st.current_threshold());
    CHECK(back.normal_window() == st.normal_window());
}
