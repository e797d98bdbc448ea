#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "driftwatch/dsd.hpp"
#include "oracles.hpp"

using namespace driftwatch;

namespace {

void zero_all(Hypernetwork& h) {
    for (auto* block : h.param_blocks()) std::fill(block->begin(), block->end(), 0.0);
}

std::vector<std::vector<double>> blob(std::size_t n, std::size_t d, Rng& rng, double mean = 0.0,
                                      double sd = 1.0) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    for (auto& r : rows)
        for (double& v : r) v = rng.gaussian(mean, sd);
    return rows;
}

}  // namespace

TEST_CASE("embed_layer: zero shared encoder and heads propagate zero") {
    Rng rng(1);
    Autoencoder ae = make_autoencoder(4, 2, 2, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 3, 5, rng);
    zero_all(h);
    std::vector<double> e = embed_layer(h, {1.0, -2.0, 0.5, 0.3}, 0);
    CHECK(e.size() == 3);
    for (double v : e) CHECK(v == 0.0);
    CHECK_THROWS_AS(embed_layer(h, {1.0, -2.0, 0.5, 0.3}, 99), std::invalid_argument);
}

TEST_CASE("embed_layer: distinct heads give distinct embeddings, same head is deterministic") {
    Rng rng(2);
    Autoencoder ae = make_autoencoder(4, 2, 2, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 4, 6, rng);
    std::vector<double> x{0.5, -0.3, 0.8, 0.1};
    std::vector<double> e0 = embed_layer(h, x, 0);
    std::vector<double> e1 = embed_layer(h, x, 1);
    CHECK(e0 != e1);
    CHECK(e0 == embed_layer(h, x, 0));
}

TEST_CASE("generate_shift: all-zero generator params give zero shifts") {
    Rng rng(3);
    Autoencoder ae = make_autoencoder(5, 2, 2, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 3, 4, rng);
    zero_all(h);
    ParamShift s = generate_shift(h, {1.0, 2.0, -1.0, 0.0, 0.5});
    for (const Matrix& m : s.encoder)
        for (double v : m.data) CHECK(v == 0.0);
    for (const Matrix& m : s.decoder)
        for (double v : m.data) CHECK(v == 0.0);
}

TEST_CASE("generate_shift: bias-only generator passes bbar through") {
    Rng rng(4);
    Autoencoder ae = make_autoencoder(4, 2, 1, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 3, 4, rng);
    zero_all(h);
    for (std::size_t n = 0; n < h.n_targets(); ++n)
        for (std::size_t i = 0; i < h.generators[n].bbar.data.size(); ++i)
            h.generators[n].bbar.data[i] = 0.25 * static_cast<double>(n + 1);
    ParamShift s = generate_shift(h, {0.1, 0.2, 0.3, 0.4});
    for (double v : s.encoder[0].data) CHECK(v == doctest::Approx(0.25));
    for (double v : s.decoder[0].data) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("generate_shift: matches a hand-unrolled re-evaluation on a random hypernet") {
    Rng rng(5);
    Autoencoder ae = make_autoencoder(4, 2, 2, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 3, 4, rng);
    // fill the zero-initialized output blocks so the test exercises every term
    for (ShiftGenerator& g : h.generators) {
        for (double& v : g.w2) v = rng.uniform(-0.5, 0.5);
        for (double& v : g.b2.data) v = rng.uniform(-0.5, 0.5);
        for (double& v : g.bbar.data) v = rng.uniform(-0.5, 0.5);
    }
    std::vector<double> x{0.7, -0.2, 0.4, 1.1};
    ParamShift s = generate_shift(h, x);

    for (std::size_t n = 0; n < h.n_targets(); ++n) {
        const ShiftTargetRef& ref = h.target_map[n];
        const ShiftGenerator& gen = h.generators[n];
        std::vector<double> e = embed_layer(h, x, n);
        const Matrix& k = ref.in_encoder ? s.encoder[ref.layer] : s.decoder[ref.layer];
        for (std::size_t i = 0; i < ref.rows; ++i) {
            double u = gen.b1[i];
            for (std::size_t j = 0; j < e.size(); ++j) u += gen.w1(i, j) * e[j];
            for (std::size_t j = 0; j < ref.cols; ++j) {
                const double expected = u * gen.w2[j] + gen.b2(i, j) + gen.bbar(i, j);
                CHECK(k(i, j) == doctest::Approx(expected).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("apply_shift: zero shift reproduces static reconstruction bitwise") {
    Rng rng(6);
    Autoencoder ae = make_autoencoder(5, 2, 2, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 3, 4, rng);
    zero_all(h);
    std::vector<double> x{0.3, -0.4, 0.8, 1.2, -0.1};
    ReconResult stat = reconstruct(ae, x);
    ReconResult dyn = dynamic_reconstruct(ae, h, x);
    CHECK(dyn.error == stat.error);  // bitwise
    CHECK(dyn.reconstruction == stat.reconstruction);
}

TEST_CASE("apply_shift: cancelling shift zeroes the dynamic weights") {
    Rng rng(7);
    Autoencoder ae = make_autoencoder(4, 2, 1, rng);
    ParamShift s;
    s.encoder.resize(ae.encoder.layers.size());
    s.decoder.resize(ae.decoder.layers.size());
    for (std::size_t l = 0; l < ae.encoder.layers.size(); ++l) {
        s.encoder[l] = ae.encoder.layers[l].weight;
        for (double& v : s.encoder[l].data) v = -v;
    }
    for (std::size_t l = 0; l < ae.decoder.layers.size(); ++l) {
        s.decoder[l] = ae.decoder.layers[l].weight;
        for (double& v : s.decoder[l].data) v = -v;
    }
    Autoencoder dyn = apply_shift(ae, s);
    for (const DenseLayer& layer : dyn.encoder.layers)
        for (double v : layer.weight.data) CHECK(v == 0.0);
    for (const DenseLayer& layer : dyn.decoder.layers)
        for (double v : layer.weight.data) CHECK(v == 0.0);
    // static base untouched
    bool any_nonzero = false;
    for (double v : ae.encoder.layers[0].weight.data) any_nonzero |= v != 0.0;
    CHECK(any_nonzero);
}

TEST_CASE("apply_shift: repeated application never accumulates into the base") {
    Rng rng(8);
    Autoencoder ae = make_autoencoder(4, 2, 2, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 3, 4, rng);
    for (ShiftGenerator& g : h.generators)
        for (double& v : g.bbar.data) v = rng.uniform(-0.3, 0.3);
    std::vector<double> x{0.5, 0.1, -0.6, 0.9};
    Autoencoder before = ae;
    ReconResult first = dynamic_reconstruct(ae, h, x);
    ReconResult second = dynamic_reconstruct(ae, h, x);
    CHECK(first.error == second.error);
    CHECK(first.reconstruction == second.reconstruction);
    for (std::size_t l = 0; l < ae.encoder.layers.size(); ++l)
        CHECK(ae.encoder.layers[l].weight.data == before.encoder.layers[l].weight.data);
}

TEST_CASE("apply_shift: shape mismatch is rejected") {
    Rng rng(9);
    Autoencoder ae = make_autoencoder(4, 2, 1, rng);
    ParamShift s;
    s.encoder.emplace_back(2, 2, 0.0);  // wrong shape
    CHECK_THROWS_AS(apply_shift(ae, s), std::invalid_argument);
}

TEST_CASE("identity reduction: zero-initialized hypernetwork equals static on 1000 instances") {
    Rng rng(10);
    Autoencoder ae = make_autoencoder(6, 3, 3, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 16, 32, rng);  // fresh init: w2/b2/bbar zero
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> x(6);
        for (double& v : x) v = rng.uniform(-3.0, 3.0);
        CHECK(dynamic_reconstruct(ae, h, x).error == reconstruct(ae, x).error);
    }
}

TEST_CASE("hypernetwork gradients match finite differences on tiny configurations") {
    double worst = 0.0;
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        Rng rng(seed * 97 + 13);
        const std::size_t d = 3 + rng.index(3);  // <= 5
        const std::size_t latent = 1 + rng.index(d - 2);
        Autoencoder ae = make_autoencoder(d, latent, 2, rng);
        Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 2 + rng.index(3), 4, rng);
        for (ShiftGenerator& g : h.generators) {
            for (double& v : g.w2) v = rng.uniform(-0.4, 0.4);
            for (double& v : g.b2.data) v = rng.uniform(-0.2, 0.2);
            for (double& v : g.bbar.data) v = rng.uniform(-0.2, 0.2);
        }
        std::vector<double> x(d);
        for (double& v : x) v = rng.uniform(-1.5, 1.5);

        auto loss = [&]() { return dynamic_reconstruct(ae, h, x).error; };

        ShiftTape stape;
        ParamShift shift = generate_shift(h, x, &stape);
        WeightShifts enc_views = shift_views(shift, ae.encoder, true);
        WeightShifts dec_views = shift_views(shift, ae.decoder, false);
        Tape enc_tape, dec_tape;
        std::vector<double> z = mlp_forward(ae.encoder, x, &enc_tape, &enc_views);
        std::vector<double> y = mlp_forward(ae.decoder, z, &dec_tape, &dec_views);

        // skip relu-kink configurations (finite differences invalid there)
        bool safe = true;
        auto scan = [&](const Mlp& net, const Tape& tape) {
            for (std::size_t l = 0; l < net.layers.size(); ++l)
                if (net.layers[l].act == Activation::Relu)
                    for (double zv : tape.preacts[l])
                        if (std::fabs(zv) < 5e-3) safe = false;
        };
        scan(ae.encoder, enc_tape);
        scan(ae.decoder, dec_tape);
        scan(h.shared_encoder, stape.share_tape);
        if (!safe) continue;

        std::vector<double> gy(y.size());
        for (std::size_t j = 0; j < y.size(); ++j)
            gy[j] = 2.0 * (y[j] - x[j]) / static_cast<double>(d);
        std::vector<double> gz;
        MlpGrads dec_g = mlp_backward(ae.decoder, dec_tape, gy, &gz, &dec_views);
        MlpGrads enc_g = mlp_backward(ae.encoder, enc_tape, gz, nullptr, &enc_views);

        std::vector<const Matrix*> k_grads;
        for (const ShiftTargetRef& ref : h.target_map)
            k_grads.push_back(ref.in_encoder ? &enc_g.weight[ref.layer] : &dec_g.weight[ref.layer]);
        HypernetGrads hg = zero_grads_like(h);
        hypernet_backward(h, stape, k_grads, hg);

        auto fd = oracles::finite_difference(h.param_blocks(), loss);
        worst = std::max(worst, oracles::max_rel_err(fd, hg.blocks()));
        ++checked;
    }
    CHECK(checked >= 5);
    CHECK(worst < 1e-4);
}

TEST_CASE("train_dsd: no-drift sanity, the shift learns an approximate no-op") {
    Rng rng(30);
    auto data = blob(200, 4, rng);
    Rng init(31);
    Autoencoder ae = make_autoencoder(4, 2, 2, init);
    ScdTrainConfig scfg;
    scfg.epochs = 300;
    scfg.seed = 5;
    train_scd(ae, data, scfg);
    double static_err = 0.0;
    for (const auto& x : data) static_err += reconstruct(ae, x).error;
    static_err /= static_cast<double>(data.size());

    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 8, 16, init);
    DsdTrainConfig dcfg;
    dcfg.epochs = 120;
    dcfg.seed = 6;
    TrainStats stats = train_dsd(ae, h, data, dcfg);
    CHECK(stats.final_loss <= 1.05 * static_err);
}

TEST_CASE("train_dsd: adapts to a mean-shifted blob the static detector cannot fit") {
    Rng rng(40);
    auto historical = blob(200, 4, rng);
    Rng init(41);
    Autoencoder ae = make_autoencoder(4, 2, 2, init);
    ScdTrainConfig scfg;
    scfg.epochs = 300;
    scfg.seed = 7;
    train_scd(ae, historical, scfg);

    auto drifted = blob(200, 4, rng, 4.0);
    double static_err = 0.0;
    for (const auto& x : drifted) static_err += reconstruct(ae, x).error;
    static_err /= static_cast<double>(drifted.size());

    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 8, 16, init);
    DsdTrainConfig dcfg;
    dcfg.epochs = 200;
    dcfg.adam.decay = 1.0;
    dcfg.seed = 8;
    TrainStats stats = train_dsd(ae, h, drifted, dcfg);
    CHECK(stats.final_loss < 0.5 * static_err);

    // static base stayed bit-identical under freeze_static
    Rng init2(41);
    Autoencoder fresh = make_autoencoder(4, 2, 2, init2);
    ScdTrainConfig scfg2;
    scfg2.epochs = 300;
    scfg2.seed = 7;
    train_scd(fresh, historical, scfg2);
    for (std::size_t l = 0; l < ae.encoder.layers.size(); ++l)
        CHECK(ae.encoder.layers[l].weight.data == fresh.encoder.layers[l].weight.data);
}

TEST_CASE("train_dsd: zero epochs leaves the hypernetwork unchanged") {
    Rng rng(50);
    Autoencoder ae = make_autoencoder(4, 2, 2, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 4, 8, rng);
    Hypernetwork before = h;
    auto data = blob(10, 4, rng);
    DsdTrainConfig cfg;
    cfg.epochs = 0;
    train_dsd(ae, h, data, cfg);
    auto hb = h.param_blocks();
    auto bb = before.param_blocks();
    for (std::size_t i = 0; i < hb.size(); ++i) CHECK(*hb[i] == *bb[i]);
}

TEST_CASE("instance-awareness: trained shifts differ across inputs") {
    Rng rng(60);
    auto bimodal = blob(100, 4, rng, -2.0);
    auto second = blob(100, 4, rng, 2.0);
    bimodal.insert(bimodal.end(), second.begin(), second.end());
    Rng init(61);
    Autoencoder ae = make_autoencoder(4, 2, 2, init);
    ScdTrainConfig scfg;
    scfg.epochs = 150;
    scfg.seed = 9;
    train_scd(ae, bimodal, scfg);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::All, 8, 16, init);
    DsdTrainConfig dcfg;
    dcfg.epochs = 100;
    dcfg.seed = 10;
    train_dsd(ae, h, bimodal, dcfg);

    ParamShift a = generate_shift(h, bimodal.front());
    ParamShift b = generate_shift(h, second.front());
    double diff = 0.0;
    for (std::size_t l = 0; l < a.encoder.size(); ++l)
        for (std::size_t i = 0; i < a.encoder[l].data.size(); ++i)
            diff += std::fabs(a.encoder[l].data[i] - b.encoder[l].data[i]);
    CHECK(diff > 0.0);
}

TEST_CASE("decoder-only targeting leaves encoder weights unshifted") {
    Rng rng(70);
    Autoencoder ae = make_autoencoder(4, 2, 2, rng);
    Hypernetwork h = make_hypernetwork(ae, ShiftTargets::DecoderOnly, 4, 8, rng);
    for (ShiftGenerator& g : h.generators)
        for (double& v : g.bbar.data) v = 0.1;
    ParamShift s = generate_shift(h, {0.1, 0.2, 0.3, 0.4});
    CHECK(s.encoder.empty());
    CHECK(s.decoder.size() == ae.decoder.layers.size());
    for (const ShiftTargetRef& ref : h.target_map) CHECK_FALSE(ref.in_encoder);
}
