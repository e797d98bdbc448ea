#include "driftwatch/dsd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace driftwatch {

const char* shift_targets_name(ShiftTargets t) {
    switch (t) {
        case ShiftTargets::All: return "all";
        case ShiftTargets::EncoderOnly: return "encoder";
        case ShiftTargets::DecoderOnly: return "decoder";
    }
    return "all";
}

ShiftTargets shift_targets_from_name(const std::string& name) {
    if (name == "all") return ShiftTargets::All;
    if (name == "encoder") return ShiftTargets::EncoderOnly;
    if (name == "decoder") return ShiftTargets::DecoderOnly;
    throw std::invalid_argument("unknown shift target set: " + name);
}

std::vector<std::vector<double>*> Hypernetwork::param_blocks() {
    std::vector<std::vector<double>*> blocks = shared_encoder.param_blocks();
    for (LinearHead& head : heads) {
        blocks.push_back(&head.weight.data);
        blocks.push_back(&head.bias);
    }
    for (ShiftGenerator& g : generators) {
        blocks.push_back(&g.w1.data);
        blocks.push_back(&g.b1);
        blocks.push_back(&g.w2);
        blocks.push_back(&g.b2.data);
        blocks.push_back(&g.bbar.data);
    }
    return blocks;
}

Hypernetwork make_hypernetwork(const Autoencoder& target, ShiftTargets targets,
                               std::size_t embed_dim, std::size_t shared_width, Rng& rng) {
    if (embed_dim == 0 || shared_width == 0)
        throw std::invalid_argument("hypernetwork: embed_dim and shared_width must be positive");

    Hypernetwork h;
    h.targets = targets;
    h.embed_dim = embed_dim;
    h.shared_encoder = make_mlp({target.input_dim(), shared_width, shared_width},
                                {Activation::Relu, Activation::Relu}, rng);

    auto add_targets = [&](const Mlp& net, bool in_encoder) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            ShiftTargetRef ref;
            ref.in_encoder = in_encoder;
            ref.layer = l;
            ref.rows = net.layers[l].weight.rows;
            ref.cols = net.layers[l].weight.cols;
            h.target_map.push_back(ref);
        }
    };
    if (targets != ShiftTargets::DecoderOnly) add_targets(target.encoder, true);
    if (targets != ShiftTargets::EncoderOnly) add_targets(target.decoder, false);

    for (const ShiftTargetRef& ref : h.target_map) {
        LinearHead head;
        head.weight = Matrix(shared_width, embed_dim);
        glorot_init(head.weight, rng);
        head.bias.assign(embed_dim, 0.0);
        h.heads.push_back(std::move(head));

        ShiftGenerator gen;
        gen.w1 = Matrix(ref.rows, embed_dim);
        glorot_init(gen.w1, rng);
        gen.b1.assign(ref.rows, 0.0);
        gen.w2.assign(ref.cols, 0.0);     // zero: training starts from the identity detector
        gen.b2 = Matrix(ref.rows, ref.cols, 0.0);
        gen.bbar = Matrix(ref.rows, ref.cols, 0.0);
        h.generators.push_back(std::move(gen));
    }
    return h;
}

std::vector<double> embed_layer(const Hypernetwork& h, const std::vector<double>& x, std::size_t n) {
    if (n >= h.n_targets()) throw std::invalid_argument("embed_layer: layer index out of range");
    std::vector<double> shared = mlp_forward(h.shared_encoder, x);
    const LinearHead& head = h.heads[n];
    std::vector<double> e(h.embed_dim);
    for (std::size_t j = 0; j < h.embed_dim; ++j) e[j] = head.bias[j];
    for (std::size_t i = 0; i < shared.size(); ++i) {
        const double si = shared[i];
        if (si == 0.0) continue;
        const double* wrow = &head.weight.data[i * head.weight.cols];
        for (std::size_t j = 0; j < h.embed_dim; ++j) e[j] += si * wrow[j];
    }
    return e;
}

ParamShift generate_shift(const Hypernetwork& h, const std::vector<double>& x, ShiftTape* tape) {
    ParamShift shift;
    // sized lazily by target_map; empty matrices mean "no shift for this layer"
    std::size_t enc_layers = 0, dec_layers = 0;
    for (const ShiftTargetRef& ref : h.target_map)
        (ref.in_encoder ? enc_layers : dec_layers) = std::max(ref.in_encoder ? enc_layers : dec_layers,
                                                              ref.layer + 1);
    shift.encoder.resize(enc_layers);
    shift.decoder.resize(dec_layers);

    Tape share_tape;
    std::vector<double> shared = mlp_forward(h.shared_encoder, x, tape ? &share_tape : nullptr);
    if (tape) {
        tape->share_tape = std::move(share_tape);
        tape->shared_out = shared;
        tape->embeds.clear();
        tape->mids.clear();
    }

    for (std::size_t n = 0; n < h.n_targets(); ++n) {
        const ShiftTargetRef& ref = h.target_map[n];
        const LinearHead& head = h.heads[n];
        const ShiftGenerator& gen = h.generators[n];

        std::vector<double> e(h.embed_dim);
        for (std::size_t j = 0; j < h.embed_dim; ++j) e[j] = head.bias[j];
        for (std::size_t i = 0; i < shared.size(); ++i) {
            const double si = shared[i];
            if (si == 0.0) continue;
            const double* wrow = &head.weight.data[i * head.weight.cols];
            for (std::size_t j = 0; j < h.embed_dim; ++j) e[j] += si * wrow[j];
        }

        std::vector<double> u(ref.rows);
        for (std::size_t i = 0; i < ref.rows; ++i) {
            const double* wrow = &gen.w1.data[i * gen.w1.cols];
            double s = gen.b1[i];
            for (std::size_t j = 0; j < h.embed_dim; ++j) s += wrow[j] * e[j];
            u[i] = s;
        }

        Matrix k(ref.rows, ref.cols);
        for (std::size_t i = 0; i < ref.rows; ++i)
            for (std::size_t j = 0; j < ref.cols; ++j) {
                const double v = u[i] * gen.w2[j] + gen.b2(i, j) + gen.bbar(i, j);
                if (!std::isfinite(v))
                    throw std::runtime_error("generate_shift: non-finite value for target layer " +
                                             std::to_string(n));
                k(i, j) = v;
            }

        if (tape) {
            tape->embeds.push_back(std::move(e));
            tape->mids.push_back(std::move(u));
        }
        (ref.in_encoder ? shift.encoder : shift.decoder)[ref.layer] = std::move(k);
    }
    return shift;
}

WeightShifts shift_views(const ParamShift& shift, const Mlp& net, bool encoder) {
    const std::vector<Matrix>& side = encoder ? shift.encoder : shift.decoder;
    WeightShifts views(net.layers.size(), nullptr);
    for (std::size_t l = 0; l < net.layers.size() && l < side.size(); ++l)
        if (!side[l].empty()) views[l] = &side[l];
    return views;
}

Autoencoder apply_shift(const Autoencoder& statically_trained, const ParamShift& shift) {
    Autoencoder dynamic_model = statically_trained;
    auto add = [](Mlp& net, const std::vector<Matrix>& deltas) {
        for (std::size_t l = 0; l < net.layers.size() && l < deltas.size(); ++l) {
            if (deltas[l].empty()) continue;
            if (!deltas[l].same_shape(net.layers[l].weight))
                throw std::invalid_argument("apply_shift: layer " + std::to_string(l) + " shape " +
                                            shape_str(deltas[l]) + " vs " + shape_str(net.layers[l].weight));
            for (std::size_t i = 0; i < deltas[l].data.size(); ++i)
                net.layers[l].weight.data[i] += deltas[l].data[i];
        }
    };
    add(dynamic_model.encoder, shift.encoder);
    add(dynamic_model.decoder, shift.decoder);
    return dynamic_model;
}

ReconResult dynamic_reconstruct(const Autoencoder& static_model, const Hypernetwork& h,
                                const std::vector<double>& x) {
    ParamShift shift = generate_shift(h, x);
    WeightShifts enc_views = shift_views(shift, static_model.encoder, true);
    WeightShifts dec_views = shift_views(shift, static_model.decoder, false);
    ReconResult r;
    r.latent = mlp_forward(static_model.encoder, x, nullptr, &enc_views);
    r.reconstruction = mlp_forward(static_model.decoder, r.latent, nullptr, &dec_views);
    r.error = recon_error(x, r.reconstruction);
    return r;
}

HypernetGrads zero_grads_like(const Hypernetwork& h) {
    HypernetGrads g;
    g.share = zero_grads_like(h.shared_encoder);
    for (const LinearHead& head : h.heads) {
        g.head_w.emplace_back(head.weight.rows, head.weight.cols, 0.0);
        g.head_b.emplace_back(head.bias.size(), 0.0);
    }
    for (const ShiftGenerator& gen : h.generators) {
        ShiftGenerator zg;
        zg.w1 = Matrix(gen.w1.rows, gen.w1.cols, 0.0);
        zg.b1.assign(gen.b1.size(), 0.0);
        zg.w2.assign(gen.w2.size(), 0.0);
        zg.b2 = Matrix(gen.b2.rows, gen.b2.cols, 0.0);
        zg.bbar = Matrix(gen.bbar.rows, gen.bbar.cols, 0.0);
        g.gens.push_back(std::move(zg));
    }
    return g;
}

std::vector<const std::vector<double>*> HypernetGrads::blocks() const {
    std::vector<const std::vector<double>*> blocks = share.blocks();
    for (std::size_t i = 0; i < head_w.size(); ++i) {
        blocks.push_back(&head_w[i].data);
        blocks.push_back(&head_b[i]);
    }
    for (const ShiftGenerator& g : gens) {
        blocks.push_back(&g.w1.data);
        blocks.push_back(&g.b1);
        blocks.push_back(&g.w2);
        blocks.push_back(&g.b2.data);
        blocks.push_back(&g.bbar.data);
    }
    return blocks;
}

void hypernet_backward(const Hypernetwork& h, const ShiftTape& tape,
                       const std::vector<const Matrix*>& k_grads, HypernetGrads& out) {
    if (k_grads.size() != h.n_targets())
        throw std::invalid_argument("hypernet_backward: expected one K gradient per target layer");

    std::vector<double> g_shared(tape.shared_out.size(), 0.0);
    for (std::size_t n = 0; n < h.n_targets(); ++n) {
        const Matrix* gk = k_grads[n];
        if (!gk) continue;
        const ShiftGenerator& gen = h.generators[n];
        const LinearHead& head = h.heads[n];
        const std::vector<double>& e = tape.embeds[n];
        const std::vector<double>& u = tape.mids[n];
        const std::size_t rows = gen.b2.rows, cols = gen.b2.cols;

        ShiftGenerator& gg = out.gens[n];
        std::vector<double> du(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* grow = &gk->data[i * cols];
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double gij = grow[j];
                gg.b2(i, j) += gij;
                gg.bbar(i, j) += gij;
                gg.w2[j] += gij * u[i];
                s += gij * gen.w2[j];
            }
            du[i] = s;
        }

        std::vector<double> de(h.embed_dim, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            const double dui = du[i];
            gg.b1[i] += dui;
            if (dui == 0.0) continue;
            const double* wrow = &gen.w1.data[i * gen.w1.cols];
            double* grow = &gg.w1.data[i * gg.w1.cols];
            for (std::size_t j = 0; j < h.embed_dim; ++j) {
                grow[j] += dui * e[j];
                de[j] += dui * wrow[j];
            }
        }

        Matrix& hw = out.head_w[n];
        for (std::size_t i = 0; i < tape.shared_out.size(); ++i) {
            const double si = tape.shared_out[i];
            const double* wrow = &head.weight.data[i * head.weight.cols];
            double* grow = &hw.data[i * hw.cols];
            double s = 0.0;
            for (std::size_t j = 0; j < h.embed_dim; ++j) {
                grow[j] += si * de[j];
                s += wrow[j] * de[j];
            }
            g_shared[i] += s;
        }
        for (std::size_t j = 0; j < h.embed_dim; ++j) out.head_b[n][j] += de[j];
    }
    out.share.accumulate(mlp_backward(h.shared_encoder, tape.share_tape, g_shared));
}

DsdStepContext make_dsd_step_context(Autoencoder& static_model, Hypernetwork& h,
                                     const DsdTrainConfig& cfg) {
    DsdStepContext ctx;
    ctx.hyper_state = AdamState(h.param_blocks(), cfg.adam);
    AdamConfig static_cfg = cfg.adam;
    static_cfg.lr *= cfg.static_lr_scale;
    ctx.enc_state = AdamState(static_model.encoder.param_blocks(), static_cfg);
    ctx.dec_state = AdamState(static_model.decoder.param_blocks(), static_cfg);
    return ctx;
}

double dsd_train_step(Autoencoder& static_model, Hypernetwork& h,
                      const std::vector<const std::vector<double>*>& batch,
                      const DsdTrainConfig& cfg, DsdStepContext& ctx) {
    if (batch.empty()) return 0.0;
    HypernetGrads hg = zero_grads_like(h);
    MlpGrads enc_g = zero_grads_like(static_model.encoder);
    MlpGrads dec_g = zero_grads_like(static_model.decoder);
    const double inv_dim = 1.0 / static_cast<double>(static_model.input_dim());
    double loss_sum = 0.0;

    for (const std::vector<double>* xp : batch) {
        const std::vector<double>& x = *xp;
        ShiftTape stape;
        ParamShift shift = generate_shift(h, x, &stape);
        WeightShifts enc_views = shift_views(shift, static_model.encoder, true);
        WeightShifts dec_views = shift_views(shift, static_model.decoder, false);

        Tape enc_tape, dec_tape;
        std::vector<double> z = mlp_forward(static_model.encoder, x, &enc_tape, &enc_views);
        std::vector<double> y = mlp_forward(static_model.decoder, z, &dec_tape, &dec_views);
        loss_sum += recon_error(x, y);

        std::vector<double> gy(y.size());
        for (std::size_t j = 0; j < y.size(); ++j) gy[j] = 2.0 * (y[j] - x[j]) * inv_dim;
        std::vector<double> gz;
        MlpGrads dec_sample = mlp_backward(static_model.decoder, dec_tape, gy, &gz, &dec_views);
        MlpGrads enc_sample = mlp_backward(static_model.encoder, enc_tape, gz, nullptr, &enc_views);

        // The effective-weight gradient doubles as dL/dK for shifted layers.
        std::vector<const Matrix*> k_grads;
        k_grads.reserve(h.n_targets());
        for (const ShiftTargetRef& ref : h.target_map)
            k_grads.push_back(ref.in_encoder ? &enc_sample.weight[ref.layer] : &dec_sample.weight[ref.layer]);
        hypernet_backward(h, stape, k_grads, hg);

        if (cfg.update_static) {
            enc_g.accumulate(enc_sample);
            dec_g.accumulate(dec_sample);
        }
    }

    const double mean_loss = loss_sum / static_cast<double>(batch.size());
    if (!std::isfinite(mean_loss)) throw std::runtime_error("train_dsd: non-finite loss");
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (ShiftGenerator& g : hg.gens) {
        for (double& v : g.w1.data) v *= scale;
        for (double& v : g.b1) v *= scale;
        for (double& v : g.w2) v *= scale;
        for (double& v : g.b2.data) v *= scale;
        for (double& v : g.bbar.data) v *= scale;
    }
    for (Matrix& m : hg.head_w)
        for (double& v : m.data) v *= scale;
    for (auto& b : hg.head_b)
        for (double& v : b) v *= scale;
    hg.share.scale(scale);

    ctx.hyper_state.step(h.param_blocks(), hg.blocks());
    if (cfg.update_static) {
        enc_g.scale(scale);
        dec_g.scale(scale);
        ctx.enc_state.step(static_model.encoder.param_blocks(), enc_g.blocks());
        ctx.dec_state.step(static_model.decoder.param_blocks(), dec_g.blocks());
    }
    return mean_loss;
}

namespace {

double mean_dynamic_loss(const Autoencoder& static_model, const Hypernetwork& h,
                         const std::vector<std::vector<double>>& data) {
    double s = 0.0;
    for (const auto& x : data) s += dynamic_reconstruct(static_model, h, x).error;
    return s / static_cast<double>(data.size());
}

}  // namespace

TrainStats train_dsd(Autoencoder& static_model, Hypernetwork& h,
                     const std::vector<std::vector<double>>& data, const DsdTrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("train_dsd: empty dataset");

    TrainStats stats;
    stats.initial_loss = mean_dynamic_loss(static_model, h, data);
    if (cfg.epochs == 0) {
        stats.final_loss = stats.initial_loss;
        return stats;
    }

    Rng rng(cfg.seed);
    DsdStepContext ctx = make_dsd_step_context(static_model, h, cfg);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch = std::max<std::size_t>(1, cfg.batch);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        ctx.hyper_state.set_epoch(epoch);
        ctx.enc_state.set_epoch(epoch);
        ctx.dec_state.set_epoch(epoch);
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<const std::vector<double>*> view;
            view.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) view.push_back(&data[order[k]]);
            dsd_train_step(static_model, h, view, cfg, ctx);
        }
        ++stats.epochs_run;
    }
    stats.final_loss = mean_dynamic_loss(static_model, h, data);
    return stats;
}

}  // namespace driftwatch
