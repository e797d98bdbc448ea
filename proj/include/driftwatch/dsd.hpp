#pragma once

#include <string>
#include <vector>

#include "driftwatch/scd.hpp"

namespace driftwatch {

// Which autoencoder weight matrices receive hypernetwork shifts. Biases are
// never shifted.
enum class ShiftTargets { All, EncoderOnly, DecoderOnly };

const char* shift_targets_name(ShiftTargets t);
ShiftTargets shift_targets_from_name(const std::string& name);

// Per-target-layer generator: K = (w1*e + b1) (outer) w2 + b2 + bbar,
// with w1 in R^{Nin x de}, b1 in R^{Nin}, w2 a row of length Nout, and
// b2, bbar in R^{Nin x Nout}.
struct ShiftGenerator {
    Matrix w1;
    std::vector<double> b1;
    std::vector<double> w2;
    Matrix b2;
    Matrix bbar;
};

struct LinearHead {
    Matrix weight;             // share_out x embed_dim
    std::vector<double> bias;  // embed_dim
};

// Identifies one shifted layer of the target autoencoder.
struct ShiftTargetRef {
    bool in_encoder = true;
    std::size_t layer = 0;
    std::size_t rows = 0;  // weight shape manifest, validated at load
    std::size_t cols = 0;
};

struct Hypernetwork {
    Mlp shared_encoder;  // instance features -> shared representation
    std::vector<LinearHead> heads;
    std::vector<ShiftGenerator> generators;
    std::vector<ShiftTargetRef> target_map;
    ShiftTargets targets = ShiftTargets::All;
    std::size_t embed_dim = 16;

    std::size_t n_targets() const { return target_map.size(); }
    std::vector<std::vector<double>*> param_blocks();
};

// Additive weight deltas aligned with the autoencoder's layers; untargeted
// layers hold empty matrices.
struct ParamShift {
    std::vector<Matrix> encoder;
    std::vector<Matrix> decoder;
};

// Primal record for the hypernetwork backward pass.
struct ShiftTape {
    Tape share_tape;
    std::vector<double> shared_out;
    std::vector<std::vector<double>> embeds;  // e^(n)
    std::vector<std::vector<double>> mids;    // u^(n) = w1 e + b1
};

// Output layers (w2, b2, bbar) start at zero so the generated shift is the
// identity; shared encoder, heads, w1/b1 get Glorot init.
Hypernetwork make_hypernetwork(const Autoencoder& target, ShiftTargets targets,
                               std::size_t embed_dim, std::size_t shared_width, Rng& rng);

std::vector<double> embed_layer(const Hypernetwork& h, const std::vector<double>& x, std::size_t n);

ParamShift generate_shift(const Hypernetwork& h, const std::vector<double>& x,
                          ShiftTape* tape = nullptr);

// Per-call shift views for mlp_forward/mlp_backward; the static detector is
// never written to.
WeightShifts shift_views(const ParamShift& shift, const Mlp& net, bool encoder);

// Elementwise sum of the static weights and the delta, materialized
Autoencoder apply_shift(const Autoencoder& statically_trained, const ParamShift& shift);

ReconResult dynamic_reconstruct(const Autoencoder& static_model, const Hypernetwork& h,
                                const std::vector<double>& x);

struct HypernetGrads {
    MlpGrads share;
    std::vector<Matrix> head_w;
    std::vector<std::vector<double>> head_b;
    std::vector<ShiftGenerator> gens;

    std::vector<const std::vector<double>*> blocks() const;  // mirrors param_blocks order
};

HypernetGrads zero_grads_like(const Hypernetwork& h);

// Chain rule from per-target dL/dK back into every hypernetwork parameter.
// `k_grads` is ordered like target_map; results accumulate into `out`.
void hypernet_backward(const Hypernetwork& h, const ShiftTape& tape,
                       const std::vector<const Matrix*>& k_grads, HypernetGrads& out);

struct DsdTrainConfig {
    std::size_t epochs = 2000;
    std::size_t batch = 64;
    AdamConfig adam;
    std::uint64_t seed = 42;
    bool update_static = false;       // joint mode: static detector trains too
    double static_lr_scale = 0.1;     // damped static lr in joint mode
};

struct DsdStepContext {
    AdamState hyper_state;
    AdamState enc_state;
    AdamState dec_state;
};

DsdStepContext make_dsd_step_context(Autoencoder& static_model, Hypernetwork& h,
                                     const DsdTrainConfig& cfg);

// One Adam step of L_DSD over a batch; returns the mean dynamic loss.
double dsd_train_step(Autoencoder& static_model, Hypernetwork& h,
                      const std::vector<const std::vector<double>*>& batch,
                      const DsdTrainConfig& cfg, DsdStepContext& ctx);

TrainStats train_dsd(Autoencoder& static_model, Hypernetwork& h,
                     const std::vector<std::vector<double>>& data, const DsdTrainConfig& cfg);

}  // namespace driftwatch
