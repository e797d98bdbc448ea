#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftwatch/matrix.hpp"
#include "driftwatch/rng.hpp"

namespace driftwatch {

enum class Activation { Identity, Relu, Exponential };

// Exponential activations saturate at exp(kExpPreactCap) to keep evidence
// heads finite; the derivative is zero past the cap.
constexpr double kExpPreactCap = 30.0;

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
    Matrix weight;             // in x out
    std::vector<double> bias;  // out
    Activation act = Activation::Identity;

    std::size_t in_dim() const { return weight.rows; }
    std::size_t out_dim() const { return weight.cols; }
};

struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    // Throws if adjacent layer dims do not chain or any value is non-finite.
    void validate() const;

    // Flat view of all trainable buffers, layer order: w0, b0, w1, b1, ...
    std::vector<std::vector<double>*> param_blocks();
    std::vector<const std::vector<double>*> param_blocks() const;
};

// Primal record of one forward pass; single-use, consumed by mlp_backward.
struct Tape {
    std::vector<std::vector<double>> inputs;   // input seen by each layer
    std::vector<std::vector<double>> preacts;  // z = x*W + b per layer
    std::vector<double> output;
};

// Optional per-layer additive weight deltas. Entries may be null (no shift);
// non-null entries must match the layer's weight shape.
using WeightShifts = std::vector<const Matrix*>;

std::vector<double> mlp_forward(const Mlp& net, const std::vector<double>& x,
                                Tape* tape = nullptr, const WeightShifts* shifts = nullptr);

struct MlpGrads {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;

    void accumulate(const MlpGrads& other);
    void scale(double s);
    std::vector<const std::vector<double>*> blocks() const;  // mirrors Mlp::param_blocks order
};

MlpGrads zero_grads_like(const Mlp& net);

// Reverse pass over a tape produced by mlp_forward with the same net and the
// same shifts. Weight gradients are taken w.r.t. the effective weight W + dW,
// which is also the gradient of each additive path (base and shift alike).
MlpGrads mlp_backward(const Mlp& net, const Tape& tape, const std::vector<double>& out_grad,
                      std::vector<double>* input_grad = nullptr,
                      const WeightShifts* shifts = nullptr);

// Glorot-style init: weights U(+-sqrt(6/(in+out))), biases zero.
void glorot_init(Mlp& net, Rng& rng);
void glorot_init(Matrix& w, Rng& rng);

Mlp make_mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts, Rng& rng);

// ---------------------------------------------------------------------------
// Adam over flat parameter blocks. One state instance per trainable object;
// block registration order must match between construction and step().

struct AdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay = 0.96;  // per-epoch exponential lr decay
};

class AdamState {
public:
    AdamState() = default;
    AdamState(const std::vector<std::vector<double>*>& params, AdamConfig cfg);

    void set_epoch(std::size_t epoch) { epoch_ = epoch; }
    double effective_lr() const;
    std::uint64_t steps() const { return t_; }

    // Applies one update. Throws on non-finite gradient, naming the block.
    void step(const std::vector<std::vector<double>*>& params,
              const std::vector<const std::vector<double>*>& grads);

private:
    struct Slot {
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::size_t epoch_ = 0;
};

// Convenience wrapper for plain MLPs.
void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state);

struct TrainStats {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t epochs_run = 0;
};

}  // namespace driftwatch
