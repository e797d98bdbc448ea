#include "driftwatch/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace driftwatch {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Exponential: return "exponential";
    }
    return "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "exponential") return Activation::Exponential;
    throw std::invalid_argument("unknown activation: " + name);
}

void Mlp::validate() const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& layer = layers[l];
        if (layer.weight.data.size() != layer.weight.rows * layer.weight.cols)
            throw std::runtime_error("layer " + std::to_string(l) + ": weight buffer size mismatch");
        if (layer.bias.size() != layer.out_dim())
            throw std::runtime_error("layer " + std::to_string(l) + ": bias length != out dim");
        if (l > 0 && layers[l - 1].out_dim() != layer.in_dim())
            throw std::runtime_error("layer " + std::to_string(l) + ": input dim " +
                                     std::to_string(layer.in_dim()) + " does not chain from previous out dim " +
                                     std::to_string(layers[l - 1].out_dim()));
        for (double v : layer.weight.data)
            if (!std::isfinite(v)) throw std::runtime_error("layer " + std::to_string(l) + ": non-finite weight");
        for (double v : layer.bias)
            if (!std::isfinite(v)) throw std::runtime_error("layer " + std::to_string(l) + ": non-finite bias");
    }
}

std::vector<std::vector<double>*> Mlp::param_blocks() {
    std::vector<std::vector<double>*> blocks;
    blocks.reserve(layers.size() * 2);
    for (DenseLayer& layer : layers) {
        blocks.push_back(&layer.weight.data);
        blocks.push_back(&layer.bias);
    }
    return blocks;
}

std::vector<const std::vector<double>*> Mlp::param_blocks() const {
    std::vector<const std::vector<double>*> blocks;
    blocks.reserve(layers.size() * 2);
    for (const DenseLayer& layer : layers) {
        blocks.push_back(&layer.weight.data);
        blocks.push_back(&layer.bias);
    }
    return blocks;
}

namespace {

double apply_act(Activation act, double z) {
    switch (act) {
        case Activation::Identity: return z;
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Exponential: return std::exp(z < kExpPreactCap ? z : kExpPreactCap);
    }
    return z;
}

double act_deriv(Activation act, double z) {
    switch (act) {
        case Activation::Identity: return 1.0;
        case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Exponential: return z < kExpPreactCap ? std::exp(z) : 0.0;
    }
    return 1.0;
}

void check_shift(const Mlp& net, const WeightShifts* shifts) {
    if (!shifts) return;
    if (shifts->size() != net.layers.size())
        throw std::invalid_argument("weight shifts: expected " + std::to_string(net.layers.size()) +
                                    " entries, got " + std::to_string(shifts->size()));
    for (std::size_t l = 0; l < shifts->size(); ++l) {
        const Matrix* d = (*shifts)[l];
        if (d && !d->same_shape(net.layers[l].weight))
            throw std::invalid_argument("weight shift for layer " + std::to_string(l) + ": shape " +
                                        shape_str(*d) + " vs weight " + shape_str(net.layers[l].weight));
    }
}

}  // namespace

std::vector<double> mlp_forward(const Mlp& net, const std::vector<double>& x, Tape* tape,
                                const WeightShifts* shifts) {
    if (net.layers.empty()) throw std::invalid_argument("mlp_forward: empty network");
    if (x.size() != net.input_dim())
        throw std::invalid_argument("mlp_forward: layer 0 expects input dim " +
                                    std::to_string(net.input_dim()) + ", got " + std::to_string(x.size()));
    check_shift(net, shifts);

    if (tape) {
        tape->inputs.clear();
        tape->preacts.clear();
        tape->inputs.reserve(net.layers.size());
        tape->preacts.reserve(net.layers.size());
    }

    std::vector<double> cur = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        const Matrix* delta = shifts ? (*shifts)[l] : nullptr;
        std::vector<double> z(layer.out_dim());
        for (std::size_t j = 0; j < layer.out_dim(); ++j) z[j] = layer.bias[j];
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
            const double xi = cur[i];
            if (xi == 0.0) continue;
            const double* wrow = &layer.weight.data[i * layer.weight.cols];
            if (delta) {
                const double* drow = &delta->data[i * delta->cols];
                for (std::size_t j = 0; j < layer.out_dim(); ++j) z[j] += xi * (wrow[j] + drow[j]);
            } else {
                for (std::size_t j = 0; j < layer.out_dim(); ++j) z[j] += xi * wrow[j];
            }
        }
        if (tape) {
            tape->inputs.push_back(std::move(cur));
            tape->preacts.push_back(z);
        }
        cur.resize(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) cur[j] = apply_act(layer.act, z[j]);
    }
    if (tape) tape->output = cur;
    return cur;
}

MlpGrads zero_grads_like(const Mlp& net) {
    MlpGrads g;
    g.weight.reserve(net.layers.size());
    g.bias.reserve(net.layers.size());
    for (const DenseLayer& layer : net.layers) {
        g.weight.emplace_back(layer.weight.rows, layer.weight.cols, 0.0);
        g.bias.emplace_back(layer.out_dim(), 0.0);
    }
    return g;
}

void MlpGrads::accumulate(const MlpGrads& other) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
        for (std::size_t i = 0; i < weight[l].data.size(); ++i) weight[l].data[i] += other.weight[l].data[i];
        for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
    }
}

void MlpGrads::scale(double s) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
        for (double& v : weight[l].data) v *= s;
        for (double& v : bias[l]) v *= s;
    }
}

std::vector<const std::vector<double>*> MlpGrads::blocks() const {
    std::vector<const std::vector<double>*> out;
    out.reserve(weight.size() * 2);
    for (std::size_t l = 0; l < weight.size(); ++l) {
        out.push_back(&weight[l].data);
        out.push_back(&bias[l]);
    }
    return out;
}

MlpGrads mlp_backward(const Mlp& net, const Tape& tape, const std::vector<double>& out_grad,
                      std::vector<double>* input_grad, const WeightShifts* shifts) {
    if (tape.inputs.size() != net.layers.size() || tape.preacts.size() != net.layers.size())
        throw std::invalid_argument("mlp_backward: tape does not match network (stale or foreign tape)");
    if (out_grad.size() != net.output_dim())
        throw std::invalid_argument("mlp_backward: out_grad dim " + std::to_string(out_grad.size()) +
                                    " vs output dim " + std::to_string(net.output_dim()));
    check_shift(net, shifts);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (tape.inputs[l].size() != net.layers[l].in_dim() || tape.preacts[l].size() != net.layers[l].out_dim())
            throw std::invalid_argument("mlp_backward: tape layer " + std::to_string(l) + " shape mismatch");
    }

    MlpGrads grads = zero_grads_like(net);
    std::vector<double> g = out_grad;  // gradient w.r.t. layer output
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const DenseLayer& layer = net.layers[l];
        const Matrix* delta = shifts ? (*shifts)[l] : nullptr;
        const std::vector<double>& z = tape.preacts[l];
        const std::vector<double>& in = tape.inputs[l];

        std::vector<double> gz(layer.out_dim());
        for (std::size_t j = 0; j < layer.out_dim(); ++j) gz[j] = g[j] * act_deriv(layer.act, z[j]);

        Matrix& wg = grads.weight[l];
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
            const double xi = in[i];
            if (xi == 0.0) continue;
            double* wrow = &wg.data[i * wg.cols];
            for (std::size_t j = 0; j < layer.out_dim(); ++j) wrow[j] += xi * gz[j];
        }
        for (std::size_t j = 0; j < layer.out_dim(); ++j) grads.bias[l][j] += gz[j];

        if (l > 0 || input_grad) {
            std::vector<double> gin(layer.in_dim(), 0.0);
            for (std::size_t i = 0; i < layer.in_dim(); ++i) {
                const double* wrow = &layer.weight.data[i * layer.weight.cols];
                double s = 0.0;
                if (delta) {
                    const double* drow = &delta->data[i * delta->cols];
                    for (std::size_t j = 0; j < layer.out_dim(); ++j) s += (wrow[j] + drow[j]) * gz[j];
                } else {
                    for (std::size_t j = 0; j < layer.out_dim(); ++j) s += wrow[j] * gz[j];
                }
                gin[i] = s;
            }
            if (l == 0 && input_grad) *input_grad = gin;
            g = std::move(gin);
        }
    }
    return grads;
}

void glorot_init(Matrix& w, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    for (double& v : w.data) v = rng.uniform(-limit, limit);
}

void glorot_init(Mlp& net, Rng& rng) {
    for (DenseLayer& layer : net.layers) {
        glorot_init(layer.weight, rng);
        // the small positive offset keeps freshly initialized relu units alive
        const double b0 = layer.act == Activation::Relu ? 0.01 : 0.0;
        std::fill(layer.bias.begin(), layer.bias.end(), b0);
    }
}

Mlp make_mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output dims");
    if (acts.size() != dims.size() - 1)
        throw std::invalid_argument("make_mlp: need one activation per layer");
    Mlp net;
    net.layers.resize(dims.size() - 1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        net.layers[l].weight = Matrix(dims[l], dims[l + 1]);
        net.layers[l].bias.assign(dims[l + 1], 0.0);
        net.layers[l].act = acts[l];
    }
    glorot_init(net, rng);
    return net;
}

AdamState::AdamState(const std::vector<std::vector<double>*>& params, AdamConfig cfg) : cfg_(cfg) {
    slots_.resize(params.size());
    for (std::size_t b = 0; b < params.size(); ++b) {
        slots_[b].m.assign(params[b]->size(), 0.0);
        slots_[b].v.assign(params[b]->size(), 0.0);
    }
}

double AdamState::effective_lr() const {
    return cfg_.lr * std::pow(cfg_.decay, static_cast<double>(epoch_));
}

void AdamState::step(const std::vector<std::vector<double>*>& params,
                     const std::vector<const std::vector<double>*>& grads) {
    if (params.size() != slots_.size() || grads.size() != slots_.size())
        throw std::invalid_argument("adam: block count mismatch");
    ++t_;
    const double lr = effective_lr();
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
        std::vector<double>& p = *params[b];
        const std::vector<double>& g = *grads[b];
        Slot& s = slots_[b];
        if (p.size() != s.m.size() || g.size() != s.m.size())
            throw std::invalid_argument("adam: block " + std::to_string(b) + " size changed");
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            if (!std::isfinite(gi))
                throw std::runtime_error("adam: non-finite gradient in block " + std::to_string(b) +
                                         " (training aborted)");
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state) {
    state.step(net.param_blocks(), grads.blocks());
}

}  // namespace driftwatch
