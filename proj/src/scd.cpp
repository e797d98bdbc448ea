#include "driftwatch/scd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace driftwatch {

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("standardizer: empty dataset");
    const std::size_t d = rows.front().size();
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.stdev.assign(d, 1.0);
    for (const auto& r : rows) {
        if (r.size() != d) throw std::invalid_argument("standardizer: ragged rows");
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    }
    const double n = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < d; ++j) s.mean[j] /= n;
    std::vector<double> var(d, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = r[j] - s.mean[j];
            var[j] += c * c;
        }
    for (std::size_t j = 0; j < d; ++j) {
        const double v = var[j] / n;
        s.stdev[j] = v > 1e-12 ? std::sqrt(v) : 1.0;
    }
    return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& x) const {
    if (x.size() != mean.size())
        throw std::invalid_argument("standardizer: dim " + std::to_string(x.size()) + " vs fitted " +
                                    std::to_string(mean.size()));
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / stdev[j];
    return out;
}

std::vector<std::vector<double>> Standardizer::apply_all(const std::vector<std::vector<double>>& rows) const {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(apply(r));
    return out;
}

double recon_error(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("recon_error: length mismatch " + std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()));
    if (x.empty()) throw std::invalid_argument("recon_error: empty vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s / static_cast<double>(x.size());
}

ReconResult reconstruct(const Autoencoder& model, const std::vector<double>& x) {
    ReconResult r;
    r.latent = mlp_forward(model.encoder, x);
    r.reconstruction = mlp_forward(model.decoder, r.latent);
    r.error = recon_error(x, r.reconstruction);
    return r;
}

namespace {

std::vector<std::size_t> geometric_widths(std::size_t from, std::size_t to, std::size_t layers) {
    std::vector<std::size_t> dims;
    dims.push_back(from);
    for (std::size_t l = 1; l < layers; ++l) {
        const double t = static_cast<double>(l) / static_cast<double>(layers);
        double w = static_cast<double>(from) *
                   std::pow(static_cast<double>(to) / static_cast<double>(from), t);
        std::size_t wi = static_cast<std::size_t>(std::llround(w));
        // width-1 relu layers go irrecoverably dead; keep hidden widths >= 2
        wi = std::max({wi, to, std::min<std::size_t>(from, 2)});
        wi = std::min(wi, from);
        if (wi > dims.back()) wi = dims.back();
        dims.push_back(wi);
    }
    dims.push_back(to);
    return dims;
}

}  // namespace

Autoencoder make_autoencoder(std::size_t input_dim, std::size_t latent_dim,
                             std::size_t encoder_layers, Rng& rng) {
    if (input_dim < 2) throw std::invalid_argument("autoencoder: input dim must be >= 2 (shingle 1-d streams first)");
    if (latent_dim < 1 || latent_dim >= input_dim)
        throw std::invalid_argument("autoencoder: latent dim must be in [1, input_dim-1]");
    if (encoder_layers < 1) throw std::invalid_argument("autoencoder: need >= 1 encoder layer");

    std::vector<std::size_t> enc_dims = geometric_widths(input_dim, latent_dim, encoder_layers);
    std::vector<std::size_t> dec_dims(enc_dims.rbegin(), enc_dims.rend());

    std::vector<Activation> enc_acts(encoder_layers, Activation::Relu);
    enc_acts.back() = Activation::Identity;
    std::vector<Activation> dec_acts(encoder_layers, Activation::Relu);
    dec_acts.back() = Activation::Identity;

    Autoencoder ae;
    ae.encoder = make_mlp(enc_dims, enc_acts, rng);
    ae.decoder = make_mlp(dec_dims, dec_acts, rng);
    return ae;
}

namespace {

double mean_recon_loss(const Autoencoder& model, const std::vector<std::vector<double>>& data) {
    double s = 0.0;
    for (const auto& x : data) s += reconstruct(model, x).error;
    return s / static_cast<double>(data.size());
}

}  // namespace

TrainStats train_scd(Autoencoder& model, const std::vector<std::vector<double>>& data,
                     const ScdTrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("train_scd: empty dataset");
    for (const auto& r : data)
        if (r.size() != model.input_dim())
            throw std::invalid_argument("train_scd: row dim " + std::to_string(r.size()) +
                                        " vs model input dim " + std::to_string(model.input_dim()));

    TrainStats stats;
    stats.initial_loss = mean_recon_loss(model, data);
    if (cfg.epochs == 0) {
        stats.final_loss = stats.initial_loss;
        return stats;
    }

    Rng rng(cfg.seed);
    std::vector<std::vector<double>*> enc_params = model.encoder.param_blocks();
    std::vector<std::vector<double>*> dec_params = model.decoder.param_blocks();
    AdamState enc_state(enc_params, cfg.adam);
    AdamState dec_state(dec_params, cfg.adam);

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t batch = std::max<std::size_t>(1, cfg.batch);
    const double inv_dim = 1.0 / static_cast<double>(model.input_dim());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        enc_state.set_epoch(epoch);
        dec_state.set_epoch(epoch);
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            MlpGrads enc_g = zero_grads_like(model.encoder);
            MlpGrads dec_g = zero_grads_like(model.decoder);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                std::vector<double> x = data[order[k]];
                if (cfg.noise_std > 0.0)
                    for (double& v : x) v += rng.gaussian(0.0, cfg.noise_std);
                Tape enc_tape, dec_tape;
                std::vector<double> z = mlp_forward(model.encoder, x, &enc_tape);
                std::vector<double> y = mlp_forward(model.decoder, z, &dec_tape);
                batch_loss += recon_error(x, y);
                std::vector<double> gy(y.size());
                for (std::size_t j = 0; j < y.size(); ++j) gy[j] = 2.0 * (y[j] - x[j]) * inv_dim;
                std::vector<double> gz;
                dec_g.accumulate(mlp_backward(model.decoder, dec_tape, gy, &gz));
                enc_g.accumulate(mlp_backward(model.encoder, enc_tape, gz));
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train_scd: non-finite loss at epoch " + std::to_string(epoch));
            enc_g.scale(scale);
            dec_g.scale(scale);
            enc_state.step(enc_params, enc_g.blocks());
            dec_state.step(dec_params, dec_g.blocks());
        }
        ++stats.epochs_run;
    }
    stats.final_loss = mean_recon_loss(model, data);
    if (!std::isfinite(stats.final_loss)) throw std::runtime_error("train_scd: non-finite final loss");
    return stats;
}

std::vector<double> symmetric_eigenvalues(Matrix a) {
    if (a.rows != a.cols) throw std::invalid_argument("symmetric_eigenvalues: matrix not square");
    const std::size_t n = a.rows;
    if (n == 0) return {};

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.rbegin(), eig.rend());
    return eig;
}

std::size_t choose_latent_dim(const std::vector<std::vector<double>>& rows, double variance_threshold) {
    if (variance_threshold <= 0.0 || variance_threshold > 1.0)
        throw std::invalid_argument("choose_latent_dim: threshold must be in (0, 1]");
    if (rows.size() < 2) throw std::invalid_argument("choose_latent_dim: need >= 2 instances");
    const std::size_t d = rows.front().size();
    if (d == 0) throw std::invalid_argument("choose_latent_dim: empty instances");

    std::vector<double> mean(d, 0.0);
    for (const auto& r : rows) {
        if (r.size() != d) throw std::invalid_argument("choose_latent_dim: ragged rows");
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
    }
    for (double& m : mean) m /= static_cast<double>(rows.size());

    Matrix cov(d, d, 0.0);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < d; ++i) {
            const double ci = r[i] - mean[i];
            for (std::size_t j = i; j < d; ++j) cov(i, j) += ci * (r[j] - mean[j]);
        }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov(i, j) /= static_cast<double>(rows.size());
            cov(j, i) = cov(i, j);
        }

    std::vector<double> eig = symmetric_eigenvalues(cov);
    double total = 0.0;
    for (double e : eig) total += std::max(e, 0.0);
    if (total <= 1e-15) return 1;  // degenerate: all-identical data

    const std::size_t cap = d > 1 ? d - 1 : 1;
    double cum = 0.0;
    for (std::size_t k = 0; k < eig.size(); ++k) {
        cum += std::max(eig[k], 0.0);
        if (cum >= variance_threshold * total - 1e-12) return std::min<std::size_t>(k + 1, cap);
    }
    return cap;
}

}  // namespace driftwatch
