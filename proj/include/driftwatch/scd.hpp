#pragma once

#include <vector>

#include "driftwatch/nn.hpp"

namespace driftwatch {

// Per-feature standardization fitted on historical data and frozen for the
// rest of the run. Near-constant features fall back to unit scale.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stdev;

    static Standardizer fit(const std::vector<std::vector<double>>& rows);
    std::vector<double> apply(const std::vector<double>& x) const;
    std::vector<std::vector<double>> apply_all(const std::vector<std::vector<double>>& rows) const;
    std::size_t dim() const { return mean.size(); }
};

struct ReconResult {
    std::vector<double> latent;
    std::vector<double> reconstruction;
    double error = 0.0;
};

struct Autoencoder {
    Mlp encoder;
    Mlp decoder;

    std::size_t input_dim() const { return encoder.input_dim(); }
    std::size_t latent_dim() const { return encoder.output_dim(); }
};

// Mean squared componentwise deviation.
double recon_error(const std::vector<double>& x, const std::vector<double>& y);

ReconResult reconstruct(const Autoencoder& model, const std::vector<double>& x);

// Symmetric encoder/decoder with geometrically interpolated widths from
// input_dim down to latent_dim; relu hidden layers, identity at the latent
// and the output.
Autoencoder make_autoencoder(std::size_t input_dim, std::size_t latent_dim,
                             std::size_t encoder_layers, Rng& rng);

struct ScdTrainConfig {
    std::size_t epochs = 2000;
    std::size_t batch = 64;
    AdamConfig adam;
    std::uint64_t seed = 42;
    double noise_std = 0.0;  // optional Gaussian input noise during training
};

// Minibatch Adam on the reconstruction loss. Throws on non-finite loss.
TrainStats train_scd(Autoencoder& model, const std::vector<std::vector<double>>& data,
                     const ScdTrainConfig& cfg);

// Eigenvalues of a symmetric matrix via cyclic Jacobi sweeps, descending.
std::vector<double> symmetric_eigenvalues(Matrix a);

// Smallest k whose top-k covariance eigenvalue mass reaches the threshold
// fraction; clamped to [1, d-1] for d > 1. All-identical data yields 1.
std::size_t choose_latent_dim(const std::vector<std::vector<double>>& rows, double variance_threshold);

}  // namespace driftwatch
