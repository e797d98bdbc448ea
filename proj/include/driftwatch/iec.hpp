#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "driftwatch/nn.hpp"

namespace driftwatch {

// Digamma, accurate to ~1e-12 for x > 0.
double digamma(double x);

// Trigamma (first derivative of digamma), x > 0.
double trigamma(double x);

// Two-class Dirichlet opinion for one instance.
struct DirichletOpinion {
    std::vector<double> alpha;
    double strength = 0.0;          // sum of alpha
    std::vector<double> prob;       // alpha_c / strength
    double uncertainty = 0.0;       // mutual-information dispersion, clipped at 0
};

std::vector<double> predictive_prob(const std::vector<double>& alpha);

// Mutual information of the Dirichlet opinion:
//   sum_c p_c (digamma(alpha_c+1) - digamma(S+1)) + entropy(p).
// Clipped to >= 0 (numeric slack 1e-12).
double concept_uncertainty(const std::vector<double>& alpha);

// Focal evidential loss (1 - p_label)^gamma * (log S - log alpha_label).
double focal_edl_loss(const std::vector<double>& alpha, std::size_t label, double gamma);

// d(loss)/d(alpha_k), analytic; feeds the evidence head's backward pass.
std::vector<double> focal_edl_loss_alpha_grad(const std::vector<double>& alpha, std::size_t label,
                                              double gamma);

// KL(Dir(alpha-tilde) || Dir(1)) with the label component pinned to 1 —
// the evidence regularizer of the standard evidential training recipe.
// Suppresses wrong-class evidence; without it, converged evidence grows
// without bound and concept uncertainty collapses to zero everywhere.
double edl_kl_regularizer(const std::vector<double>& alpha, std::size_t label);
std::vector<double> edl_kl_regularizer_alpha_grad(const std::vector<double>& alpha,
                                                  std::size_t label);

enum class PseudoLabel { Positive, Negative, Unknown };

// Unknown when uncertainty exceeds mu_e; otherwise Positive iff the
// reconstruction error strictly exceeds mu_p (ties go Negative).
PseudoLabel pseudo_label(double recon_err, double uncertainty, double mu_p, double mu_e);

// (1 - proportion)-quantile of the errors, so a `proportion` fraction of
// training samples labels Positive.
double resolve_mu_p(std::vector<double> errors, double proportion);

struct ClampCounter {
    std::atomic<std::uint64_t> count{0};
};

// Lightweight evidential classifier over raw (standardized) instances.
// The net's exponential output head produces evidence e >= 0; alpha = e + 1.
struct EvidentialClassifier {
    Mlp net;
    std::shared_ptr<ClampCounter> evidence_clamps = std::make_shared<ClampCounter>();

    std::size_t input_dim() const { return net.input_dim(); }
};

EvidentialClassifier make_classifier(std::size_t input_dim, std::size_t hidden_width,
                                     std::size_t hidden_layers, Rng& rng);

DirichletOpinion evidential_forward(const EvidentialClassifier& clf, const std::vector<double>& x);

struct IecTrainConfig {
    std::size_t epochs = 2000;
    std::size_t batch = 64;
    AdamConfig adam;
    std::uint64_t seed = 42;
    double gamma = 2.0;
    double kl_weight = 0.5;          // evidence-regularizer strength
    std::size_t kl_anneal_epochs = 10;  // KL coefficient ramps 0 -> kl_weight
};

using LabeledInstance = std::pair<std::vector<double>, int>;  // label in {0, 1}

// One Adam step over a batch; returns the mean focal loss (excluding the
// KL term, which `kl_coef` scales into the gradients).
double iec_train_step(EvidentialClassifier& clf, const std::vector<const LabeledInstance*>& batch,
                      double gamma, double kl_coef, AdamState& state);

// Trains on pseudo-labeled instances (Unknowns must already be dropped).
// Throws if only one class is present, pointing at mu_p.
TrainStats train_iec(EvidentialClassifier& clf, const std::vector<LabeledInstance>& labeled,
                     const IecTrainConfig& cfg);

}  // namespace driftwatch
