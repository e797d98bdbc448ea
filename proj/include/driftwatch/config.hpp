#pragma once

#include <cstdint>
#include <string>

#include "driftwatch/dsd.hpp"

namespace driftwatch {

// Every hyperparameter of the engine. Defaults follow the reference
// operating point; loaders validate each field against its documented range
// and reject unknown keys.
struct Config {
    std::uint64_t seed = 42;

    // training split and schedule
    double h_r = 0.2;                  // historical data ratio, (0, 1]
    std::size_t epochs = 2000;         // initial training epochs
    std::size_t update_epochs = 200;   // offline fine-tune epochs
    double update_lr_decay = 0.995;    // per-epoch decay during offline fine-tunes
    std::size_t batch = 64;
    double lr = 1e-2;
    double lr_decay = 0.96;            // per-epoch exponential factor
    double train_noise_std = 0.0;      // optional Gaussian input noise, >= 0

    // architecture
    double variance_threshold = 0.7;   // PCA explained-variance target, (0, 1]
    std::size_t encoder_layers = 3;    // per side; total depth 2x this, [1, 5]
    std::size_t iec_hidden_width = 32;
    std::size_t iec_hidden_layers = 2;
    std::size_t hyper_embed_dim = 16;
    std::size_t hyper_shared_width = 32;
    std::string shift_targets = "all";  // all | encoder | decoder
    bool dsd_update_static = false;     // also update the static detector during DSD training
    double dsd_static_lr_scale = 0.1;

    // controller thresholds
    double mu_p_proportion = 0.15;  // [0.05, 0.5]
    double mu_e = 0.03;             // [0.005, 0.4]
    double gamma = 2.0;             // >= 0
    double iec_kl_weight = 0.5;     // evidence-regularizer strength, >= 0
    std::size_t label_passes = 2;   // pseudo-label bootstrap passes, >= 1

    // threshold optimizer
    double lambda = 0.6;   // >= 0
    double tau = 0.95;     // (0, 1)
    double kappa = 0.8;    // >= 0
    double ema_beta = 0.99;
    std::size_t window_capacity = 64;
    std::size_t warmup_min = 16;

    // offline updating
    double mu_o_frac = 0.3;  // [0.1, 1] of window size
    std::size_t t_max = 10000;
    bool full_retrain_update = false;

    void validate() const;  // throws with the offending key and range
};

// Flat key=value file, '#' comments. Unknown keys are rejected.
Config load_config_file(const std::string& path, Config base = Config{});

// Apply one "key=value" override (CLI --set); validates the key exists.
void apply_config_override(Config& cfg, const std::string& assignment);

// Fully resolved config in the same key=value format, for --print-config.
std::string print_config(const Config& cfg);

}  // namespace driftwatch
