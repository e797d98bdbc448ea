#pragma once

#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "driftwatch/config.hpp"
#include "driftwatch/dto.hpp"
#include "driftwatch/iec.hpp"
#include "driftwatch/ingest.hpp"

namespace driftwatch {

// Everything the scorer needs, immutable once built. Offline updates build
// a fresh bundle and swap the shared pointer between instances.
struct ModelBundle {
    Standardizer standardizer;
    Autoencoder scd;
    EvidentialClassifier iec;
    Hypernetwork dsd;
    double mu_p = 0.0;
    double mu_e = 0.0;
    double mu_t = 0.0;
    double pivot_init = 0.0;           // max training reconstruction error
    double bootstrap_threshold = 0.0;  // max training anomaly score
    std::uint64_t version = 1;

    std::size_t input_dim() const { return scd.input_dim(); }
};

// Two-stage training: SCD on the historical slice, error-quantile
// pseudo-labels bootstrap the IEC, then IEC fine-tuning and DSD training
// interleave per minibatch. Consumes the first floor(h_r * n) rows.
ModelBundle train(const std::vector<std::vector<double>>& stream_data, const Config& cfg);

std::string bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const std::string& text);
void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

// Accumulated high-uncertainty mass over the last window_capacity arrivals
// plus the age trigger.
class UpdateMonitor {
public:
    UpdateMonitor() = default;
    UpdateMonitor(std::size_t window_capacity, double mu_e, double mu_o_frac, std::size_t t_max);

    void record(double uncertainty);
    double accumulated_mass() const;
    bool update_due() const;
    void reset_after_update();

    std::uint64_t instances_since_update() const { return since_update_; }
    double mu_o_abs() const { return mu_o_abs_; }
    std::vector<double> window() const { return {window_.begin(), window_.end()}; }

    std::string to_json() const;
    static UpdateMonitor from_json(const std::string& text);

private:
    std::deque<double> window_;
    std::size_t capacity_ = 64;
    double mu_e_ = 0.03;
    double mu_o_abs_ = 19.2;
    std::size_t t_max_ = 10000;
    std::uint64_t since_update_ = 0;
};

// Stateless check mirroring the monitor's rule, usable against an explicit
// uncertainty window.
bool offline_update_check(const std::vector<double>& window_uncertainties, double mu_e,
                          double mu_o_abs, std::uint64_t instances_since_update, std::size_t t_max);

// One inference step against an explicit bundle and threshold state:
// route by concept uncertainty, score, decide, then feed the state.
Verdict score_instance(const ModelBundle& bundle, ThresholdState& state,
                       const std::vector<double>& x, std::size_t index);

// Fine-tunes a deep copy of the bundle on the retained recent window and
// re-derives mu_p / mu_t / pivot / bootstrap. Throws on failure; the caller
// keeps the old bundle in that case.
ModelBundle run_offline_update(const ModelBundle& bundle,
                               const std::vector<std::vector<double>>& recent_window_data,
                               const Config& cfg);

struct RunnerOptions {
    bool adaptation_enabled = true;   // false: frozen ablation, no updates
    bool static_only = false;         // ablation: raw static scoring only
};

// Single stream consumer: owns the threshold state, the update monitor and
// the raw-instance buffer behind W_N. Synchronous snapshot-swap updates.
class StreamRunner {
public:
    StreamRunner(std::shared_ptr<const ModelBundle> bundle, const Config& cfg,
                 RunnerOptions options = {});

    Verdict process(const std::vector<double>& x);

    // Complete consumer state: bundle, threshold state, monitor, raw buffer
    // and stream position. Restoring and continuing reproduces an unsplit
    // run byte for byte.
    std::string checkpoint_json() const;
    static StreamRunner restore(const std::string& checkpoint, const Config& cfg,
                                RunnerOptions options = {});

    const ModelBundle& bundle() const { return *bundle_; }
    std::shared_ptr<const ModelBundle> bundle_ptr() const { return bundle_; }
    const ThresholdState& threshold_state() const { return state_; }
    ThresholdState& threshold_state() { return state_; }
    const UpdateMonitor& monitor() const { return monitor_; }
    std::uint64_t updates_applied() const { return updates_applied_; }
    std::uint64_t updates_failed() const { return updates_failed_; }
    const std::string& last_update_error() const { return last_update_error_; }

    // Dispersion of sampled dynamic shifts (mean squared distance from the
    // running mean). Near-zero with enough samples means the hypernetwork
    // degenerated to an input-independent shift.
    double shift_dispersion() const;
    std::uint64_t shift_samples() const { return shift_count_; }
    bool shifts_look_constant() const;

private:
    void try_offline_update();
    void sample_shift(const ModelBundle& bundle, const std::vector<double>& standardized);

    std::shared_ptr<const ModelBundle> bundle_;
    Config cfg_;
    RunnerOptions options_;
    ThresholdState state_;
    UpdateMonitor monitor_;
    std::deque<std::vector<double>> normal_buffer_;  // raw instances behind W_N
    std::size_t next_index_ = 0;
    std::uint64_t updates_applied_ = 0;
    std::uint64_t updates_failed_ = 0;
    std::string last_update_error_;
    std::uint64_t dynamic_seen_ = 0;
    std::uint64_t shift_count_ = 0;  // Welford over sampled flattened shifts
    std::vector<double> shift_mean_;
    double shift_m2_ = 0.0;
};

// One NDJSON record per verdict; field order and float formatting are
// stable so seeded replays are byte-identical.
std::string verdict_to_ndjson(const Verdict& v);
Verdict verdict_from_ndjson(const std::string& line);

}  // namespace driftwatch
