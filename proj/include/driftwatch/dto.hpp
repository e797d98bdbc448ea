#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

namespace driftwatch {

struct DtoParams {
    double tau = 0.95;       // normal-score quantile level backing mu_a0
    double kappa = 0.8;      // regularization strength
    double lambda = 0.6;     // uncertainty calibration weight
    double ema_beta = 0.99;  // pivot EMA retention
    std::size_t window_capacity = 64;
    std::size_t warmup_min = 16;
};

enum class DetectorKind { Static, Dynamic };

struct Verdict {
    std::size_t index = 0;
    double recon_error = 0.0;
    double uncertainty = 0.0;
    double score = 0.0;
    double threshold = 0.0;
    bool is_anomaly = false;
    DetectorKind detector = DetectorKind::Static;
    std::uint64_t model_version = 0;
};

// A = R_e * exp(lambda * U * (pivot - R_e)); the exponent is clamped to
// +-30 (counted) as an overflow guard.
double anomaly_score(double recon_err, double uncertainty, double pivot, double lambda,
                     std::uint64_t* clamp_counter = nullptr);

double update_pivot(double pivot, double recon_err, double ema_beta);

// Smallest score s in the window with empirical CDF F(s) >= q. Throws on an
// empty window (warm-up is the caller's business).
double window_quantile(const std::vector<double>& window, double q);

double median(std::vector<double> values);

// Median absolute deviation around the median.
double mad(const std::vector<double>& window);

// Candidate admission: uncertain sample whose score lands inside the
// closed band [mu_a0 - delta, mu_a0 + delta].
bool admit_candidate(double uncertainty, double score, double mu_t, double mu_a0, double delta);

// kappa * (mu_a0 - median(W_C)); zero when the candidate window is empty.
double regularizer(double mu_a0, const std::vector<double>& candidate_window, double kappa);

// Sliding-window threshold state for one stream consumer. Normal-classified
// scores feed W_N (candidate band and MAD); the quantile behind mu_a0 is
// taken over the last window of arrival scores. Normals dominate arrivals,
// and a quantile over accepted-only scores would ratchet: stored normals are
// bounded by historical thresholds, so estimation noise can only move the
// threshold down, never back up.
class ThresholdState {
public:
    ThresholdState() = default;
    ThresholdState(DtoParams params, double pivot_init, double mu_t, double bootstrap_threshold);

    double current_threshold() const;
    bool in_warmup() const { return w_n_.size() < params_.warmup_min; }

    // Full update for one emitted verdict: candidate admission, window
    // pushes with FIFO eviction, pivot EMA, and threshold recompute.
    void observe(const Verdict& v);

    // Drift reinitialization: windows emptied, warm-up bootstrap threshold
    // re-engaged, pivot retained.
    void reinitialize_on_drift();

    // Rebind calibration constants after an offline model update (scores
    // change scale under the new bundle). Pivot is deliberately retained.
    void rebind_model_stats(double mu_t, double bootstrap_threshold);

    double pivot() const { return pivot_; }
    double mu_t() const { return mu_t_; }
    double bootstrap_threshold() const { return bootstrap_; }
    double mu_a0() const;
    double mu_ar() const { return mu_ar_; }
    double delta() const { return delta_; }
    const DtoParams& params() const { return params_; }
    std::size_t normal_window_size() const { return w_n_.size(); }
    std::size_t candidate_window_size() const { return w_c_.size(); }
    std::vector<double> normal_window() const { return {w_n_.begin(), w_n_.end()}; }
    std::vector<double> candidate_window() const { return {w_c_.begin(), w_c_.end()}; }
    std::vector<double> arrival_window() const { return {arrivals_.begin(), arrivals_.end()}; }
    std::uint64_t score_clamp_events() const { return score_clamps_; }

    std::uint64_t* clamp_counter() { return &score_clamps_; }

    std::string to_json() const;
    static ThresholdState from_json(const std::string& text);

private:
    void recompute();

    DtoParams params_;
    double pivot_ = 0.0;
    double mu_t_ = 0.0;
    double bootstrap_ = 0.0;
    std::deque<double> w_n_;
    std::deque<double> w_c_;
    std::deque<double> arrivals_;  // last window of all scores, flagged or not
    double mu_a0_ = 0.0;
    bool has_mu_a0_ = false;
    double mu_ar_ = 0.0;
    double delta_ = 0.0;
    std::uint64_t score_clamps_ = 0;
};

}  // namespace driftwatch
