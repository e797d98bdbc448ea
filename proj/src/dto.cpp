#include "driftwatch/dto.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace driftwatch {

double anomaly_score(double recon_err, double uncertainty, double pivot, double lambda,
                     std::uint64_t* clamp_counter) {
    if (recon_err < 0.0) throw std::invalid_argument("anomaly_score: negative reconstruction error");
    if (uncertainty < 0.0) throw std::invalid_argument("anomaly_score: negative uncertainty");
    if (lambda < 0.0) throw std::invalid_argument("anomaly_score: negative lambda");
    double expo = lambda * uncertainty * (pivot - recon_err);
    if (expo > 30.0 || expo < -30.0) {
        expo = expo > 30.0 ? 30.0 : -30.0;
        if (clamp_counter) ++(*clamp_counter);
    }
    return recon_err * std::exp(expo);
}

double update_pivot(double pivot, double recon_err, double ema_beta) {
    if (ema_beta < 0.0 || ema_beta > 1.0) throw std::invalid_argument("update_pivot: beta outside [0,1]");
    return ema_beta * pivot + (1.0 - ema_beta) * recon_err;
}

double window_quantile(const std::vector<double>& window, double q) {
    if (window.empty()) throw std::invalid_argument("window_quantile: empty window (warm-up)");
    if (q <= 0.0 || q >= 1.0) throw std::invalid_argument("window_quantile: q must be in (0,1)");
    std::vector<double> sorted = window;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    std::size_t k = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    k = std::min(std::max<std::size_t>(k, 1), sorted.size());
    return sorted[k - 1];
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty input");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mad(const std::vector<double>& window) {
    const double m = median(std::vector<double>(window));
    std::vector<double> dev(window.size());
    for (std::size_t i = 0; i < window.size(); ++i) dev[i] = std::fabs(window[i] - m);
    return median(std::move(dev));
}

bool admit_candidate(double uncertainty, double score, double mu_t, double mu_a0, double delta) {
    if (delta < 0.0) throw std::invalid_argument("admit_candidate: negative delta");
    return uncertainty > mu_t && score >= mu_a0 - delta && score <= mu_a0 + delta;
}

double regularizer(double mu_a0, const std::vector<double>& candidate_window, double kappa) {
    if (kappa < 0.0) throw std::invalid_argument("regularizer: negative kappa");
    if (candidate_window.empty()) return 0.0;
    return kappa * (mu_a0 - median(std::vector<double>(candidate_window)));
}

ThresholdState::ThresholdState(DtoParams params, double pivot_init, double mu_t,
                               double bootstrap_threshold)
    : params_(params), pivot_(pivot_init), mu_t_(mu_t), bootstrap_(bootstrap_threshold) {
    if (params_.tau <= 0.0 || params_.tau >= 1.0) throw std::invalid_argument("dto: tau outside (0,1)");
    if (params_.kappa < 0.0) throw std::invalid_argument("dto: negative kappa");
    if (params_.lambda < 0.0) throw std::invalid_argument("dto: negative lambda");
    if (params_.window_capacity == 0) throw std::invalid_argument("dto: zero window capacity");
    if (params_.warmup_min == 0 || params_.warmup_min > params_.window_capacity)
        throw std::invalid_argument("dto: warmup_min outside [1, window_capacity]");
}

double ThresholdState::mu_a0() const { return has_mu_a0_ ? mu_a0_ : bootstrap_; }

double ThresholdState::current_threshold() const {
    if (in_warmup() || !has_mu_a0_) return bootstrap_;
    return mu_a0_ + mu_ar_;
}

void ThresholdState::recompute() {
    if (w_n_.empty() || arrivals_.empty()) return;
    delta_ = mad(std::vector<double>(w_n_.begin(), w_n_.end()));

    // The quantile is taken over the last window of arrival scores, which
    // normal instances dominate. Restricting it to accepted scores would
    // ratchet: stored normals are bounded by historical thresholds, so
    // estimation noise could lower the threshold but never raise it back.
    mu_a0_ = window_quantile(std::vector<double>(arrivals_.begin(), arrivals_.end()), params_.tau);
    has_mu_a0_ = true;

    mu_ar_ = regularizer(mu_a0_, std::vector<double>(w_c_.begin(), w_c_.end()), params_.kappa);
}

void ThresholdState::observe(const Verdict& v) {
    // An overflowed score still carries a valid decision, but must not enter
    // the window statistics or the pivot EMA.
    if (!std::isfinite(v.score) || !std::isfinite(v.recon_error)) return;

    // Candidate admission is judged against the calibration that produced
    // the verdict's decision.
    const double ref_mu_a0 = mu_a0();
    const double ref_delta = w_n_.empty() ? 0.0 : delta_;
    if (admit_candidate(v.uncertainty, v.score, mu_t_, ref_mu_a0, ref_delta)) {
        w_c_.push_back(v.score);
        if (w_c_.size() > params_.window_capacity) w_c_.pop_front();
    }

    if (!v.is_anomaly) {
        w_n_.push_back(v.score);
        if (w_n_.size() > params_.window_capacity) w_n_.pop_front();
    }
    arrivals_.push_back(v.score);
    if (arrivals_.size() > params_.window_capacity) arrivals_.pop_front();

    pivot_ = update_pivot(pivot_, v.recon_error, params_.ema_beta);
    recompute();
}

void ThresholdState::reinitialize_on_drift() {
    w_n_.clear();
    w_c_.clear();
    arrivals_.clear();
    has_mu_a0_ = false;
    mu_a0_ = 0.0;
    mu_ar_ = 0.0;
    delta_ = 0.0;
    // pivot_ deliberately retained
}

void ThresholdState::rebind_model_stats(double mu_t, double bootstrap_threshold) {
    mu_t_ = mu_t;
    bootstrap_ = bootstrap_threshold;
}

std::string ThresholdState::to_json() const {
    nlohmann::ordered_json j;
    j["tau"] = params_.tau;
    j["kappa"] = params_.kappa;
    j["lambda"] = params_.lambda;
    j["ema_beta"] = params_.ema_beta;
    j["window_capacity"] = params_.window_capacity;
    j["warmup_min"] = params_.warmup_min;
    j["pivot"] = pivot_;
    j["mu_t"] = mu_t_;
    j["bootstrap"] = bootstrap_;
    j["w_n"] = std::vector<double>(w_n_.begin(), w_n_.end());
    j["w_c"] = std::vector<double>(w_c_.begin(), w_c_.end());
    j["arrivals"] = std::vector<double>(arrivals_.begin(), arrivals_.end());
    j["mu_a0"] = mu_a0_;
    j["has_mu_a0"] = has_mu_a0_;
    j["mu_ar"] = mu_ar_;
    j["delta"] = delta_;
    j["score_clamps"] = score_clamps_;
    return j.dump();
}

ThresholdState ThresholdState::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    DtoParams p;
    p.tau = j.at("tau").get<double>();
    p.kappa = j.at("kappa").get<double>();
    p.lambda = j.at("lambda").get<double>();
    p.ema_beta = j.at("ema_beta").get<double>();
    p.window_capacity = j.at("window_capacity").get<std::size_t>();
    p.warmup_min = j.at("warmup_min").get<std::size_t>();
    ThresholdState s(p, j.at("pivot").get<double>(), j.at("mu_t").get<double>(),
                     j.at("bootstrap").get<double>());
    for (double v : j.at("w_n")) s.w_n_.push_back(v);
    for (double v : j.at("w_c")) s.w_c_.push_back(v);
    for (double v : j.at("arrivals")) s.arrivals_.push_back(v);
    s.mu_a0_ = j.at("mu_a0").get<double>();
    s.has_mu_a0_ = j.at("has_mu_a0").get<bool>();
    s.mu_ar_ = j.at("mu_ar").get<double>();
    s.delta_ = j.at("delta").get<double>();
    s.score_clamps_ = j.at("score_clamps").get<std::uint64_t>();
    return s;
}

}  // namespace driftwatch
