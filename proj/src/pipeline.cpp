#include "driftwatch/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "driftwatch/model_io.hpp"

namespace driftwatch {

namespace {

struct LabelingResult {
    std::vector<LabeledInstance> labeled;
    std::size_t unknown = 0;
};

LabelingResult pseudo_label_pass(const std::vector<std::vector<double>>& xs,
                                 const std::vector<double>& errors,
                                 const EvidentialClassifier* iec, double mu_p, double mu_e) {
    LabelingResult out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        // Bootstrap pass runs before any IEC exists: uncertainty counts as 0.
        const double u = iec ? evidential_forward(*iec, xs[i]).uncertainty : 0.0;
        const PseudoLabel tag = pseudo_label(errors[i], u, mu_p, mu_e);
        if (tag == PseudoLabel::Unknown) {
            ++out.unknown;
            continue;
        }
        out.labeled.emplace_back(xs[i], tag == PseudoLabel::Positive ? 1 : 0);
    }
    return out;
}

void check_both_classes(const std::vector<LabeledInstance>& labeled) {
    bool pos = false, neg = false;
    for (const auto& [x, l] : labeled) (l == 1 ? pos : neg) = true;
    if (!pos || !neg)
        throw std::runtime_error(
            "train: pseudo-labels are single-class; adjust mu_p_proportion so both classes appear");
}

struct CalibrationStats {
    double mu_t = 0.0;
    double pivot_init = 0.0;
    double bootstrap = 0.0;
};

CalibrationStats calibrate(const ModelBundle& bundle, const std::vector<std::vector<double>>& xs,
                           double lambda) {
    CalibrationStats s;
    std::vector<double> errors(xs.size());
    std::vector<double> uncertainties(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        errors[i] = reconstruct(bundle.scd, xs[i]).error;
        uncertainties[i] = evidential_forward(bundle.iec, xs[i]).uncertainty;
        s.mu_t = std::max(s.mu_t, uncertainties[i]);
        s.pivot_init = std::max(s.pivot_init, errors[i]);
    }
    for (std::size_t i = 0; i < xs.size(); ++i)
        s.bootstrap = std::max(s.bootstrap, anomaly_score(errors[i], uncertainties[i], s.pivot_init, lambda));
    if (!std::isfinite(s.mu_t) || !std::isfinite(s.pivot_init) || !std::isfinite(s.bootstrap))
        throw std::runtime_error("train: non-finite calibration statistics");
    return s;
}

// Second training stage: controller fine-tuning and hypernetwork updates
// interleaved per minibatch over the historical slice. `pass1_labels` is the
// error-only bootstrap labeling, used verbatim when live re-labeling leaves
// only one class (an undertrained controller marks the whole fringe Unknown).
void stage2_interleaved(ModelBundle& bundle, const std::vector<std::vector<double>>& xs,
                        const std::vector<double>& errors,
                        const std::vector<LabeledInstance>& pass1_labels, const Config& cfg,
                        std::size_t epochs, Rng rng) {
    DsdTrainConfig dsd_cfg;
    dsd_cfg.adam.lr = cfg.lr;
    dsd_cfg.adam.decay = cfg.lr_decay;
    dsd_cfg.update_static = cfg.dsd_update_static;
    dsd_cfg.static_lr_scale = cfg.dsd_static_lr_scale;
    DsdStepContext dsd_ctx = make_dsd_step_context(bundle.scd, bundle.dsd, dsd_cfg);

    AdamConfig iec_adam;
    iec_adam.lr = cfg.lr;
    iec_adam.decay = cfg.lr_decay;
    AdamState iec_state(bundle.iec.net.param_blocks(), iec_adam);

    // Re-label with live uncertainty; Unknowns sit outside IEC batches but
    // still feed the DSD loss.
    std::vector<LabeledInstance> store;
    store.reserve(xs.size());
    std::vector<long> store_of(xs.size(), -1);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double u = evidential_forward(bundle.iec, xs[i]).uncertainty;
        const PseudoLabel tag = pseudo_label(errors[i], u, bundle.mu_p, bundle.mu_e);
        if (tag == PseudoLabel::Unknown) continue;
        store_of[i] = static_cast<long>(store.size());
        store.emplace_back(xs[i], tag == PseudoLabel::Positive ? 1 : 0);
    }
    bool pos = false, neg = false;
    for (const auto& [x, l] : store) (l == 1 ? pos : neg) = true;
    if (!pos || !neg) {
        check_both_classes(pass1_labels);
        store = pass1_labels;
        std::fill(store_of.begin(), store_of.end(), -1);
        for (std::size_t i = 0; i < xs.size() && i < store.size(); ++i)
            store_of[i] = static_cast<long>(i);
    }

    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch = std::max<std::size_t>(1, cfg.batch);

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        iec_state.set_epoch(epoch);
        dsd_ctx.hyper_state.set_epoch(epoch);
        dsd_ctx.enc_state.set_epoch(epoch);
        dsd_ctx.dec_state.set_epoch(epoch);
        rng.shuffle(order);
        const double anneal = std::min(1.0, static_cast<double>(epoch + 1) / 10.0);
        const double kl_coef = cfg.iec_kl_weight * anneal;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<const LabeledInstance*> iec_batch;
            std::vector<const std::vector<double>*> dsd_batch;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                if (store_of[i] >= 0) iec_batch.push_back(&store[static_cast<std::size_t>(store_of[i])]);
                dsd_batch.push_back(&xs[i]);
            }
            if (!iec_batch.empty()) iec_train_step(bundle.iec, iec_batch, cfg.gamma, kl_coef, iec_state);
            dsd_train_step(bundle.scd, bundle.dsd, dsd_batch, dsd_cfg, dsd_ctx);
        }
    }
}

ModelBundle train_on_slice(const std::vector<std::vector<double>>& historical, const Config& cfg,
                           std::size_t epochs, std::uint64_t version) {
    if (historical.empty()) throw std::invalid_argument("train: empty historical slice");
    const std::size_t d = historical.front().size();
    if (d < 2) throw std::invalid_argument("train: 1-dimensional streams must be shingled first");

    Rng rng(cfg.seed);
    ModelBundle bundle;
    bundle.version = version;
    bundle.mu_e = cfg.mu_e;
    bundle.standardizer = Standardizer::fit(historical);
    const std::vector<std::vector<double>> xs = bundle.standardizer.apply_all(historical);

    std::size_t latent = 1;
    if (xs.size() >= 2) latent = choose_latent_dim(xs, cfg.variance_threshold);
    Rng scd_rng = rng.child(1);
    bundle.scd = make_autoencoder(d, latent, cfg.encoder_layers, scd_rng);

    ScdTrainConfig scd_cfg;
    scd_cfg.epochs = epochs;
    scd_cfg.batch = cfg.batch;
    scd_cfg.adam.lr = cfg.lr;
    scd_cfg.adam.decay = cfg.lr_decay;
    scd_cfg.seed = rng.child(2).seed();
    scd_cfg.noise_std = cfg.train_noise_std;
    train_scd(bundle.scd, xs, scd_cfg);

    std::vector<double> errors(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) errors[i] = reconstruct(bundle.scd, xs[i]).error;
    bundle.mu_p = resolve_mu_p(errors, cfg.mu_p_proportion);

    // Pass 1: reconstruction error alone labels the IEC's first training set.
    LabelingResult pass1 = pseudo_label_pass(xs, errors, nullptr, bundle.mu_p, cfg.mu_e);
    check_both_classes(pass1.labeled);
    Rng iec_rng = rng.child(3);
    bundle.iec = make_classifier(d, cfg.iec_hidden_width, cfg.iec_hidden_layers, iec_rng);
    IecTrainConfig iec_cfg;
    iec_cfg.epochs = epochs;
    iec_cfg.batch = cfg.batch;
    iec_cfg.adam.lr = cfg.lr;
    iec_cfg.adam.decay = cfg.lr_decay;
    iec_cfg.seed = rng.child(4).seed();
    iec_cfg.gamma = cfg.gamma;
    iec_cfg.kl_weight = cfg.iec_kl_weight;
    train_iec(bundle.iec, pass1.labeled, iec_cfg);

    Rng dsd_rng = rng.child(5);
    bundle.dsd = make_hypernetwork(bundle.scd, shift_targets_from_name(cfg.shift_targets),
                                   cfg.hyper_embed_dim, cfg.hyper_shared_width, dsd_rng);

    // Passes 2..label_passes re-label with live uncertainty and interleave
    // IEC/DSD updates; a single-pass config still trains the DSD.
    const std::size_t stage2_rounds = std::max<std::size_t>(1, cfg.label_passes) - 1;
    if (stage2_rounds == 0) {
        DsdTrainConfig dsd_cfg;
        dsd_cfg.epochs = epochs;
        dsd_cfg.batch = cfg.batch;
        dsd_cfg.adam.lr = cfg.lr;
        dsd_cfg.adam.decay = cfg.lr_decay;
        dsd_cfg.seed = rng.child(6).seed();
        dsd_cfg.update_static = cfg.dsd_update_static;
        dsd_cfg.static_lr_scale = cfg.dsd_static_lr_scale;
        train_dsd(bundle.scd, bundle.dsd, xs, dsd_cfg);
    } else {
        for (std::size_t round = 0; round < stage2_rounds; ++round) {
            if (cfg.dsd_update_static)
                for (std::size_t i = 0; i < xs.size(); ++i)
                    errors[i] = reconstruct(bundle.scd, xs[i]).error;
            stage2_interleaved(bundle, xs, errors, pass1.labeled, cfg, epochs, rng.child(6 + round));
        }
    }

    if (cfg.dsd_update_static)
        for (std::size_t i = 0; i < xs.size(); ++i) errors[i] = reconstruct(bundle.scd, xs[i]).error;

    CalibrationStats stats = calibrate(bundle, xs, cfg.lambda);
    bundle.mu_t = stats.mu_t;
    bundle.pivot_init = stats.pivot_init;
    bundle.bootstrap_threshold = stats.bootstrap;
    return bundle;
}

}  // namespace

ModelBundle train(const std::vector<std::vector<double>>& stream_data, const Config& cfg) {
    cfg.validate();
    if (stream_data.empty()) throw std::invalid_argument("train: empty dataset");
    const std::size_t n_hist =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.h_r * stream_data.size())));
    std::vector<std::vector<double>> historical(stream_data.begin(),
                                                stream_data.begin() + static_cast<long>(n_hist));
    return train_on_slice(historical, cfg, cfg.epochs, 1);
}

std::string bundle_to_json(const ModelBundle& bundle) {
    nlohmann::ordered_json j;
    j["format"] = "driftwatch-bundle";
    j["format_version"] = kModelFormatVersion;
    j["version"] = bundle.version;
    j["standardizer"] = {{"mean", bundle.standardizer.mean}, {"stdev", bundle.standardizer.stdev}};
    j["thresholds"] = {{"mu_p", bundle.mu_p},
                       {"mu_e", bundle.mu_e},
                       {"mu_t", bundle.mu_t},
                       {"pivot_init", bundle.pivot_init},
                       {"bootstrap_threshold", bundle.bootstrap_threshold}};
    j["scd"] = autoencoder_to_json(bundle.scd);
    j["iec"] = classifier_to_json(bundle.iec);
    j["dsd"] = hypernetwork_to_json(bundle.dsd);
    return j.dump(2);
}

ModelBundle bundle_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "driftwatch-bundle")
        throw std::runtime_error("bundle: unrecognized format tag");
    if (j.at("format_version").get<int>() != kModelFormatVersion)
        throw std::runtime_error("bundle: unsupported format version");
    ModelBundle b;
    b.version = j.at("version").get<std::uint64_t>();
    b.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    b.standardizer.stdev = j.at("standardizer").at("stdev").get<std::vector<double>>();
    const auto& th = j.at("thresholds");
    b.mu_p = th.at("mu_p").get<double>();
    b.mu_e = th.at("mu_e").get<double>();
    b.mu_t = th.at("mu_t").get<double>();
    b.pivot_init = th.at("pivot_init").get<double>();
    b.bootstrap_threshold = th.at("bootstrap_threshold").get<double>();
    b.scd = autoencoder_from_json(j.at("scd"));
    b.iec = classifier_from_json(j.at("iec"));
    b.dsd = hypernetwork_from_json(j.at("dsd"), b.scd);
    if (b.standardizer.dim() != b.scd.input_dim())
        throw std::runtime_error("bundle: standardizer dim does not match detector input dim");
    return b;
}

void save_bundle(const std::string& path, const ModelBundle& bundle) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("bundle: cannot write " + path);
    out << bundle_to_json(bundle);
}

ModelBundle load_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("bundle: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bundle_from_json(text);
}

UpdateMonitor::UpdateMonitor(std::size_t window_capacity, double mu_e, double mu_o_frac,
                             std::size_t t_max)
    : capacity_(window_capacity),
      mu_e_(mu_e),
      mu_o_abs_(mu_o_frac * static_cast<double>(window_capacity)),
      t_max_(t_max) {}

void UpdateMonitor::record(double uncertainty) {
    window_.push_back(uncertainty);
    if (window_.size() > capacity_) window_.pop_front();
    ++since_update_;
}

double UpdateMonitor::accumulated_mass() const {
    double mass = 0.0;
    for (double u : window_)
        if (u > mu_e_) mass += u;
    return mass;
}

bool UpdateMonitor::update_due() const {
    return accumulated_mass() > mu_o_abs_ || since_update_ > t_max_;
}

void UpdateMonitor::reset_after_update() {
    window_.clear();
    since_update_ = 0;
}

std::string UpdateMonitor::to_json() const {
    nlohmann::ordered_json j;
    j["window"] = std::vector<double>(window_.begin(), window_.end());
    j["capacity"] = capacity_;
    j["mu_e"] = mu_e_;
    j["mu_o_abs"] = mu_o_abs_;
    j["t_max"] = t_max_;
    j["since_update"] = since_update_;
    return j.dump();
}

UpdateMonitor UpdateMonitor::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    UpdateMonitor m;
    m.capacity_ = j.at("capacity").get<std::size_t>();
    m.mu_e_ = j.at("mu_e").get<double>();
    m.mu_o_abs_ = j.at("mu_o_abs").get<double>();
    m.t_max_ = j.at("t_max").get<std::size_t>();
    m.since_update_ = j.at("since_update").get<std::uint64_t>();
    for (double v : j.at("window")) m.window_.push_back(v);
    return m;
}

bool offline_update_check(const std::vector<double>& window_uncertainties, double mu_e,
                          double mu_o_abs, std::uint64_t instances_since_update, std::size_t t_max) {
    double mass = 0.0;
    for (double u : window_uncertainties)
        if (u > mu_e) mass += u;
    return mass > mu_o_abs || instances_since_update > t_max;
}

Verdict score_instance(const ModelBundle& bundle, ThresholdState& state,
                       const std::vector<double>& x, std::size_t index) {
    const std::vector<double> xs = bundle.standardizer.apply(x);
    const DirichletOpinion opinion = evidential_forward(bundle.iec, xs);

    Verdict v;
    v.index = index;
    v.uncertainty = opinion.uncertainty;
    v.model_version = bundle.version;
    if (opinion.uncertainty > bundle.mu_e) {
        v.detector = DetectorKind::Dynamic;
        try {
            v.recon_error = dynamic_reconstruct(bundle.scd, bundle.dsd, xs).error;
        } catch (const std::runtime_error&) {
            // shift generation overflowed on an extreme-magnitude instance;
            // the static detector scores it instead
            v.detector = DetectorKind::Static;
            v.recon_error = reconstruct(bundle.scd, xs).error;
        }
    } else {
        v.detector = DetectorKind::Static;
        v.recon_error = reconstruct(bundle.scd, xs).error;
    }
    // an overflowed error is the strongest possible anomaly signal, not NaN
    if (!std::isfinite(v.recon_error)) v.recon_error = std::numeric_limits<double>::infinity();
    v.score = anomaly_score(v.recon_error, v.uncertainty, state.pivot(), state.params().lambda,
                            state.clamp_counter());
    if (!std::isfinite(v.score)) v.score = std::numeric_limits<double>::infinity();
    v.threshold = state.current_threshold();
    v.is_anomaly = v.score > v.threshold;
    state.observe(v);
    return v;
}

ModelBundle run_offline_update(const ModelBundle& bundle,
                               const std::vector<std::vector<double>>& recent_window_data,
                               const Config& cfg) {
    if (recent_window_data.empty()) throw std::invalid_argument("offline update: empty window");
    for (const auto& x : recent_window_data)
        for (double v : x)
            if (!std::isfinite(v)) throw std::runtime_error("offline update: non-finite instance in window");

    if (cfg.full_retrain_update) {
        Config retrain_cfg = cfg;
        retrain_cfg.h_r = 1.0;
        ModelBundle fresh = train(recent_window_data, retrain_cfg);
        fresh.version = bundle.version + 1;
        return fresh;
    }

    // Fine-tune a deep copy on the recent window, standardizer frozen.
    ModelBundle next = bundle;
    next.version = bundle.version + 1;
    const std::vector<std::vector<double>> xs = next.standardizer.apply_all(recent_window_data);

    Config update_cfg = cfg;
    update_cfg.lr_decay = cfg.update_lr_decay;

    ScdTrainConfig scd_cfg;
    scd_cfg.epochs = cfg.update_epochs;
    scd_cfg.batch = cfg.batch;
    scd_cfg.adam.lr = cfg.lr;
    scd_cfg.adam.decay = cfg.update_lr_decay;
    scd_cfg.seed = Rng(cfg.seed).child(100 + next.version).seed();
    train_scd(next.scd, xs, scd_cfg);

    std::vector<double> errors(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) errors[i] = reconstruct(next.scd, xs[i]).error;
    next.mu_p = resolve_mu_p(errors, cfg.mu_p_proportion);

    LabelingResult pass1 = pseudo_label_pass(xs, errors, nullptr, next.mu_p, next.mu_e);
    stage2_interleaved(next, xs, errors, pass1.labeled, update_cfg, cfg.update_epochs,
                       Rng(cfg.seed).child(200 + next.version));

    if (cfg.dsd_update_static)
        for (std::size_t i = 0; i < xs.size(); ++i) errors[i] = reconstruct(next.scd, xs[i]).error;

    CalibrationStats stats = calibrate(next, xs, cfg.lambda);
    next.mu_t = stats.mu_t;
    next.pivot_init = stats.pivot_init;
    next.bootstrap_threshold = stats.bootstrap;
    return next;
}

StreamRunner::StreamRunner(std::shared_ptr<const ModelBundle> bundle, const Config& cfg,
                           RunnerOptions options)
    : bundle_(std::move(bundle)), cfg_(cfg), options_(options) {
    cfg_.validate();
    if (!bundle_) throw std::invalid_argument("runner: null bundle");
    DtoParams p;
    p.tau = cfg_.tau;
    p.kappa = cfg_.kappa;
    p.lambda = cfg_.lambda;
    p.ema_beta = cfg_.ema_beta;
    p.window_capacity = cfg_.window_capacity;
    p.warmup_min = cfg_.warmup_min;
    state_ = ThresholdState(p, bundle_->pivot_init, bundle_->mu_t, bundle_->bootstrap_threshold);
    monitor_ = UpdateMonitor(cfg_.window_capacity, bundle_->mu_e, cfg_.mu_o_frac, cfg_.t_max);
}

Verdict StreamRunner::process(const std::vector<double>& x) {
    std::shared_ptr<const ModelBundle> bundle = bundle_;
    if (x.size() != bundle->input_dim())
        throw std::invalid_argument("runner: instance dim " + std::to_string(x.size()) +
                                    " vs bundle input dim " + std::to_string(bundle->input_dim()));

    if (options_.static_only) {
        // Frozen-SCD ablation: raw reconstruction error, bootstrap threshold,
        // no routing, no adaptation.
        Verdict v;
        v.index = next_index_++;
        v.detector = DetectorKind::Static;
        v.recon_error = reconstruct(bundle->scd, bundle->standardizer.apply(x)).error;
        v.uncertainty = 0.0;
        v.score = v.recon_error;
        v.threshold = bundle->bootstrap_threshold;
        v.is_anomaly = v.score > v.threshold;
        v.model_version = bundle->version;
        return v;
    }

    Verdict v = score_instance(*bundle, state_, x, next_index_++);
    if (v.detector == DetectorKind::Dynamic && (dynamic_seen_++ % 16 == 0))
        sample_shift(*bundle, bundle->standardizer.apply(x));

    if (!v.is_anomaly) {
        normal_buffer_.push_back(x);
        if (normal_buffer_.size() > cfg_.window_capacity) normal_buffer_.pop_front();
    }
    monitor_.record(v.uncertainty);

    if (options_.adaptation_enabled && monitor_.update_due() && normal_buffer_.size() >= 2)
        try_offline_update();
    return v;
}

std::string StreamRunner::checkpoint_json() const {
    nlohmann::ordered_json j;
    j["format"] = "driftwatch-checkpoint";
    j["format_version"] = kModelFormatVersion;
    j["bundle"] = nlohmann::ordered_json::parse(bundle_to_json(*bundle_));
    j["threshold_state"] = nlohmann::ordered_json::parse(state_.to_json());
    j["monitor"] = nlohmann::ordered_json::parse(monitor_.to_json());
    j["normal_buffer"] = std::vector<std::vector<double>>(normal_buffer_.begin(), normal_buffer_.end());
    j["next_index"] = next_index_;
    j["updates_applied"] = updates_applied_;
    j["updates_failed"] = updates_failed_;
    j["dynamic_seen"] = dynamic_seen_;
    j["shift_count"] = shift_count_;
    j["shift_mean"] = shift_mean_;
    j["shift_m2"] = shift_m2_;
    return j.dump(2);
}

StreamRunner StreamRunner::restore(const std::string& checkpoint, const Config& cfg,
                                   RunnerOptions options) {
    nlohmann::json j = nlohmann::json::parse(checkpoint);
    if (j.at("format").get<std::string>() != "driftwatch-checkpoint")
        throw std::runtime_error("checkpoint: unrecognized format tag");
    auto bundle = std::make_shared<const ModelBundle>(bundle_from_json(j.at("bundle").dump()));
    StreamRunner runner(bundle, cfg, options);
    runner.state_ = ThresholdState::from_json(j.at("threshold_state").dump());
    runner.monitor_ = UpdateMonitor::from_json(j.at("monitor").dump());
    for (const auto& x : j.at("normal_buffer"))
        runner.normal_buffer_.push_back(x.get<std::vector<double>>());
    runner.next_index_ = j.at("next_index").get<std::size_t>();
    runner.updates_applied_ = j.at("updates_applied").get<std::uint64_t>();
    runner.updates_failed_ = j.at("updates_failed").get<std::uint64_t>();
    runner.dynamic_seen_ = j.at("dynamic_seen").get<std::uint64_t>();
    runner.shift_count_ = j.at("shift_count").get<std::uint64_t>();
    runner.shift_mean_ = j.at("shift_mean").get<std::vector<double>>();
    runner.shift_m2_ = j.at("shift_m2").get<double>();
    return runner;
}

void StreamRunner::sample_shift(const ModelBundle& bundle, const std::vector<double>& standardized) {
    ParamShift shift;
    try {
        shift = generate_shift(bundle.dsd, standardized);
    } catch (const std::runtime_error&) {
        return;  // overflowed shifts are excluded from the dispersion sample
    }
    std::vector<double> flat;
    for (const Matrix& m : shift.encoder) flat.insert(flat.end(), m.data.begin(), m.data.end());
    for (const Matrix& m : shift.decoder) flat.insert(flat.end(), m.data.begin(), m.data.end());
    if (shift_mean_.empty()) shift_mean_.assign(flat.size(), 0.0);
    if (shift_mean_.size() != flat.size()) return;  // bundle swapped to a new layout
    ++shift_count_;
    double dist2 = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double delta = flat[i] - shift_mean_[i];
        dist2 += delta * delta;
        shift_mean_[i] += delta / static_cast<double>(shift_count_);
    }
    // Welford update: delta . (x - new_mean) == |delta|^2 (n-1)/n
    if (shift_count_ > 1)
        shift_m2_ += dist2 * (static_cast<double>(shift_count_ - 1) /
                              static_cast<double>(shift_count_));
}

double StreamRunner::shift_dispersion() const {
    return shift_count_ > 1 ? shift_m2_ / static_cast<double>(shift_count_ - 1) : 0.0;
}

bool StreamRunner::shifts_look_constant() const {
    return shift_count_ >= 8 && shift_dispersion() < 1e-18;
}

void StreamRunner::try_offline_update() {
    std::shared_ptr<const ModelBundle> snapshot = bundle_;
    std::vector<std::vector<double>> window(normal_buffer_.begin(), normal_buffer_.end());
    try {
        auto updated = std::make_shared<const ModelBundle>(run_offline_update(*snapshot, window, cfg_));
        bundle_ = updated;  // swap observed between instances; scorer never sees a half-built bundle
        state_.rebind_model_stats(updated->mu_t, updated->bootstrap_threshold);
        state_.reinitialize_on_drift();
        monitor_.reset_after_update();
        ++updates_applied_;
        shift_count_ = 0;
        shift_mean_.clear();
        shift_m2_ = 0.0;
    } catch (const std::exception& e) {
        // Old bundle keeps serving; monitor reset deferred so the trigger
        // re-fires once the window content changes.
        last_update_error_ = e.what();
        ++updates_failed_;
    }
}

namespace {

void append_double(std::string& out, double v) {
    // JSON has no infinities; overflowed values clamp to the largest finite
    // double, which still exceeds every real threshold
    if (!std::isfinite(v)) v = v < 0.0 ? -std::numeric_limits<double>::max()
                                       : std::numeric_limits<double>::max();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

std::string verdict_to_ndjson(const Verdict& v) {
    std::string line = "{\"index\":";
    line += std::to_string(v.index);
    line += ",\"score\":";
    append_double(line, v.score);
    line += ",\"recon_error\":";
    append_double(line, v.recon_error);
    line += ",\"uncertainty\":";
    append_double(line, v.uncertainty);
    line += ",\"threshold\":";
    append_double(line, v.threshold);
    line += ",\"decision\":\"";
    line += v.is_anomaly ? "anomaly" : "normal";
    line += "\",\"detector\":\"";
    line += v.detector == DetectorKind::Dynamic ? "dynamic" : "static";
    line += "\",\"model_version\":";
    line += std::to_string(v.model_version);
    line += "}";
    return line;
}

Verdict verdict_from_ndjson(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    Verdict v;
    v.index = j.at("index").get<std::size_t>();
    v.score = j.at("score").get<double>();
    v.recon_error = j.at("recon_error").get<double>();
    v.uncertainty = j.at("uncertainty").get<double>();
    v.threshold = j.at("threshold").get<double>();
    v.is_anomaly = j.at("decision").get<std::string>() == "anomaly";
    v.detector = j.at("detector").get<std::string>() == "dynamic" ? DetectorKind::Dynamic
                                                                  : DetectorKind::Static;
    v.model_version = j.at("model_version").get<std::uint64_t>();
    return v;
}

}  // namespace driftwatch
