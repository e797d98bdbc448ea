#include "driftwatch/iec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace driftwatch {

double digamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("digamma: requires x > 0");
    double result = 0.0;
    while (x < 10.0) {  // recurrence psi(x) = psi(x+1) - 1/x
        result -= 1.0 / x;
        x += 1.0;
    }
    // asymptotic expansion, |error| < 1e-14 for x >= 10
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    return result;
}

double trigamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("trigamma: requires x > 0");
    double result = 0.0;
    while (x < 10.0) {  // recurrence psi1(x) = psi1(x+1) + 1/x^2
        result += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 / 42.0))));
    return result;
}

namespace {

void check_alpha(const std::vector<double>& alpha) {
    if (alpha.empty()) throw std::invalid_argument("dirichlet: empty alpha");
    for (double a : alpha)
        if (!(a > 0.0)) throw std::invalid_argument("dirichlet: alpha components must be positive");
}

}  // namespace

std::vector<double> predictive_prob(const std::vector<double>& alpha) {
    check_alpha(alpha);
    double s = 0.0;
    for (double a : alpha) s += a;
    std::vector<double> p(alpha.size());
    for (std::size_t c = 0; c < alpha.size(); ++c) p[c] = alpha[c] / s;
    return p;
}

double concept_uncertainty(const std::vector<double>& alpha) {
    check_alpha(alpha);
    double s = 0.0;
    for (double a : alpha) s += a;
    const double psi_s1 = digamma(s + 1.0);
    double u = 0.0;
    for (double a : alpha) {
        const double p = a / s;
        u += p * (digamma(a + 1.0) - psi_s1);
        if (p > 0.0) u -= p * std::log(p);
    }
    if (u < 0.0) {
        if (u < -1e-12) throw std::runtime_error("concept_uncertainty: negative beyond numeric slack");
        u = 0.0;
    }
    return u;
}

double focal_edl_loss(const std::vector<double>& alpha, std::size_t label, double gamma) {
    check_alpha(alpha);
    if (label >= alpha.size()) throw std::invalid_argument("focal_edl_loss: label out of range");
    if (gamma < 0.0) throw std::invalid_argument("focal_edl_loss: gamma must be >= 0");
    double s = 0.0;
    for (double a : alpha) s += a;
    const double p = alpha[label] / s;
    const double nll = std::log(s) - std::log(alpha[label]);
    const double focal = gamma == 0.0 ? 1.0 : std::pow(1.0 - p, gamma);
    return focal * nll;
}

std::vector<double> focal_edl_loss_alpha_grad(const std::vector<double>& alpha, std::size_t label,
                                              double gamma) {
    check_alpha(alpha);
    if (label >= alpha.size()) throw std::invalid_argument("focal_edl_loss: label out of range");
    double s = 0.0;
    for (double a : alpha) s += a;
    const double p = alpha[label] / s;
    const double nll = std::log(s) - std::log(alpha[label]);
    const double focal = gamma == 0.0 ? 1.0 : std::pow(1.0 - p, gamma);
    const double dfocal_dp = gamma == 0.0 ? 0.0 : -gamma * std::pow(1.0 - p, gamma - 1.0);

    std::vector<double> g(alpha.size());
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        const double dp_dak = ((k == label ? 1.0 : 0.0) - p) / s;
        const double dnll_dak = 1.0 / s - (k == label ? 1.0 / alpha[label] : 0.0);
        g[k] = dfocal_dp * dp_dak * nll + focal * dnll_dak;
    }
    return g;
}

namespace {

std::vector<double> masked_alpha(const std::vector<double>& alpha, std::size_t label) {
    std::vector<double> tilde = alpha;
    tilde[label] = 1.0;
    return tilde;
}

}  // namespace

double edl_kl_regularizer(const std::vector<double>& alpha, std::size_t label) {
    check_alpha(alpha);
    if (label >= alpha.size()) throw std::invalid_argument("edl_kl: label out of range");
    const std::vector<double> t = masked_alpha(alpha, label);
    const double c = static_cast<double>(t.size());
    double s = 0.0;
    for (double a : t) s += a;
    double kl = std::lgamma(s) - std::lgamma(c);
    const double psi_s = digamma(s);
    for (double a : t) kl += -std::lgamma(a) + (a - 1.0) * (digamma(a) - psi_s);
    return kl;
}

std::vector<double> edl_kl_regularizer_alpha_grad(const std::vector<double>& alpha,
                                                  std::size_t label) {
    check_alpha(alpha);
    if (label >= alpha.size()) throw std::invalid_argument("edl_kl: label out of range");
    const std::vector<double> t = masked_alpha(alpha, label);
    const double c = static_cast<double>(t.size());
    double s = 0.0;
    for (double a : t) s += a;
    const double tail = (s - c) * trigamma(s);
    std::vector<double> g(alpha.size(), 0.0);
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        if (k == label) continue;  // pinned to 1 inside the KL
        g[k] = (t[k] - 1.0) * trigamma(t[k]) - tail;
    }
    return g;
}

PseudoLabel pseudo_label(double recon_err, double uncertainty, double mu_p, double mu_e) {
    if (uncertainty > mu_e) return PseudoLabel::Unknown;
    return recon_err > mu_p ? PseudoLabel::Positive : PseudoLabel::Negative;
}

double resolve_mu_p(std::vector<double> errors, double proportion) {
    if (errors.empty()) throw std::invalid_argument("resolve_mu_p: empty error list");
    if (proportion <= 0.0 || proportion >= 1.0)
        throw std::invalid_argument("resolve_mu_p: proportion must be in (0, 1)");
    std::sort(errors.begin(), errors.end());
    const double q = 1.0 - proportion;
    const double n = static_cast<double>(errors.size());
    std::size_t k = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    k = std::min(std::max<std::size_t>(k, 1), errors.size());
    return errors[k - 1];
}

EvidentialClassifier make_classifier(std::size_t input_dim, std::size_t hidden_width,
                                     std::size_t hidden_layers, Rng& rng) {
    if (input_dim == 0) throw std::invalid_argument("classifier: zero input dim");
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (std::size_t l = 0; l < hidden_layers; ++l) dims.push_back(hidden_width);
    dims.push_back(2);
    std::vector<Activation> acts(dims.size() - 1, Activation::Relu);
    acts.back() = Activation::Exponential;
    EvidentialClassifier clf;
    clf.net = make_mlp(dims, acts, rng);
    return clf;
}

DirichletOpinion evidential_forward(const EvidentialClassifier& clf, const std::vector<double>& x) {
    Tape tape;
    std::vector<double> evidence = mlp_forward(clf.net, x, &tape);
    for (double z : tape.preacts.back())
        if (z >= kExpPreactCap) clf.evidence_clamps->count.fetch_add(1, std::memory_order_relaxed);

    DirichletOpinion op;
    op.alpha.resize(evidence.size());
    for (std::size_t c = 0; c < evidence.size(); ++c) op.alpha[c] = evidence[c] + 1.0;
    op.strength = 0.0;
    for (double a : op.alpha) op.strength += a;
    op.prob = predictive_prob(op.alpha);
    op.uncertainty = concept_uncertainty(op.alpha);
    return op;
}

double iec_train_step(EvidentialClassifier& clf, const std::vector<const LabeledInstance*>& batch,
                      double gamma, double kl_coef, AdamState& state) {
    if (batch.empty()) return 0.0;
    MlpGrads grads = zero_grads_like(clf.net);
    double loss_sum = 0.0;
    for (const LabeledInstance* item : batch) {
        Tape tape;
        std::vector<double> evidence = mlp_forward(clf.net, item->first, &tape);
        std::vector<double> alpha(evidence.size());
        for (std::size_t c = 0; c < alpha.size(); ++c) alpha[c] = evidence[c] + 1.0;
        const std::size_t label = static_cast<std::size_t>(item->second);
        loss_sum += focal_edl_loss(alpha, label, gamma);
        // d(loss)/d(evidence) == d(loss)/d(alpha) since alpha = evidence + 1
        std::vector<double> gout = focal_edl_loss_alpha_grad(alpha, label, gamma);
        if (kl_coef > 0.0) {
            std::vector<double> gkl = edl_kl_regularizer_alpha_grad(alpha, label);
            for (std::size_t c = 0; c < gout.size(); ++c) gout[c] += kl_coef * gkl[c];
        }
        grads.accumulate(mlp_backward(clf.net, tape, gout));
    }
    const double mean_loss = loss_sum / static_cast<double>(batch.size());
    if (!std::isfinite(mean_loss)) throw std::runtime_error("train_iec: non-finite loss");
    grads.scale(1.0 / static_cast<double>(batch.size()));
    state.step(clf.net.param_blocks(), grads.blocks());
    return mean_loss;
}

namespace {

double mean_focal_loss(const EvidentialClassifier& clf, const std::vector<LabeledInstance>& labeled,
                       double gamma) {
    double s = 0.0;
    for (const auto& [x, label] : labeled) {
        DirichletOpinion op = evidential_forward(clf, x);
        s += focal_edl_loss(op.alpha, static_cast<std::size_t>(label), gamma);
    }
    return s / static_cast<double>(labeled.size());
}

}  // namespace

TrainStats train_iec(EvidentialClassifier& clf, const std::vector<LabeledInstance>& labeled,
                     const IecTrainConfig& cfg) {
    if (labeled.empty()) throw std::invalid_argument("train_iec: no labeled instances");
    bool has_pos = false, has_neg = false;
    for (const auto& [x, label] : labeled) {
        if (label != 0 && label != 1) throw std::invalid_argument("train_iec: labels must be 0 or 1");
        (label == 1 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        throw std::runtime_error(
            "train_iec: pseudo-labels are single-class; adjust mu_p_proportion so both classes appear");

    TrainStats stats;
    stats.initial_loss = mean_focal_loss(clf, labeled, cfg.gamma);
    if (cfg.epochs == 0) {
        stats.final_loss = stats.initial_loss;
        return stats;
    }

    Rng rng(cfg.seed);
    AdamState state(clf.net.param_blocks(), cfg.adam);
    std::vector<std::size_t> order(labeled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch = std::max<std::size_t>(1, cfg.batch);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        state.set_epoch(epoch);
        const double anneal = cfg.kl_anneal_epochs == 0
                                  ? 1.0
                                  : std::min(1.0, static_cast<double>(epoch + 1) /
                                                      static_cast<double>(cfg.kl_anneal_epochs));
        const double kl_coef = cfg.kl_weight * anneal;
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<const LabeledInstance*> view;
            view.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) view.push_back(&labeled[order[k]]);
            iec_train_step(clf, view, cfg.gamma, kl_coef, state);
        }
        ++stats.epochs_run;
    }
    stats.final_loss = mean_focal_loss(clf, labeled, cfg.gamma);
    return stats;
}

}  // namespace driftwatch
