#include "driftwatch/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace driftwatch {

namespace {

void require(bool ok, const std::string& key, const std::string& range) {
    if (!ok) throw std::runtime_error("config: " + key + " outside " + range);
}

struct Field {
    std::function<std::string(const Config&)> get;
    std::function<void(Config&, const std::string&)> set;
};

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::runtime_error("config: " + key + ": expected a number, got '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        unsigned long long u = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw std::runtime_error("config: " + key + ": expected a non-negative integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config: " + key + ": expected true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"seed", {[](const Config& c) { return std::to_string(c.seed); },
                  [](Config& c, const std::string& v) { c.seed = parse_uint("seed", v); }}},
        {"h_r", {[](const Config& c) { return fmt_double(c.h_r); },
                 [](Config& c, const std::string& v) { c.h_r = parse_double("h_r", v); }}},
        {"epochs", {[](const Config& c) { return std::to_string(c.epochs); },
                    [](Config& c, const std::string& v) { c.epochs = parse_uint("epochs", v); }}},
        {"update_epochs",
         {[](const Config& c) { return std::to_string(c.update_epochs); },
          [](Config& c, const std::string& v) { c.update_epochs = parse_uint("update_epochs", v); }}},
        {"update_lr_decay",
         {[](const Config& c) { return fmt_double(c.update_lr_decay); },
          [](Config& c, const std::string& v) { c.update_lr_decay = parse_double("update_lr_decay", v); }}},
        {"batch", {[](const Config& c) { return std::to_string(c.batch); },
                   [](Config& c, const std::string& v) { c.batch = parse_uint("batch", v); }}},
        {"lr", {[](const Config& c) { return fmt_double(c.lr); },
                [](Config& c, const std::string& v) { c.lr = parse_double("lr", v); }}},
        {"lr_decay", {[](const Config& c) { return fmt_double(c.lr_decay); },
                      [](Config& c, const std::string& v) { c.lr_decay = parse_double("lr_decay", v); }}},
        {"train_noise_std",
         {[](const Config& c) { return fmt_double(c.train_noise_std); },
          [](Config& c, const std::string& v) { c.train_noise_std = parse_double("train_noise_std", v); }}},
        {"variance_threshold",
         {[](const Config& c) { return fmt_double(c.variance_threshold); },
          [](Config& c, const std::string& v) {
              c.variance_threshold = parse_double("variance_threshold", v);
          }}},
        {"encoder_layers",
         {[](const Config& c) { return std::to_string(c.encoder_layers); },
          [](Config& c, const std::string& v) { c.encoder_layers = parse_uint("encoder_layers", v); }}},
        {"iec_hidden_width",
         {[](const Config& c) { return std::to_string(c.iec_hidden_width); },
          [](Config& c, const std::string& v) { c.iec_hidden_width = parse_uint("iec_hidden_width", v); }}},
        {"iec_hidden_layers",
         {[](const Config& c) { return std::to_string(c.iec_hidden_layers); },
          [](Config& c, const std::string& v) {
              c.iec_hidden_layers = parse_uint("iec_hidden_layers", v);
          }}},
        {"hyper_embed_dim",
         {[](const Config& c) { return std::to_string(c.hyper_embed_dim); },
          [](Config& c, const std::string& v) { c.hyper_embed_dim = parse_uint("hyper_embed_dim", v); }}},
        {"hyper_shared_width",
         {[](const Config& c) { return std::to_string(c.hyper_shared_width); },
          [](Config& c, const std::string& v) {
              c.hyper_shared_width = parse_uint("hyper_shared_width", v);
          }}},
        {"shift_targets", {[](const Config& c) { return c.shift_targets; },
                           [](Config& c, const std::string& v) { c.shift_targets = v; }}},
        {"dsd_update_static",
         {[](const Config& c) { return c.dsd_update_static ? "true" : "false"; },
          [](Config& c, const std::string& v) { c.dsd_update_static = parse_bool("dsd_update_static", v); }}},
        {"dsd_static_lr_scale",
         {[](const Config& c) { return fmt_double(c.dsd_static_lr_scale); },
          [](Config& c, const std::string& v) {
              c.dsd_static_lr_scale = parse_double("dsd_static_lr_scale", v);
          }}},
        {"mu_p_proportion",
         {[](const Config& c) { return fmt_double(c.mu_p_proportion); },
          [](Config& c, const std::string& v) { c.mu_p_proportion = parse_double("mu_p_proportion", v); }}},
        {"mu_e", {[](const Config& c) { return fmt_double(c.mu_e); },
                  [](Config& c, const std::string& v) { c.mu_e = parse_double("mu_e", v); }}},
        {"gamma", {[](const Config& c) { return fmt_double(c.gamma); },
                   [](Config& c, const std::string& v) { c.gamma = parse_double("gamma", v); }}},
        {"iec_kl_weight",
         {[](const Config& c) { return fmt_double(c.iec_kl_weight); },
          [](Config& c, const std::string& v) { c.iec_kl_weight = parse_double("iec_kl_weight", v); }}},
        {"label_passes",
         {[](const Config& c) { return std::to_string(c.label_passes); },
          [](Config& c, const std::string& v) { c.label_passes = parse_uint("label_passes", v); }}},
        {"lambda", {[](const Config& c) { return fmt_double(c.lambda); },
                    [](Config& c, const std::string& v) { c.lambda = parse_double("lambda", v); }}},
        {"tau", {[](const Config& c) { return fmt_double(c.tau); },
                 [](Config& c, const std::string& v) { c.tau = parse_double("tau", v); }}},
        {"kappa", {[](const Config& c) { return fmt_double(c.kappa); },
                   [](Config& c, const std::string& v) { c.kappa = parse_double("kappa", v); }}},
        {"ema_beta", {[](const Config& c) { return fmt_double(c.ema_beta); },
                      [](Config& c, const std::string& v) { c.ema_beta = parse_double("ema_beta", v); }}},
        {"window_capacity",
         {[](const Config& c) { return std::to_string(c.window_capacity); },
          [](Config& c, const std::string& v) { c.window_capacity = parse_uint("window_capacity", v); }}},
        {"warmup_min",
         {[](const Config& c) { return std::to_string(c.warmup_min); },
          [](Config& c, const std::string& v) { c.warmup_min = parse_uint("warmup_min", v); }}},
        {"mu_o_frac", {[](const Config& c) { return fmt_double(c.mu_o_frac); },
                       [](Config& c, const std::string& v) { c.mu_o_frac = parse_double("mu_o_frac", v); }}},
        {"t_max", {[](const Config& c) { return std::to_string(c.t_max); },
                   [](Config& c, const std::string& v) { c.t_max = parse_uint("t_max", v); }}},
        {"full_retrain_update",
         {[](const Config& c) { return c.full_retrain_update ? "true" : "false"; },
          [](Config& c, const std::string& v) {
              c.full_retrain_update = parse_bool("full_retrain_update", v);
          }}},
    };
    return table;
}

}  // namespace

void Config::validate() const {
    require(h_r > 0.0 && h_r <= 1.0, "h_r", "(0, 1]");
    require(batch >= 1, "batch", "[1, inf)");
    require(lr > 0.0, "lr", "(0, inf)");
    require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay", "(0, 1]");
    require(update_lr_decay > 0.0 && update_lr_decay <= 1.0, "update_lr_decay", "(0, 1]");
    require(train_noise_std >= 0.0, "train_noise_std", "[0, inf)");
    require(variance_threshold > 0.0 && variance_threshold <= 1.0, "variance_threshold", "(0, 1]");
    require(encoder_layers >= 1 && encoder_layers <= 5, "encoder_layers", "[1, 5]");
    require(iec_hidden_width >= 1, "iec_hidden_width", "[1, inf)");
    require(iec_hidden_layers >= 1, "iec_hidden_layers", "[1, inf)");
    require(hyper_embed_dim >= 1, "hyper_embed_dim", "[1, inf)");
    require(hyper_shared_width >= 1, "hyper_shared_width", "[1, inf)");
    shift_targets_from_name(shift_targets);  // throws on bad value
    require(dsd_static_lr_scale > 0.0 && dsd_static_lr_scale <= 1.0, "dsd_static_lr_scale", "(0, 1]");
    require(mu_p_proportion >= 0.05 && mu_p_proportion <= 0.5, "mu_p_proportion", "[0.05, 0.5]");
    require(mu_e >= 0.005 && mu_e <= 0.4, "mu_e", "[0.005, 0.4]");
    require(gamma >= 0.0, "gamma", "[0, inf)");
    require(iec_kl_weight >= 0.0, "iec_kl_weight", "[0, inf)");
    require(label_passes >= 1, "label_passes", "[1, inf)");
    require(lambda >= 0.0, "lambda", "[0, inf)");
    require(tau > 0.0 && tau < 1.0, "tau", "(0, 1)");
    require(kappa >= 0.0, "kappa", "[0, inf)");
    require(ema_beta >= 0.0 && ema_beta <= 1.0, "ema_beta", "[0, 1]");
    require(window_capacity >= 4, "window_capacity", "[4, inf)");
    require(warmup_min >= 1 && warmup_min <= window_capacity, "warmup_min", "[1, window_capacity]");
    require(mu_o_frac >= 0.1 && mu_o_frac <= 1.0, "mu_o_frac", "[0.1, 1]");
    require(t_max >= 1, "t_max", "[1, inf)");
}

Config load_config_file(const std::string& path, Config base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        std::size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        try {
            apply_config_override(base, line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    base.validate();
    return base;
}

void apply_config_override(Config& cfg, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::runtime_error("config: expected key=value, got '" + assignment + "'");
    auto strip = [](std::string s) {
        std::size_t a = s.find_first_not_of(" \t");
        if (a == std::string::npos) return std::string{};
        std::size_t b = s.find_last_not_of(" \t");
        return s.substr(a, b - a + 1);
    };
    const std::string key = strip(assignment.substr(0, eq));
    const std::string value = strip(assignment.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end()) throw std::runtime_error("config: unknown key '" + key + "'");
    it->second.set(cfg, value);
}

std::string print_config(const Config& cfg) {
    std::ostringstream os;
    for (const auto& [key, field] : fields()) os << key << " = " << field.get(cfg) << "\n";
    return os.str();
}

}  // namespace driftwatch
