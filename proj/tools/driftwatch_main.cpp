#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "driftwatch/config.hpp"
#include "driftwatch/ingest.hpp"
#include "driftwatch/pipeline.hpp"

namespace {

using namespace driftwatch;

Config resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                      bool seed_given, std::uint64_t seed_flag) {
    Config cfg;
    if (const char* env = std::getenv("DRIFTWATCH_SEED")) {
        try {
            cfg.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw std::runtime_error("DRIFTWATCH_SEED is not a non-negative integer");
        }
    }
    if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
    for (const std::string& o : overrides) apply_config_override(cfg, o);
    if (seed_given) cfg.seed = seed_flag;
    cfg.validate();
    return cfg;
}

void write_meta(const std::string& csv_path, const LabeledStream& stream) {
    nlohmann::ordered_json meta;
    meta["name"] = stream.name;
    meta["n"] = stream.size();
    meta["d"] = stream.dim();
    meta["drift_markers"] = stream.drift_markers;
    std::ofstream out(csv_path + ".meta.json");
    if (out) out << meta.dump(2) << "\n";
}

// Scalar series become width-dimensional instances; a window is anomalous
// iff any covered point is. Width 10 is the usual choice for the bundled
// time-series benchmarks.
LabeledStream maybe_shingle(LabeledStream stream, std::size_t width) {
    if (width == 0) return stream;
    if (stream.dim() != 1)
        throw std::runtime_error("--shingle-width applies to 1-feature streams, got d=" +
                                 std::to_string(stream.dim()));
    std::vector<double> series;
    series.reserve(stream.size());
    for (const auto& x : stream.instances) series.push_back(x[0]);
    LabeledStream out = shingle(series, stream.labels ? &*stream.labels : nullptr, width);
    out.name = stream.name;
    out.drift_markers = stream.drift_markers;
    return out;
}

std::vector<std::size_t> read_markers(const std::string& path) {
    std::ifstream in(path);
    if (!in) return {};
    nlohmann::json meta = nlohmann::json::parse(in, nullptr, false);
    if (meta.is_discarded() || !meta.contains("drift_markers")) return {};
    return meta["drift_markers"].get<std::vector<std::size_t>>();
}

int cmd_synth(const std::string& kind, std::size_t n, std::size_t d, std::size_t concepts,
              double anomaly_rate, double separation, std::size_t min_segment,
              std::size_t max_segment, std::size_t transition, std::uint64_t seed,
              const std::string& out_path) {
    DriftSpec spec = make_default_spec(drift_kind_from_name(kind), n, d, concepts, anomaly_rate,
                                       separation);
    if (min_segment > 0) spec.min_segment = min_segment;
    if (max_segment > 0) spec.max_segment = max_segment;
    if (transition > 0) spec.transition_width = transition;
    LabeledStream stream = synth_stream(spec, seed);
    write_csv(out_path, stream);
    write_meta(out_path, stream);
    std::cerr << "synth: wrote " << stream.size() << " instances (d=" << stream.dim() << ", "
              << stream.drift_markers.size() << " drift markers) to " << out_path << "\n";
    return 0;
}

int cmd_train(const Config& cfg, const std::string& data_path, const std::string& label_column,
              std::size_t shingle_width, const std::string& out_path) {
    CsvSchema schema;
    if (!label_column.empty()) schema.label_column = label_column;
    LabeledStream stream = maybe_shingle(load_csv(data_path, schema), shingle_width);
    ModelBundle bundle = train(stream.instances, cfg);
    save_bundle(out_path, bundle);
    std::cerr << "train: consumed " << static_cast<std::size_t>(cfg.h_r * stream.size())
              << " historical instances of " << stream.size() << "; bundle v" << bundle.version
              << " -> " << out_path << "\n";
    return 0;
}

int cmd_run(const Config& cfg, const std::string& bundle_path, const std::string& resume_path,
            const std::string& data_path, const std::string& label_column,
            std::size_t shingle_width, const std::string& out_path,
            const std::string& checkpoint_path, bool static_only, bool no_adapt) {
    RunnerOptions options;
    options.static_only = static_only;
    options.adaptation_enabled = !no_adapt && !static_only;

    std::optional<StreamRunner> runner;
    if (!resume_path.empty()) {
        std::ifstream in(resume_path);
        if (!in) throw std::runtime_error("run: cannot open checkpoint " + resume_path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        runner.emplace(StreamRunner::restore(text, cfg, options));
    } else {
        auto bundle = std::make_shared<const ModelBundle>(load_bundle(bundle_path));
        runner.emplace(bundle, cfg, options);
    }

    CsvSchema schema;
    if (!label_column.empty()) schema.label_column = label_column;
    LabeledStream stream = maybe_shingle(load_csv(data_path, schema), shingle_width);
    if (stream.dim() != runner->bundle().input_dim())
        throw std::runtime_error("run: stream dimension " + std::to_string(stream.dim()) +
                                 " does not match bundle input dimension " +
                                 std::to_string(runner->bundle().input_dim()));

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("run: cannot write " + out_path);
    for (const auto& x : stream.instances) out << verdict_to_ndjson(runner->process(x)) << "\n";
    out.close();

    if (!checkpoint_path.empty()) {
        std::ofstream ckout(checkpoint_path);
        if (!ckout) throw std::runtime_error("run: cannot write checkpoint " + checkpoint_path);
        ckout << runner->checkpoint_json() << "\n";
    }
    if (runner->shifts_look_constant())
        std::cerr << "run: warning: dynamic shifts look input-independent over "
                  << runner->shift_samples() << " samples (hypernetwork may have collapsed)\n";
    std::cerr << "run: scored " << stream.size() << " instances, " << runner->updates_applied()
              << " offline updates (" << runner->updates_failed() << " failed) -> " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& verdicts_path, const std::string& data_path,
             const std::string& label_column, std::size_t shingle_width,
             const std::string& markers_path, std::size_t window, const std::string& out_path) {
    std::ifstream in(verdicts_path);
    if (!in) throw std::runtime_error("eval: cannot open " + verdicts_path);
    std::vector<Verdict> verdicts;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) verdicts.push_back(verdict_from_ndjson(line));

    CsvSchema schema;
    schema.label_column = label_column.empty() ? "label" : label_column;
    LabeledStream stream = maybe_shingle(load_csv(data_path, schema), shingle_width);
    if (!stream.labels) throw std::runtime_error("eval: dataset has no labels");

    std::vector<std::size_t> markers = stream.drift_markers;
    if (!markers_path.empty()) markers = read_markers(markers_path);
    else {
        std::vector<std::size_t> side = read_markers(data_path + ".meta.json");
        if (!side.empty()) markers = side;
    }

    EvalReport report = evaluate(verdicts, *stream.labels, window == 0 ? verdicts.size() : window,
                                 markers);
    const std::string text = report_to_json(report);
    if (out_path.empty() || out_path == "-") {
        std::cout << text << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("eval: cannot write " + out_path);
        out << text << "\n";
    }
    std::cerr << "eval: aucroc=" << report.aucroc << " aucpr=" << report.aucpr << " fpr=" << report.fpr
              << " fnr=" << report.fnr << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"driftwatch: streaming anomaly detection with dynamic concept adaptation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    bool want_print_config = false;
    std::uint64_t seed_flag = 0;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--set", overrides, "override one config key (key=value, repeatable)");
    app.add_flag("--print-config", want_print_config, "print the fully resolved config and exit");
    CLI::Option* seed_opt = app.add_option("--seed", seed_flag, "seed override (else DRIFTWATCH_SEED)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic drift stream CSV");
    std::string synth_kind = "abrupt", synth_out;
    std::size_t synth_n = 10000, synth_d = 8, synth_concepts = 2;
    std::size_t synth_min_seg = 0, synth_max_seg = 0, synth_transition = 0;
    double synth_rate = 0.01, synth_sep = 3.0;
    synth->add_option("--kind", synth_kind, "abrupt|gradual|incremental|recurrent");
    synth->add_option("--n", synth_n, "stream length");
    synth->add_option("--d", synth_d, "feature dimension");
    synth->add_option("--concepts", synth_concepts, "number of concepts");
    synth->add_option("--anomaly-rate", synth_rate, "anomaly injection rate [0, 0.5)");
    synth->add_option("--separation", synth_sep, "per-coordinate concept separation in sigma");
    synth->add_option("--min-segment", synth_min_seg, "minimum segment length");
    synth->add_option("--max-segment", synth_max_seg, "maximum segment length");
    synth->add_option("--transition", synth_transition, "gradual/incremental transition width");
    synth->add_option("-o,--out", synth_out, "output CSV path")->required();

    auto* train_cmd = app.add_subcommand("train", "train a model bundle on the historical slice");
    std::string train_data, train_label = "label", train_out;
    std::size_t train_shingle = 0;
    train_cmd->add_option("--data", train_data, "input CSV")->required();
    train_cmd->add_option("--label-column", train_label, "label column name ('' for unlabeled)");
    train_cmd->add_option("--shingle-width", train_shingle,
                          "shingle a 1-feature series into overlapping windows (0 = off)");
    train_cmd->add_option("-o,--out", train_out, "bundle JSON path")->required();

    auto* run_cmd = app.add_subcommand("run", "replay a stream with live adaptation");
    std::string run_bundle, run_resume, run_data, run_label = "label", run_out, run_checkpoint;
    std::size_t run_shingle = 0;
    bool run_static_only = false, run_no_adapt = false;
    CLI::Option* bundle_opt = run_cmd->add_option("--bundle", run_bundle, "bundle JSON path");
    run_cmd->add_option("--resume", run_resume, "continue from a checkpoint written by --checkpoint")
        ->excludes(bundle_opt);
    run_cmd->add_option("--data", run_data, "input CSV")->required();
    run_cmd->add_option("--label-column", run_label, "label column name ('' for unlabeled)");
    run_cmd->add_option("--shingle-width", run_shingle,
                        "shingle a 1-feature series into overlapping windows (0 = off)");
    run_cmd->add_option("-o,--out", run_out, "NDJSON verdict path")->required();
    run_cmd->add_option("--checkpoint", run_checkpoint, "write bundle+state checkpoint JSON here");
    run_cmd->add_flag("--ablation-static", run_static_only,
                      "frozen-SCD ablation: raw static scores, no routing or adaptation");
    run_cmd->add_flag("--no-adapt", run_no_adapt, "disable offline updates");

    auto* eval_cmd = app.add_subcommand("eval", "score verdicts against ground-truth labels");
    std::string eval_verdicts, eval_data, eval_label = "label", eval_markers, eval_out;
    std::size_t eval_window = 0, eval_shingle = 0;
    eval_cmd->add_option("--verdicts", eval_verdicts, "NDJSON verdicts")->required();
    eval_cmd->add_option("--data", eval_data, "labeled CSV")->required();
    eval_cmd->add_option("--label-column", eval_label, "label column name");
    eval_cmd->add_option("--shingle-width", eval_shingle,
                         "apply the same shingling as the run being evaluated");
    eval_cmd->add_option("--markers", eval_markers, "drift-marker meta JSON");
    eval_cmd->add_option("--window", eval_window, "window size for the temporal series (0 = whole stream)");
    eval_cmd->add_option("-o,--out", eval_out, "report JSON path ('-' for stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        Config cfg = resolve_config(config_path, overrides, !seed_opt->empty(), seed_flag);
        if (want_print_config) {
            std::cout << print_config(cfg);
            return 0;
        }
        if (synth->parsed())
            return cmd_synth(synth_kind, synth_n, synth_d, synth_concepts, synth_rate, synth_sep,
                             synth_min_seg, synth_max_seg, synth_transition, cfg.seed, synth_out);
        if (train_cmd->parsed())
            return cmd_train(cfg, train_data, train_label, train_shingle, train_out);
        if (run_cmd->parsed()) {
            if (run_bundle.empty() && run_resume.empty())
                throw std::runtime_error("run: either --bundle or --resume is required");
            return cmd_run(cfg, run_bundle, run_resume, run_data, run_label, run_shingle, run_out,
                           run_checkpoint, run_static_only, run_no_adapt);
        }
        if (eval_cmd->parsed())
            return cmd_eval(eval_verdicts, eval_data, eval_label, eval_shingle, eval_markers,
                            eval_window, eval_out);
    } catch (const std::exception& e) {
        std::cerr << "driftwatch: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
