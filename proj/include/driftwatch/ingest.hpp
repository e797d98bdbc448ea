#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "driftwatch/dto.hpp"

namespace driftwatch {

struct LabeledStream {
    std::vector<std::vector<double>> instances;
    std::optional<std::vector<int>> labels;  // 0 normal, 1 anomaly
    std::string name;
    std::vector<std::size_t> drift_markers;

    std::size_t size() const { return instances.size(); }
    std::size_t dim() const { return instances.empty() ? 0 : instances.front().size(); }
};

struct CsvSchema {
    std::optional<std::string> label_column;        // absent: unlabeled stream
    std::vector<std::string> feature_columns;       // empty: all non-label columns
};

// Comma-separated, UTF-8, header row required. Non-numeric or non-finite
// feature cells fail with the 1-based (row, column) location.
LabeledStream load_csv(const std::string& path, const CsvSchema& schema);

void write_csv(const std::string& path, const LabeledStream& stream);

// Overlapping windows of `width` consecutive points; a window is anomalous
// iff any covered point is.
LabeledStream shingle(const std::vector<double>& series, const std::vector<int>* labels,
                      std::size_t width);

enum class DriftKind { Abrupt, Gradual, Incremental, Recurrent };

const char* drift_kind_name(DriftKind k);
DriftKind drift_kind_from_name(const std::string& name);

struct ConceptSpec {
    std::vector<double> mean;
    double scale = 1.0;  // isotropic standard deviation
};

struct DriftSpec {
    DriftKind kind = DriftKind::Abrupt;
    std::vector<ConceptSpec> concepts;     // >= 2
    std::size_t n = 0;
    std::size_t min_segment = 0;
    std::size_t max_segment = 0;
    double anomaly_rate = 0.0;             // [0, 0.5)
    std::size_t transition_width = 1;      // gradual/incremental morph span

    std::size_t dims() const { return concepts.empty() ? 0 : concepts.front().mean.size(); }
    void validate() const;
};

// Evenly spread concepts for quick synthetic streams: concept i sits at
// separation*i along a diagonal direction, unit scale.
DriftSpec make_default_spec(DriftKind kind, std::size_t n, std::size_t d, std::size_t n_concepts,
                            double anomaly_rate, double separation, std::uint64_t seed_hint = 0);

// Gaussian concepts with uniform anomalies rejected inside 3 sigma of the
// active concept. Markers record every concept switch.
LabeledStream synth_stream(const DriftSpec& spec, std::uint64_t seed);

// Rank-statistic AUCROC; ties count 0.5 per pair.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision over the descending-score ranking (ties broken by index).
double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels);

struct WindowStat {
    std::size_t start = 0;
    std::optional<double> aucroc;  // null when the window is single-class
    double mean_uncertainty = 0.0;
};

struct EvalReport {
    double aucroc = 0.0;
    double aucpr = 0.0;
    double fpr = 0.0;
    double fnr = 0.0;
    std::vector<WindowStat> windows;
    std::vector<std::size_t> drift_markers;
};

EvalReport evaluate(const std::vector<Verdict>& verdicts, const std::vector<int>& labels,
                    std::size_t window, const std::vector<std::size_t>& drift_markers = {});

std::string report_to_json(const EvalReport& report);

}  // namespace driftwatch
