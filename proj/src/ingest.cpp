#include "driftwatch/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "driftwatch/rng.hpp"

namespace driftwatch {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    const std::string t = trim(cell);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("csv: non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                                 ", column " + std::to_string(col));
    }
    if (used != t.size() || !std::isfinite(v))
        throw std::runtime_error("csv: non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                                 ", column " + std::to_string(col));
    return v;
}

}  // namespace

LabeledStream load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);

    std::string header_line;
    if (!std::getline(in, header_line)) throw std::runtime_error("csv: empty file " + path);
    std::vector<std::string> header = split_csv_line(header_line);
    for (auto& h : header) h = trim(h);

    std::optional<std::size_t> label_idx;
    if (schema.label_column) {
        auto it = std::find(header.begin(), header.end(), *schema.label_column);
        if (it == header.end())
            throw std::runtime_error("csv: missing label column '" + *schema.label_column + "' in " + path);
        label_idx = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<std::size_t> feature_idx;
    if (schema.feature_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (!label_idx || i != *label_idx) feature_idx.push_back(i);
    } else {
        for (const std::string& name : schema.feature_columns) {
            auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end())
                throw std::runtime_error("csv: missing feature column '" + name + "' in " + path);
            feature_idx.push_back(static_cast<std::size_t>(it - header.begin()));
        }
    }
    if (feature_idx.empty()) throw std::runtime_error("csv: no feature columns in " + path);

    LabeledStream stream;
    stream.name = path;
    if (label_idx) stream.labels = std::vector<int>{};

    std::string line;
    std::size_t row = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error("csv: row " + std::to_string(row) + " has " +
                                     std::to_string(cells.size()) + " cells, header has " +
                                     std::to_string(header.size()));
        std::vector<double> x(feature_idx.size());
        for (std::size_t j = 0; j < feature_idx.size(); ++j)
            x[j] = parse_cell(cells[feature_idx[j]], row, feature_idx[j] + 1);
        stream.instances.push_back(std::move(x));
        if (label_idx) {
            const double lv = parse_cell(cells[*label_idx], row, *label_idx + 1);
            stream.labels->push_back(lv != 0.0 ? 1 : 0);
        }
    }
    if (stream.instances.empty()) throw std::runtime_error("csv: no data rows in " + path);
    return stream;
}

void write_csv(const std::string& path, const LabeledStream& stream) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv: cannot write " + path);
    const std::size_t d = stream.dim();
    for (std::size_t j = 0; j < d; ++j) out << "f" << j << ",";
    out << "label\n";
    char buf[32];
    for (std::size_t i = 0; i < stream.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", stream.instances[i][j]);
            out << buf << ",";
        }
        out << (stream.labels ? (*stream.labels)[i] : 0) << "\n";
    }
}

LabeledStream shingle(const std::vector<double>& series, const std::vector<int>* labels,
                      std::size_t width) {
    if (width < 2) throw std::invalid_argument("shingle: width must be >= 2");
    if (series.size() < width)
        throw std::invalid_argument("shingle: series length " + std::to_string(series.size()) +
                                    " shorter than width " + std::to_string(width));
    if (labels && labels->size() != series.size())
        throw std::invalid_argument("shingle: labels length mismatch");

    LabeledStream out;
    const std::size_t n = series.size() - width + 1;
    out.instances.reserve(n);
    if (labels) out.labels = std::vector<int>{};
    for (std::size_t i = 0; i < n; ++i) {
        out.instances.emplace_back(series.begin() + i, series.begin() + i + width);
        if (labels) {
            int any = 0;
            for (std::size_t k = i; k < i + width; ++k) any |= (*labels)[k] != 0;
            out.labels->push_back(any);
        }
    }
    return out;
}

const char* drift_kind_name(DriftKind k) {
    switch (k) {
        case DriftKind::Abrupt: return "abrupt";
        case DriftKind::Gradual: return "gradual";
        case DriftKind::Incremental: return "incremental";
        case DriftKind::Recurrent: return "recurrent";
    }
    return "abrupt";
}

DriftKind drift_kind_from_name(const std::string& name) {
    if (name == "abrupt") return DriftKind::Abrupt;
    if (name == "gradual") return DriftKind::Gradual;
    if (name == "incremental") return DriftKind::Incremental;
    if (name == "recurrent") return DriftKind::Recurrent;
    throw std::invalid_argument("unknown drift kind: " + name);
}

void DriftSpec::validate() const {
    if (concepts.size() < 2) throw std::invalid_argument("drift spec: need >= 2 concepts");
    const std::size_t d = dims();
    if (d == 0) throw std::invalid_argument("drift spec: zero-dimensional concepts");
    for (const ConceptSpec& c : concepts) {
        if (c.mean.size() != d) throw std::invalid_argument("drift spec: concept dims disagree");
        if (!(c.scale > 0.0)) throw std::invalid_argument("drift spec: concept scale must be positive");
    }
    if (!(anomaly_rate >= 0.0 && anomaly_rate < 0.5))
        throw std::invalid_argument("drift spec: anomaly rate must be in [0, 0.5)");
    if (n == 0) throw std::invalid_argument("drift spec: n must be positive");
    if (min_segment == 0 || max_segment < min_segment)
        throw std::invalid_argument("drift spec: segment bounds must satisfy 1 <= min <= max");
    if (kind != DriftKind::Recurrent && n < concepts.size() * min_segment)
        throw std::invalid_argument("drift spec: n too small for one segment per concept");
    if (transition_width == 0) throw std::invalid_argument("drift spec: transition width must be >= 1");
}

DriftSpec make_default_spec(DriftKind kind, std::size_t n, std::size_t d, std::size_t n_concepts,
                            double anomaly_rate, double separation, std::uint64_t) {
    DriftSpec spec;
    spec.kind = kind;
    spec.n = n;
    spec.anomaly_rate = anomaly_rate;
    spec.min_segment = std::max<std::size_t>(1, n / (n_concepts * 2));
    spec.max_segment = std::max<std::size_t>(spec.min_segment, n / n_concepts);
    spec.transition_width = std::max<std::size_t>(1, n / 20);
    for (std::size_t c = 0; c < n_concepts; ++c) {
        ConceptSpec cs;
        cs.mean.assign(d, separation * static_cast<double>(c));
        cs.scale = 1.0;
        spec.concepts.push_back(std::move(cs));
    }
    return spec;
}

namespace {

std::vector<double> sample_normal(const ConceptSpec& c, Rng& rng) {
    std::vector<double> x(c.mean.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = c.mean[j] + c.scale * rng.gaussian();
    return x;
}

// Uniform in the +-6 sigma box around the concept mean, rejected while
// inside the 3 sigma ball: separable by construction yet concept-relative.
std::vector<double> sample_anomaly(const ConceptSpec& c, Rng& rng) {
    const std::size_t d = c.mean.size();
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<double> x(d);
        double dist2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double off = rng.uniform(-6.0, 6.0);
            x[j] = c.mean[j] + c.scale * off;
            dist2 += off * off;
        }
        if (dist2 > 9.0) return x;
    }
    throw std::runtime_error("synth: anomaly rejection sampling failed");
}

ConceptSpec lerp_concept(const ConceptSpec& a, const ConceptSpec& b, double t) {
    ConceptSpec c;
    c.mean.resize(a.mean.size());
    for (std::size_t j = 0; j < a.mean.size(); ++j) c.mean[j] = (1.0 - t) * a.mean[j] + t * b.mean[j];
    c.scale = (1.0 - t) * a.scale + t * b.scale;
    return c;
}

}  // namespace

LabeledStream synth_stream(const DriftSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);

    // Concept id per instance plus switch positions.
    std::vector<std::size_t> concept_of(spec.n);
    std::vector<std::size_t> markers;
    if (spec.kind == DriftKind::Recurrent) {
        std::size_t t = 0, cid = 0;
        while (t < spec.n) {
            std::size_t len = spec.min_segment + rng.index(spec.max_segment - spec.min_segment + 1);
            len = std::min(len, spec.n - t);
            for (std::size_t k = 0; k < len; ++k) concept_of[t + k] = cid;
            t += len;
            if (t < spec.n) {
                markers.push_back(t);
                cid = (cid + 1) % spec.concepts.size();  // revisits earlier concepts
            }
        }
    } else {
        // one segment per concept, in order; the last absorbs the remainder
        const std::size_t k = spec.concepts.size();
        std::vector<std::size_t> lens(k);
        std::size_t used = 0;
        for (std::size_t c = 0; c + 1 < k; ++c) {
            const std::size_t budget_left = spec.n - used - (k - 1 - c) * spec.min_segment;
            std::size_t len = spec.min_segment + rng.index(spec.max_segment - spec.min_segment + 1);
            len = std::min(len, budget_left);
            lens[c] = len;
            used += len;
        }
        lens[k - 1] = spec.n - used;
        std::size_t t = 0;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t i = 0; i < lens[c]; ++i) concept_of[t + i] = c;
            t += lens[c];
            if (c + 1 < k) markers.push_back(t);
        }
    }

    LabeledStream out;
    out.name = std::string("synth-") + drift_kind_name(spec.kind);
    out.labels = std::vector<int>{};
    out.instances.reserve(spec.n);
    out.labels->reserve(spec.n);
    out.drift_markers = markers;

    for (std::size_t t = 0; t < spec.n; ++t) {
        std::size_t cid = concept_of[t];
        ConceptSpec active = spec.concepts[cid];

        if (spec.kind == DriftKind::Gradual || spec.kind == DriftKind::Incremental) {
            // Inside a transition window after a switch, blend with the
            // previous concept: gradual mixes draws, incremental morphs
            // the parameters.
            for (std::size_t m : markers) {
                if (t >= m && t < m + spec.transition_width && concept_of[m] == cid && m > 0) {
                    const std::size_t prev = concept_of[m - 1];
                    const double frac =
                        static_cast<double>(t - m + 1) / static_cast<double>(spec.transition_width);
                    if (spec.kind == DriftKind::Gradual) {
                        if (!rng.bernoulli(frac)) active = spec.concepts[prev];
                    } else {
                        active = lerp_concept(spec.concepts[prev], spec.concepts[cid], frac);
                    }
                    break;
                }
            }
        }

        const bool anomalous = spec.anomaly_rate > 0.0 && rng.bernoulli(spec.anomaly_rate);
        out.instances.push_back(anomalous ? sample_anomaly(active, rng) : sample_normal(active, rng));
        out.labels->push_back(anomalous ? 1 : 0);
    }
    return out;
}

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc_roc: length mismatch");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc_roc: both classes required");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups
    double rank_pos_sum = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k)
            if (labels[idx[k]] != 0) rank_pos_sum += avg_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_pos_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc_pr: length mismatch");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0;
    if (n_pos == 0) throw std::invalid_argument("auc_pr: at least one positive required");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t rank = 1; rank <= idx.size(); ++rank) {
        if (labels[idx[rank - 1]] != 0) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(rank);
        }
    }
    return ap / static_cast<double>(n_pos);
}

EvalReport evaluate(const std::vector<Verdict>& verdicts, const std::vector<int>& labels,
                    std::size_t window, const std::vector<std::size_t>& drift_markers) {
    if (verdicts.size() != labels.size())
        throw std::invalid_argument("evaluate: verdicts and labels misaligned (" +
                                    std::to_string(verdicts.size()) + " vs " +
                                    std::to_string(labels.size()) + ")");
    if (verdicts.empty()) throw std::invalid_argument("evaluate: empty input");
    if (window == 0) throw std::invalid_argument("evaluate: window must be positive");

    std::vector<double> scores(verdicts.size());
    for (std::size_t i = 0; i < verdicts.size(); ++i) scores[i] = verdicts[i].score;

    EvalReport report;
    report.drift_markers = drift_markers;
    report.aucroc = auc_roc(scores, labels);
    report.aucpr = auc_pr(scores, labels);

    std::size_t fp = 0, tn = 0, fn = 0, tp = 0;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        const bool flagged = verdicts[i].is_anomaly;
        if (labels[i] != 0)
            (flagged ? tp : fn) += 1;
        else
            (flagged ? fp : tn) += 1;
    }
    report.fpr = (fp + tn) ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0;
    report.fnr = (fn + tp) ? static_cast<double>(fn) / static_cast<double>(fn + tp) : 0.0;

    for (std::size_t start = 0; start < verdicts.size(); start += window) {
        const std::size_t end = std::min(verdicts.size(), start + window);
        WindowStat ws;
        ws.start = start;
        double usum = 0.0;
        bool has_pos = false, has_neg = false;
        for (std::size_t i = start; i < end; ++i) {
            usum += verdicts[i].uncertainty;
            (labels[i] != 0 ? has_pos : has_neg) = true;
        }
        ws.mean_uncertainty = usum / static_cast<double>(end - start);
        if (has_pos && has_neg) {
            std::vector<double> s(scores.begin() + start, scores.begin() + end);
            std::vector<int> l(labels.begin() + start, labels.begin() + end);
            ws.aucroc = auc_roc(s, l);
        }
        report.windows.push_back(std::move(ws));
    }
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["global"] = {{"aucroc", report.aucroc},
                   {"aucpr", report.aucpr},
                   {"fpr", report.fpr},
                   {"fnr", report.fnr}};
    j["windows"] = nlohmann::ordered_json::array();
    for (const WindowStat& w : report.windows) {
        nlohmann::ordered_json wj;
        wj["start"] = w.start;
        if (w.aucroc)
            wj["aucroc"] = *w.aucroc;
        else
            wj["aucroc"] = nullptr;
        wj["mean_uncertainty"] = w.mean_uncertainty;
        j["windows"].push_back(std::move(wj));
    }
    j["drift_markers"] = report.drift_markers;
    return j.dump(2);
}

}  // namespace driftwatch
