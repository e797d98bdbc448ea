#pragma once

#include <string>

#include "driftwatch/dsd.hpp"
#include "driftwatch/iec.hpp"

#include "json.hpp"

namespace driftwatch {

// Versioned JSON model container: layer dims, activations, and row-major
// weight arrays. Numbers round-trip losslessly at float64 (shortest
// round-trip formatting on write, exact binary64 parse on read).
inline constexpr int kModelFormatVersion = 1;

nlohmann::ordered_json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

nlohmann::ordered_json autoencoder_to_json(const Autoencoder& model);
Autoencoder autoencoder_from_json(const nlohmann::json& j);

nlohmann::ordered_json classifier_to_json(const EvidentialClassifier& clf);
EvidentialClassifier classifier_from_json(const nlohmann::json& j);

nlohmann::ordered_json hypernetwork_to_json(const Hypernetwork& h);
// Validates the stored per-layer shape manifest against `target`.
Hypernetwork hypernetwork_from_json(const nlohmann::json& j, const Autoencoder& target);

}  // namespace driftwatch
