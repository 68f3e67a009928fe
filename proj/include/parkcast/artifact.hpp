#pragma once

#include "parkcast/features.hpp"
#include "parkcast/forest.hpp"
#include "parkcast/mlp.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <variant>

namespace parkcast {

enum class ModelKind { mlp, forest };

std::string_view to_string(ModelKind k) noexcept;  // "ffnn" / "rf"
ModelKind parse_model_kind(std::string_view name);

/// A trained predictor bundled with the schema it was trained on.
struct ModelArtifact {
    ModelKind kind = ModelKind::mlp;
    std::variant<MlpModel, Forest> model;
    FeatureSchema schema;
    Target target = Target::occupancy;
    HorizonGrid horizons;
    nlohmann::json metadata = nlohmann::json::object();

    /// Throws DigestMismatch when `x` was encoded with a different schema.
    std::vector<double> predict(const FeatureVector& x) const;
    Matrix predict_batch(const SupervisedSet& set) const;
    /// SHA-256 of the serialized artifact.
    std::string digest() const;
};

/// Binary container: magic, version, JSON header (kind, target, horizons,
/// schema, schema digest, metadata, payload checksum), raw parameter payload.
std::string serialize_artifact(const ModelArtifact& artifact);
ModelArtifact deserialize_artifact(std::string_view bytes);

void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path);
ModelArtifact load_artifact(const std::filesystem::path& path);

}  // namespace parkcast
