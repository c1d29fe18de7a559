#pragma once

// JSON checkpoints for heads and models.
//
//   {"kind": "full" | "slimspec" | "truncated" | "routed"
//            | "toy_target" | "drafter_backbone",
//    "v": V, "d": d, "r" / "v_tr" / "k": ..., "index_map": [...],
//    "matrices": {name: {"rows", "cols", "data": [row-major doubles]}}}
//
// Doubles are written in shortest round-trip form, so save then load is
// bitwise.

#include <filesystem>

#include "json.hpp"
#include "specdec/heads.hpp"
#include "specdec/models.hpp"

namespace specdec {

nlohmann::json to_json(const DraftHead<double>& head);
nlohmann::json to_json(const ToyTargetModel& model);
nlohmann::json to_json(const DrafterBackbone& backbone);

DraftHead<double> head_from_json(const nlohmann::json& doc);
ToyTargetModel target_from_json(const nlohmann::json& doc);
DrafterBackbone backbone_from_json(const nlohmann::json& doc);

/// Throws IoError when the file cannot be opened, ConfigError when it is not
/// valid JSON.
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace specdec
