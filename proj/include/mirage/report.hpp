#pragma once

#include <span>
#include <string>

#include "json.hpp"
#include "mirage/config.hpp"
#include "mirage/protocol.hpp"

namespace mirage::report {

using nlohmann::json;

/// Keys sorted, two-space indentation, floats as fixed with six decimals.
std::string format_json(const json& doc);

json config_json(const config::RunConfig& config);
json diagnostics_json(const eval::Diagnostics& d);
json train_log_json(const eval::TrainLog& log);
json subsets_json(std::span<const eval::SubsetResult> subsets);

/// Per-run results plus per-arm means over seeds; no wall-clock fields.
json protocol_json(const config::RunConfig& config, const eval::ProtocolReport& report);
/// Wall-clock seconds per run, kept apart so the main report stays reproducible.
json timing_json(const eval::ProtocolReport& report);

/// One evaluated checkpoint.
json eval_json(const config::RunConfig& config, config::Arm arm, std::span<const eval::SubsetResult> subsets);

/// Aligned plain-text tables: clean subsets with an Avg column, then one
/// column per degradation condition when any are present.
std::string subsets_table(std::span<const eval::SubsetResult> subsets, const std::string& row_label);
std::string protocol_table(const config::RunConfig& config, const eval::ProtocolReport& report);

}  // namespace mirage::report
