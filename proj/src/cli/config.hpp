#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ctxdb/store.hpp"
#include "workload.hpp"

namespace ctxdb::cli {

/// Everything a subcommand needs: the synthetic workload plus engine knobs.
struct EngineConfig {
    WorkloadSpec workload;
    StoreConfig store;

    EngineConfig();
};

/// Environment variable naming a config file when --config is not given.
inline constexpr const char* kConfigEnv = "CTXDB_CONFIG";

/// Overlays a JSON document onto `cfg`. Unknown keys are errors.
void apply_json(EngineConfig& cfg, const nlohmann::json& doc);
nlohmann::json to_json(const EngineConfig& cfg);

/// Built-in defaults, overlaid by the file at `explicit_path`, or else by the
/// file named in $CTXDB_CONFIG. Returns the path actually used, if any.
std::optional<std::filesystem::path> load_config(EngineConfig& cfg,
                                                 const std::optional<std::filesystem::path>& explicit_path);

IndexType parse_index_type(const std::string& s);
TwoHopMode parse_two_hop(const std::string& s);
std::string to_string(TwoHopMode m);

}  // namespace ctxdb::cli
