#pragma once

#include <string>

#include "stratkit/simbench.hpp"

namespace stratkit::config {

inline constexpr int kSchemaVersion = 1;

/// JSON run configuration for `stratkit simulate`. Every key except
/// schema_version is optional and defaults to the MCConfig default; unknown
/// keys are rejected.
struct RunConfig {
    int schema_version = kSchemaVersion;
    simbench::MCConfig mc;

    bool operator==(const RunConfig& other) const;
};

/// Throws SchemaError on malformed JSON, wrong types, unknown keys or an
/// unsupported schema_version, and on grids rejected by check_config.
RunConfig parse(const std::string& text);
RunConfig load(const std::string& path);
std::string serialize(const RunConfig& config);

}  // namespace stratkit::config
