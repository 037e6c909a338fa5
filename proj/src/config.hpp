#pragma once

#include <string>
#include <utility>
#include <vector>

#include "train.hpp"

namespace iadvtext {

using KvList = std::vector<std::pair<std::string, std::string>>;

/// Flat `key = value` file with '#' comments and blank lines.
KvList parse_config_file(const std::string& path);

/// Builds a resolved TrainConfig with precedence flag > file > preset >
/// built-in default. Unknown keys and malformed values are config errors.
/// epsilon defaults to 5.0 for advt/vat/random and 15.0 for the i-methods;
/// xi defaults to 0.1 * epsilon.
TrainConfig build_config(const KvList& file_kv, const KvList& flag_kv);

/// Every key with its resolved value, in a fixed order (checkpoint snapshot).
KvList config_to_kv(const TrainConfig& cfg);

/// Rebuilds a config from a snapshot produced by config_to_kv.
TrainConfig config_from_kv(const KvList& kv);

}  // namespace iadvtext
