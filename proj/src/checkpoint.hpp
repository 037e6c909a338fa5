#pragma once

#include <string>

#include "config.hpp"
#include "data.hpp"

namespace iadvtext {

/// Text header (format version, task, shapes, vocabulary, labels, config
/// snapshot, tensor declarations) followed by a raw little-endian payload of
/// every parameter tensor in declared order. save/load round-trips
/// bit-identically.
struct LoadedCheckpoint {
  std::string model_id;
  TrainConfig config;
  Vocabulary vocab;
  LabelMap labels;
  ModelParams params;
};

void save_checkpoint(const std::string& path, const std::string& model_id,
                     const TrainConfig& config, const Vocabulary& vocab,
                     const LabelMap& labels, const ModelParams& params);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace iadvtext
