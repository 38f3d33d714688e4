#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mgtta/mgg.hpp"
#include "mgtta/model.hpp"
#include "mgtta/pipeline.hpp"
#include "mgtta/shiftgen.hpp"
#include "mgtta/tta_loss.hpp"

namespace mgtta {

// Container with a JSON manifest (format version, config echo, tensor
// directory with byte offsets) followed by concatenated little-endian f64
// payloads. Loading then saving reproduces the file byte for byte.
struct CheckpointTensor {
  std::string name;
  std::vector<Index> shape;
  std::vector<Scalar> data;
  bool adaptable = false;
};

struct Checkpoint {
  std::string kind;  // "model" | "mgg" | "stats"
  nlohmann::json config;
  nlohmann::json meta;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor& tensor(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint to_checkpoint(const Model& m);
Model model_from_checkpoint(const Checkpoint& ck);

Checkpoint to_checkpoint(const MggWeights& w);
MggWeights mgg_from_checkpoint(const Checkpoint& ck);

Checkpoint to_checkpoint(const SourceStats& s);
SourceStats stats_from_checkpoint(const Checkpoint& ck);

// Dataset file: "MGTD" magic, u32 version, u32 N, u32 input_dim, images as
// N x input_dim little-endian f32, labels as N little-endian u16.
void save_dataset(const std::string& path, const LabeledSet& set);
LabeledSet load_dataset(const std::string& path);

// Metrics files. The JSON carries the run's reproducibility stanza; the CSV
// is one row per batch.
void write_metrics_json(const std::string& path, const RunMetrics& m,
                        const std::string& config_hash, const nlohmann::json& budget,
                        const std::string& version);
void write_metrics_csv(const std::string& path, const RunMetrics& m);

struct LoadedMetrics {
  RunMetrics metrics;
  std::string config_hash;
  nlohmann::json budget;
};
LoadedMetrics read_metrics_json(const std::string& path);

}  // namespace mgtta
