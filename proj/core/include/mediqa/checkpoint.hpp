#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mediqa/blocks.hpp"
#include "mediqa/model.hpp"

namespace mediqa::model {

/// On-disk layout (little-endian):
///   "MIQA" | version u32 = 1 | tensor count u32
///   per tensor: name length u16 | UTF-8 name | rank u8 | dims u64 x rank | f64 data
///   config length u32 | config JSON
struct CheckpointTensor {
  std::string name;
  nc::Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::vector<CheckpointTensor> tensors;
  std::string config_json;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws CorruptCheckpointError on bad magic, version, or truncation.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

std::string config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json);
std::string block_config_to_json(const blocks::BlockConfig& config, const std::string& kind);
blocks::BlockConfig block_config_from_json(const std::string& json, const std::string& kind);

void save_checkpoint(const MedIQAModel& model, const std::string& path);

struct LoadOptions {
  /// Re-initialize the quality heads (stage transition into fine-tuning).
  bool reset_heads = false;
  std::uint64_t head_seed = 0;
};

/// Rebuilds the model from the stored config and assigns every parameter.
/// A missing, extra or mis-shaped tensor raises CorruptCheckpointError
/// naming the first offender.
MedIQAModel load_checkpoint(const std::string& path, const LoadOptions& options = {});
MedIQAModel model_from_checkpoint(const Checkpoint& ckpt, const LoadOptions& options = {});

void save_classifier(const blocks::VitClassifier& classifier, const std::string& path);
blocks::VitClassifier load_classifier(const std::string& path);

/// Assigns checkpoint tensors to `params` by name, in order.
void assign_parameters(const Checkpoint& ckpt, const blocks::ParamList& params);

}  // namespace mediqa::model
