#include "mediqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "mediqa/error.hpp"

namespace mediqa::model {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian host");

constexpr char kMagic[4] = {'M', 'I', 'Q', 'A'};

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const std::string& what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string string(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void doubles(double* dst, std::size_t n, const std::string& what) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) {
      throw CorruptCheckpointError("truncated checkpoint while reading " + what);
    }
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) {
      throw CorruptCheckpointError("truncated checkpoint while reading " + what);
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json blocks_json(const blocks::BlockConfig& c) {
  return {{"image_size", c.image_size}, {"embed_dim", c.embed_dim},   {"num_heads", c.num_heads},
          {"depth", c.depth},           {"patch_size", c.patch_size}, {"window_size", c.window_size},
          {"mlp_ratio", c.mlp_ratio},   {"sstb_scale", c.sstb_scale}, {"seed", c.seed}};
}

blocks::BlockConfig blocks_from(const nlohmann::json& j) {
  blocks::BlockConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.window_size = j.at("window_size").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  c.sstb_scale = j.at("sstb_scale").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

nlohmann::json parse_config(const std::string& json, const std::string& kind) {
  try {
    auto j = nlohmann::json::parse(json);
    if (j.value("kind", std::string()) != kind) {
      throw CorruptCheckpointError("checkpoint holds '" + j.value("kind", std::string("?")) +
                                   "', expected '" + kind + "'");
    }
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError(std::string("bad config snapshot: ") + e.what());
  }
}

Checkpoint snapshot(const blocks::ParamList& params, std::string config_json) {
  Checkpoint ckpt;
  ckpt.config_json = std::move(config_json);
  for (const auto& [name, t] : params) {
    ckpt.tensors.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  }
  return ckpt;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > 0xFFFF || t.shape.size() > 0xFF) {
      throw ContractError("tensor '" + t.name + "' cannot be encoded");
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data.data());
    out.insert(out.end(), p, p + t.data.size() * sizeof(double));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config_json.size()));
  out.insert(out.end(), ckpt.config_json.begin(), ckpt.config_json.end());
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.string(4, "magic") != std::string(kMagic, 4)) {
    throw CorruptCheckpointError("bad magic; not a checkpoint");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CorruptCheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>("tensor count");
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const auto len = in.get<std::uint16_t>("tensor #" + std::to_string(i) + " name length");
    t.name = in.string(len, "tensor #" + std::to_string(i) + " name");
    const auto rank = in.get<std::uint8_t>("rank of " + t.name);
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto extent = in.get<std::uint64_t>("shape of " + t.name);
      if (extent == 0 || extent > bytes.size()) {
        throw CorruptCheckpointError("implausible extent in shape of " + t.name);
      }
      t.shape.push_back(extent);
      n *= extent;
    }
    if (n > bytes.size()) throw CorruptCheckpointError("truncated checkpoint while reading data of " + t.name);
    t.data.resize(n);
    in.doubles(t.data.data(), n, "data of " + t.name);
    ckpt.tensors.push_back(std::move(t));
  }
  const auto cfg_len = in.get<std::uint32_t>("config length");
  ckpt.config_json = in.string(cfg_len, "config snapshot");
  if (!in.at_end()) throw CorruptCheckpointError("trailing bytes after config snapshot");
  return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::string config_to_json(const ModelConfig& config) {
  nlohmann::json j{{"kind", "mediqa-model"},
                   {"blocks", blocks_json(config.blocks)},
                   {"num_params", config.num_params},
                   {"weight_floor", config.weight_floor},
                   {"denom_eps", config.denom_eps}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& json) {
  const auto j = parse_config(json, "mediqa-model");
  try {
    ModelConfig c;
    c.blocks = blocks_from(j.at("blocks"));
    c.num_params = j.at("num_params").get<std::size_t>();
    c.weight_floor = j.at("weight_floor").get<double>();
    c.denom_eps = j.at("denom_eps").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError(std::string("bad config snapshot: ") + e.what());
  }
}

std::string block_config_to_json(const blocks::BlockConfig& config, const std::string& kind) {
  return nlohmann::json{{"kind", kind}, {"blocks", blocks_json(config)}}.dump();
}

blocks::BlockConfig block_config_from_json(const std::string& json, const std::string& kind) {
  const auto j = parse_config(json, kind);
  try {
    return blocks_from(j.at("blocks"));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError(std::string("bad config snapshot: ") + e.what());
  }
}

void assign_parameters(const Checkpoint& ckpt, const blocks::ParamList& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, tensor] = params[i];
    if (i >= ckpt.tensors.size()) throw CorruptCheckpointError("missing tensor '" + name + "'");
    const auto& stored = ckpt.tensors[i];
    if (stored.name != name) {
      throw CorruptCheckpointError("tensor '" + stored.name + "' found where '" + name + "' expected");
    }
    if (stored.shape != tensor.shape()) {
      throw CorruptCheckpointError("tensor '" + name + "' has shape " + nc::shape_string(stored.shape) +
                                   ", expected " + nc::shape_string(tensor.shape()));
    }
    auto dst = tensor;
    std::copy(stored.data.begin(), stored.data.end(), dst.mutable_data().begin());
  }
  if (ckpt.tensors.size() > params.size()) {
    throw CorruptCheckpointError("unexpected tensor '" + ckpt.tensors[params.size()].name + "'");
  }
}

void save_checkpoint(const MedIQAModel& model, const std::string& path) {
  write_checkpoint(path, snapshot(model.parameters(), config_to_json(model.config())));
}

MedIQAModel model_from_checkpoint(const Checkpoint& ckpt, const LoadOptions& options) {
  MedIQAModel model(model_config_from_json(ckpt.config_json));
  assign_parameters(ckpt, model.parameters());
  if (options.reset_heads) model.reset_heads(options.head_seed);
  return model;
}

MedIQAModel load_checkpoint(const std::string& path, const LoadOptions& options) {
  return model_from_checkpoint(read_checkpoint(path), options);
}

void save_classifier(const blocks::VitClassifier& classifier, const std::string& path) {
  write_checkpoint(path, snapshot(classifier.parameters(),
                                  block_config_to_json(classifier.config(), "mediqa-classifier")));
}

blocks::VitClassifier load_classifier(const std::string& path) {
  const auto ckpt = read_checkpoint(path);
  blocks::VitClassifier classifier(block_config_from_json(ckpt.config_json, "mediqa-classifier"));
  assign_parameters(ckpt, classifier.parameters());
  return classifier;
}

}  // namespace mediqa::model
