#include "fadvlp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace fadvlp {

using Json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'F', 'A', 'D', 'V', 'L', 'P', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "payload is written in native little-endian order");

Json config_json(const ModelConfig& c) {
  Json j;
  j["image_size"] = c.image_size;
  j["image_channels"] = c.image_channels;
  j["stage_widths"] = c.stage_widths;
  j["stage_strides"] = c.stage_strides;
  j["vocab_size"] = c.vocab_size;
  j["width"] = c.width;
  j["text_layers"] = c.text_layers;
  j["multimodal_layers"] = c.multimodal_layers;
  j["heads"] = c.heads;
  j["ffn_width"] = c.ffn_width;
  j["joint_dim"] = c.joint_dim;
  j["max_text_len"] = c.max_text_len;
  j["dropout"] = c.dropout;
  j["temperature"] = c.temperature;
  j["init_seed"] = c.init_seed;
  return j;
}

ModelConfig config_from(const Json& j) {
  ModelConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.image_channels = j.at("image_channels").get<std::size_t>();
  c.stage_widths = j.at("stage_widths").get<std::vector<std::size_t>>();
  c.stage_strides = j.at("stage_strides").get<std::vector<std::size_t>>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.text_layers = j.at("text_layers").get<std::size_t>();
  c.multimodal_layers = j.at("multimodal_layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_width = j.at("ffn_width").get<std::size_t>();
  c.joint_dim = j.at("joint_dim").get<std::size_t>();
  c.max_text_len = j.at("max_text_len").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

std::string config_to_json(const ModelConfig& config) { return config_json(config).dump(2); }

ModelConfig config_from_json(const std::string& text) { return config_from(Json::parse(text)); }

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Json header;
  header["version"] = kCheckpointVersion;
  header["config"] = config_json(ckpt.config);
  header["vocabulary"] = ckpt.vocabulary;
  header["task"] = ckpt.task;
  header["classes"] = ckpt.classes;
  header["optimizer_step"] = ckpt.optimizer_step;
  header["learning_rate"] = ckpt.learning_rate;
  header["rng_state"] = ckpt.rng_state;
  Json counters = Json::object();
  for (const auto& [k, v] : ckpt.counters) counters[k] = v;
  header["counters"] = counters;
  Json manifest = Json::array();
  std::uint64_t offset = 0;
  for (const auto& a : ckpt.arrays) {
    if (shape_numel(a.shape) != a.values.size()) throw CheckpointError("array '" + a.name + "' shape mismatch");
    Json e;
    e["name"] = a.name;
    e["shape"] = a.shape;
    e["dtype"] = "float32";
    e["offset"] = offset;
    e["count"] = a.values.size();
    manifest.push_back(e);
    offset += a.values.size() * sizeof(float);
  }
  header["arrays"] = manifest;
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(sizeof(kMagic) + 8 + text.size() + offset);
  std::uint8_t* p = out.data();
  std::memcpy(p, kMagic, sizeof(kMagic));
  p += sizeof(kMagic);
  const std::uint64_t len = text.size();
  std::memcpy(p, &len, 8);
  p += 8;
  std::memcpy(p, text.data(), text.size());
  p += text.size();
  for (const auto& a : ckpt.arrays) {
    std::memcpy(p, a.values.data(), a.values.size() * sizeof(float));
    p += a.values.size() * sizeof(float);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof(kMagic), 8);
  const std::size_t payload_start = sizeof(kMagic) + 8 + len;
  if (len > bytes.size() || payload_start > bytes.size()) throw CheckpointError("truncated checkpoint header");
  Json header;
  try {
    header = Json::parse(bytes.begin() + sizeof(kMagic) + 8, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    ckpt.config = config_from(header.at("config"));
    ckpt.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    ckpt.task = header.at("task").get<std::string>();
    ckpt.classes = header.at("classes").get<std::vector<std::string>>();
    ckpt.optimizer_step = header.at("optimizer_step").get<std::int64_t>();
    ckpt.learning_rate = header.at("learning_rate").get<double>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    for (const auto& [k, v] : header.at("counters").items()) ckpt.counters[k] = v.get<std::uint64_t>();
    const std::size_t payload = bytes.size() - payload_start;
    for (const auto& e : header.at("arrays")) {
      NamedArray a;
      a.name = e.at("name").get<std::string>();
      a.shape = e.at("shape").get<Shape>();
      if (e.at("dtype").get<std::string>() != "float32") throw CheckpointError("array '" + a.name + "' is not float32");
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      if (count != shape_numel(a.shape)) throw CheckpointError("array '" + a.name + "' count does not match shape");
      if (offset > payload || count * sizeof(float) > payload - offset) {
        throw CheckpointError("truncated checkpoint payload at array '" + a.name + "'");
      }
      a.values.resize(count);
      std::memcpy(a.values.data(), bytes.data() + payload_start + offset, count * sizeof(float));
      ckpt.arrays.push_back(std::move(a));
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void load_model_parameters(const Checkpoint& ckpt, FadVlpModel<float>& model) {
  if (!(ckpt.config == model.config())) {
    throw CheckpointError("checkpoint model config does not match: checkpoint " + config_json(ckpt.config).dump() +
                          " vs model " + config_json(model.config()).dump());
  }
  std::vector<const NamedArray*> sources;
  for (const auto& [name, t] : model.store().entries()) {
    const NamedArray* a = ckpt.find("model." + name);
    if (a == nullptr) throw CheckpointError("checkpoint lacks parameter '" + name + "'");
    if (a->shape != t.shape()) throw CheckpointError("parameter '" + name + "' has shape " + shape_str(a->shape));
    sources.push_back(a);
  }
  std::size_t i = 0;
  for (const auto& [name, t] : model.store().entries()) {
    Tensor<float> dst = t;
    std::copy(sources[i]->values.begin(), sources[i]->values.end(), dst.mutable_data().begin());
    ++i;
  }
}

}  // namespace fadvlp
