#include "aaunet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "aaunet/config.hpp"
#include "aaunet/errors.hpp"

namespace aaunet {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'A', 'A', 'U', 'N'};

template <typename U>
void put_le(std::string& buf, U v) {
  for (size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string data, std::string where) : data_(std::move(data)), where_(std::move(where)) {}

  bool done() const { return pos_ == data_.size(); }

  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(uint64_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(uint64_t n) const {
    if (data_.size() - pos_ < n) throw IoError("truncated checkpoint: " + where_);
  }
  std::string data_;
  std::string where_;
  size_t pos_ = 0;
};

}  // namespace

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ck) {
  std::string buf(kMagic, 4);
  put_le<uint32_t>(buf, kCheckpointVersion);
  const std::string header = ck.header.dump();
  put_le<uint64_t>(buf, header.size());
  buf += header;
  for (const auto& r : ck.records) {
    if (shape_numel(r.shape) != static_cast<int64_t>(r.values.size())) {
      throw DimensionError("checkpoint record " + r.name + " has " +
                           std::to_string(r.values.size()) + " values for shape " +
                           shape_str(r.shape));
    }
    put_le<uint32_t>(buf, static_cast<uint32_t>(r.name.size()));
    buf += r.name;
    put_le<uint32_t>(buf, static_cast<uint32_t>(r.shape.size()));
    for (int64_t d : r.shape) put_le<uint64_t>(buf, static_cast<uint64_t>(d));
    for (float v : r.values) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_le<uint32_t>(buf, bits);
    }
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) throw IoError("not a checkpoint file: " + path.string());
  const uint32_t version = r.le<uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " +
                  path.string());
  }
  Checkpoint ck;
  const uint64_t hlen = r.le<uint64_t>();
  try {
    ck.header = nlohmann::json::parse(r.bytes(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  while (!r.done()) {
    TensorRecord rec;
    rec.name = r.bytes(r.le<uint32_t>());
    const uint32_t rank = r.le<uint32_t>();
    if (rank > 8) throw IoError("implausible rank in record " + rec.name + ": " + path.string());
    for (uint32_t i = 0; i < rank; ++i) rec.shape.push_back(static_cast<int64_t>(r.le<uint64_t>()));
    const int64_t n = shape_numel(rec.shape);
    if (n < 0 || n > (int64_t(1) << 34)) {
      throw IoError("implausible shape in record " + rec.name + ": " + path.string());
    }
    rec.values.resize(static_cast<size_t>(n));
    for (auto& v : rec.values) {
      const uint32_t bits = r.le<uint32_t>();
      std::memcpy(&v, &bits, 4);
    }
    ck.records.push_back(std::move(rec));
  }
  if (!ck.header.contains("model_config")) {
    throw IoError("checkpoint header lacks model_config: " + path.string());
  }
  return ck;
}

Checkpoint checkpoint_from_model(const Model<float>& model) {
  Checkpoint ck;
  ck.header["model_config"] = to_json(model.config());
  for (const auto& [name, t] : model.params().entries()) {
    ck.records.push_back({name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
  }
  return ck;
}

void load_parameters(Model<float>& model, const Checkpoint& ck) {
  std::set<std::string> expected;
  for (const auto& [name, t] : model.params().entries()) {
    expected.insert(name);
    const TensorRecord* rec = ck.find(name);
    if (!rec) throw ConfigError("checkpoint is missing parameter '" + name + "'");
    if (rec->shape != t.shape()) {
      throw ConfigError("parameter '" + name + "' has shape " + shape_str(rec->shape) +
                        " in the checkpoint but " + shape_str(t.shape()) + " in the model");
    }
  }
  for (const auto& rec : ck.records) {
    if (rec.name.find('/') != std::string::npos) continue;  // optimizer state
    if (!expected.count(rec.name)) {
      throw ConfigError("checkpoint has parameter '" + rec.name + "' unknown to the model");
    }
  }
  for (const auto& [name, t] : model.params().entries()) {
    Tensor<float> handle = t;
    const auto& v = ck.find(name)->values;
    std::copy(v.begin(), v.end(), handle.data().begin());
  }
}

Model<float> model_from_checkpoint(const Checkpoint& ck) {
  const ModelConfig cfg = model_config_from_json(ck.header.at("model_config"));
  cfg.validate();
  Model<float> model(cfg, 0);
  load_parameters(model, ck);
  return model;
}

}  // namespace aaunet
