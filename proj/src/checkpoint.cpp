#include "pbcnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace pbcnn {

namespace {

constexpr char kMagic[4] = {'P', 'B', 'N', 'N'};
constexpr std::uint8_t kDtypeFloat32 = 1;

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buffer_.insert(buffer_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  const std::vector<char>& buffer() const { return buffer_; }

 private:
  std::vector<char> buffer_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data_[pos_++]) << (8 * i));
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::string string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  nlohmann::json meta;
  meta["arch"] = model.arch().to_json();
  meta["placement"] = std::vector<int>(model.placement().bayesian_groups.begin(), model.placement().bayesian_groups.end());
  meta["seed"] = model.seed();
  meta["step"] = model.step();
  meta["extra"] = extra;
  const std::string meta_text = meta.dump();

  auto state = model.named_state();
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.bytes(meta_text.data(), meta_text.size());
  w.u32(static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, tensor] : state) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(kDtypeFloat32);
    w.u32(static_cast<std::uint32_t>(tensor->rank()));
    for (std::size_t d : tensor->shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : tensor->values()) w.f32(v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint for writing: " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint: " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  if (r.string(4, "magic") != std::string(kMagic, 4)) {
    throw CheckpointError(CheckpointError::Kind::BadMagic, "not a PBNN checkpoint: " + path.string());
  }
  const std::uint16_t version = r.u16("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t meta_len = r.u32("metadata length");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.string(meta_len, "metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, std::string("bad checkpoint metadata: ") + e.what());
  }

  LoadedCheckpoint loaded;
  try {
    PlacementConfig placement;
    for (int g : meta.at("placement")) placement.bayesian_groups.insert(g);
    loaded.model = Model::build(ArchSpec::from_json(meta.at("arch")), placement, meta.at("seed").get<std::uint64_t>());
    loaded.model.set_step(meta.at("step").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, std::string("bad checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, std::string("bad checkpoint architecture: ") + e.what());
  }

  std::map<std::string, BasicTensor<float>*> slots;
  for (auto& [name, tensor] : loaded.model.named_state()) slots.emplace(name, tensor);

  const std::uint32_t count = r.u32("tensor count");
  if (count != slots.size()) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                          "checkpoint holds " + std::to_string(count) + " tensors, architecture expects " +
                              std::to_string(slots.size()));
  }
  std::map<std::string, BasicTensor<float>> decoded;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.string(r.u32("tensor name length"), "tensor name");
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != kDtypeFloat32) {
      throw CheckpointError(CheckpointError::Kind::Corrupt, name + ": unknown dtype tag " + std::to_string(dtype));
    }
    Shape shape(r.u32("rank"));
    for (auto& d : shape) d = r.u32("dims");
    auto slot = slots.find(name);
    if (slot == slots.end()) {
      throw CheckpointError(CheckpointError::Kind::ShapeMismatch, "unexpected tensor '" + name + "'");
    }
    if (shape != slot->second->shape()) {
      throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                            name + ": stored shape " + shape_to_string(shape) + " disagrees with architecture " +
                                shape_to_string(slot->second->shape()));
    }
    r.need(shape_numel(shape) * 4, "tensor payload");
    std::vector<float> values(shape_numel(shape));
    for (auto& v : values) v = r.f32("tensor payload");
    if (!decoded.emplace(name, BasicTensor<float>(shape, std::move(values))).second) {
      throw CheckpointError(CheckpointError::Kind::Corrupt, "duplicate tensor '" + name + "'");
    }
  }
  if (!r.at_end()) throw CheckpointError(CheckpointError::Kind::Corrupt, "trailing bytes after last tensor");

  for (auto& [name, slot] : slots) *slot = std::move(decoded.at(name));
  loaded.metadata = std::move(meta);
  return loaded;
}

}  // namespace pbcnn
