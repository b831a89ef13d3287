#include <bit>
#include <cmath>
#include <cstring>

#include "byteio.hpp"
#include "h2lo/error.hpp"
#include "h2lo/trainer.hpp"

namespace h2lo {

namespace {

constexpr char kMagic[8] = {'H', '2', 'L', 'O', 'C', 'K', 'P', '1'};
constexpr std::size_t kHeaderBytes = sizeof kMagic + 4;

nlohmann::ordered_json best_json(const BestRecord& b) {
  nlohmann::ordered_json j;
  j["epoch"] = b.epoch;
  j["val_psnr"] = std::isfinite(b.val_psnr) ? nlohmann::ordered_json(b.val_psnr) : nlohmann::ordered_json(nullptr);
  j["val_ssim"] = b.val_ssim;
  return j;
}

BestRecord best_from_json(const nlohmann::json& j) {
  BestRecord b;
  b.epoch = j.at("epoch").get<int>();
  if (!j.at("val_psnr").is_null()) b.val_psnr = j.at("val_psnr").get<double>();
  b.val_ssim = j.at("val_ssim").get<double>();
  return b;
}

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) {
    if (s < 0) throw FormatError("negative tensor extent in checkpoint manifest", sizeof kMagic + 4);
    n *= static_cast<std::size_t>(s);
  }
  return n;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const NamedTensor& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::ordered_json m;
  m["version"] = ckpt.version;
  m["config"] = to_json(ckpt.config);
  m["epoch"] = ckpt.epoch;
  m["rng_state"] = ckpt.rng_state;
  m["adam_t"] = ckpt.adam_t;
  m["best"] = best_json(ckpt.best);
  m["history"] = ckpt.history.to_json();
  m["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const NamedTensor& t : ckpt.tensors) {
    if (shape_numel(t.shape) != t.values.size()) throw DataError("tensor " + t.name + " size does not match shape");
    const std::uint64_t len = 4 * t.values.size();
    m["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"byte_offset", offset}, {"byte_len", len}});
    offset += len;
  }
  const std::string text = m.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof kMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const NamedTensor& t : ckpt.tensors)
    for (float f : t.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("checkpoint is truncated", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("not an H2LO checkpoint (bad magic)", 0);
  const std::uint32_t manifest_len = detail::get_u32(bytes, sizeof kMagic);
  if (bytes.size() - kHeaderBytes < manifest_len) throw FormatError("checkpoint manifest is truncated", kHeaderBytes);
  const std::size_t payload = kHeaderBytes + manifest_len;

  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.begin() + kHeaderBytes, bytes.begin() + payload);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint manifest: ") + e.what(), kHeaderBytes);
  }

  Checkpoint c;
  try {
    c.version = m.at("version").get<int>();
    if (c.version != Checkpoint::kVersion) {
      throw FormatError("unsupported checkpoint version " + std::to_string(c.version) + " (expected " +
                            std::to_string(Checkpoint::kVersion) + ")",
                        kHeaderBytes);
    }
    c.config = train_config_from_json(m.at("config"));
    c.epoch = m.at("epoch").get<int>();
    c.rng_state = m.at("rng_state").get<std::string>();
    c.adam_t = m.at("adam_t").get<std::int64_t>();
    c.best = best_from_json(m.at("best"));
    c.history = TrainHistory::from_json(m.at("history"));
    for (const auto& t : m.at("tensors")) {
      NamedTensor nt;
      nt.name = t.at("name").get<std::string>();
      nt.shape = t.at("shape").get<std::vector<int>>();
      const auto off = t.at("byte_offset").get<std::uint64_t>();
      const auto len = t.at("byte_len").get<std::uint64_t>();
      const std::size_t n = shape_numel(nt.shape);
      if (len != 4 * n) throw FormatError("tensor " + nt.name + " byte_len does not match its shape", kHeaderBytes);
      if (off > bytes.size() - payload || len > bytes.size() - payload - off) {
        throw FormatError("tensor " + nt.name + " extends past the end of the file", payload + off);
      }
      nt.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) nt.values[i] = std::bit_cast<float>(detail::get_u32(bytes, payload + off + 4 * i));
      c.tensors.push_back(std::move(nt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint manifest: ") + e.what(), kHeaderBytes);
  } catch (const DataError& e) {
    throw FormatError(std::string("corrupt checkpoint manifest: ") + e.what(), kHeaderBytes);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  detail::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(detail::read_file(path)); }

H2LOModel<float> model_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  H2LOModel<float> model(ckpt.config.effective_model(), 0);
  for (auto& [name, t] : model.named_parameters()) {
    const NamedTensor* v = ckpt.find(prefix + name);
    if (!v) throw FormatError("checkpoint is missing tensor " + prefix + name, 0);
    if (v->shape != t->shape) throw FormatError("checkpoint tensor " + prefix + name + " has the wrong shape", 0);
    t->values = v->values;
  }
  return model;
}

}  // namespace h2lo
