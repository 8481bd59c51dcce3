#include <bit>
#include <cstring>
#include <filesystem>
#include <map>
#include <sstream>

#include "hgtnet/config.hpp"
#include "hgtnet/errors.hpp"
#include "hgtnet/io.hpp"
#include "hgtnet/training.hpp"

namespace hgt::train {
namespace {

constexpr char kMagic[4] = {'H', 'G', 'T', 'N'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& name) : bytes_(bytes), name_(name) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(CheckpointErrorKind::kTruncated, name_ + ": truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

void write_table(Writer& w, const std::vector<NamedTensor>& table) {
  w.u64(table.size());
  for (const NamedTensor& t : table) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t e : t.shape) w.u64(e);
    for (double v : t.data) w.f64(v);
  }
}

std::vector<NamedTensor> read_table(Reader& r, const std::string& name) {
  const std::uint64_t count = r.u64();
  // Each entry needs at least a name length and a rank byte.
  if (count > r.remaining() / 5) throw CheckpointError(CheckpointErrorKind::kTruncated, name + ": table truncated");
  std::vector<NamedTensor> out(count);
  for (NamedTensor& t : out) {
    t.name = r.str(r.u32());
    const std::uint8_t rank = r.u8();
    std::uint64_t numel = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
      t.shape.push_back(r.u64());
      if (t.shape.back() != 0 && numel > r.remaining() / t.shape.back())
        throw CheckpointError(CheckpointErrorKind::kTruncated, name + ": tensor '" + t.name + "' truncated");
      numel *= t.shape.back();
    }
    r.need(numel * 8);
    t.data.resize(numel);
    for (double& v : t.data) v = r.f64();
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::vector<double> parse_doubles(const config::Entry& e, std::size_t expect) {
  std::vector<double> out;
  std::stringstream ss(e.value);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(config::parse_double({e.key, item, e.line}));
  if (out.size() != expect) throw ConfigError(e.key + ": expected " + std::to_string(expect) + " values");
  return out;
}

std::string metadata_text(const Checkpoint& c) {
  for (const std::string& n : c.class_names) {
    if (n.find_first_of(",\n#") != std::string::npos) throw ContractError("class name '" + n + "' cannot be stored");
  }
  std::string out = config::model_to_text(c.model_config) + config::train_to_text(c.train_config);
  const auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  kv("state.epoch", std::to_string(c.epoch));
  kv("state.best_test_loss", config::format_double(c.best_test_loss));
  kv("state.best_epoch", std::to_string(c.best_epoch));
  kv("state.stop_counter", std::to_string(c.stop_counter));
  kv("state.adam_step", std::to_string(c.adam_step));
  kv("data.classes", join(c.class_names));
  kv("data.mean", config::format_double(c.stats.mean[0]) + "," + config::format_double(c.stats.mean[1]) + "," +
                      config::format_double(c.stats.mean[2]));
  kv("data.std", config::format_double(c.stats.std[0]) + "," + config::format_double(c.stats.std[1]) + "," +
                     config::format_double(c.stats.std[2]));
  for (const EpochRecord& r : c.history) {
    kv("history." + std::to_string(r.epoch), config::format_double(r.train_loss) + "," +
                                                 config::format_double(r.train_acc) + "," +
                                                 config::format_double(r.test_loss) + "," +
                                                 config::format_double(r.test_acc));
  }
  return out;
}

void apply_metadata(Checkpoint& c, const std::string& text, const std::string& name) {
  for (const config::Entry& e : config::parse(text, name)) {
    if (config::set_model_field(c.model_config, e) || config::set_train_field(c.train_config, e)) continue;
    if (e.key == "state.epoch") c.epoch = config::parse_u64(e);
    else if (e.key == "state.best_test_loss") c.best_test_loss = config::parse_double(e);
    else if (e.key == "state.best_epoch") c.best_epoch = config::parse_u64(e);
    else if (e.key == "state.stop_counter") c.stop_counter = config::parse_u64(e);
    else if (e.key == "state.adam_step") c.adam_step = config::parse_u64(e);
    else if (e.key == "data.classes") {
      std::stringstream ss(e.value);
      for (std::string item; std::getline(ss, item, ',');) c.class_names.push_back(item);
    } else if (e.key == "data.mean") {
      const auto v = parse_doubles(e, 3);
      std::copy(v.begin(), v.end(), c.stats.mean.begin());
    } else if (e.key == "data.std") {
      const auto v = parse_doubles(e, 3);
      std::copy(v.begin(), v.end(), c.stats.std.begin());
    } else if (e.key.rfind("history.", 0) == 0) {
      const auto v = parse_doubles(e, 4);
      c.history.push_back({std::stoul(e.key.substr(8)), v[0], v[1], v[2], v[3]});
    } else {
      throw ConfigError("unknown key '" + e.key + "'");
    }
  }
}

NamedTensor named(const std::string& name, const Shape& shape, std::span<const double> data) {
  return {name, shape, std::vector<double>(data.begin(), data.end())};
}

}  // namespace

Checkpoint make_checkpoint(const model::HGTNet& net, const AdamState* state) {
  Checkpoint c;
  c.model_config = net.config();
  for (const auto& [name, t] : net.params()) c.params.push_back(named(name, t.shape(), t.data()));
  if (state != nullptr) {
    c.adam_step = state->step;
    std::size_t i = 0;
    for (const auto& [name, t] : net.params()) {
      c.moments.push_back(named("m/" + name, t.shape(), state->m.at(i)));
      c.moments.push_back(named("v/" + name, t.shape(), state->v.at(i)));
      ++i;
    }
  }
  return c;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const std::string meta = metadata_text(ckpt);
  w.u64(meta.size());
  w.bytes(meta.data(), meta.size());
  write_table(w, ckpt.params);
  write_table(w, ckpt.moments);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& name) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(CheckpointErrorKind::kBadMagic, name + ": not a checkpoint (bad magic)");
  Reader r(bytes, name);
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::kVersionMismatch,
                          name + ": checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  Checkpoint c;
  const std::uint64_t meta_len = r.u64();
  const std::string meta = r.str(meta_len);
  try {
    apply_metadata(c, meta, name);
    c.model_config.validate();
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, name + ": bad metadata: " + e.what());
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, name + ": bad metadata: " + e.what());
  }
  c.params = read_table(r, name);
  c.moments = read_table(r, name);
  if (!r.done()) throw CheckpointError(CheckpointErrorKind::kMalformed, name + ": trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw CheckpointError(CheckpointErrorKind::kMissing, "checkpoint not found: " + path.string());
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw CheckpointError(CheckpointErrorKind::kMissing, e.what());
  }
  return decode_checkpoint(bytes, path.string());
}

namespace {

std::map<std::string, const NamedTensor*> index_table(const std::vector<NamedTensor>& table) {
  std::map<std::string, const NamedTensor*> idx;
  for (const NamedTensor& t : table) {
    if (!idx.emplace(t.name, &t).second)
      throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint repeats tensor '" + t.name + "'");
  }
  return idx;
}

const NamedTensor& lookup(const std::map<std::string, const NamedTensor*>& idx, const std::string& name,
                          const Tensor& like) {
  const auto it = idx.find(name);
  if (it == idx.end()) throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint lacks tensor '" + name + "'");
  if (it->second->shape != like.shape())
    throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint tensor '" + name + "' has shape " +
                                                               shape_str(it->second->shape) + ", model expects " +
                                                               shape_str(like.shape()));
  return *it->second;
}

}  // namespace

void restore_parameters(model::HGTNet& net, const Checkpoint& ckpt) {
  const auto idx = index_table(ckpt.params);
  if (idx.size() != net.params().size())
    throw CheckpointError(CheckpointErrorKind::kMalformed,
                          "checkpoint has " + std::to_string(idx.size()) + " parameters, model has " +
                              std::to_string(net.params().size()));
  for (auto& [name, t] : net.params()) {
    const NamedTensor& src = lookup(idx, name, t);
    std::copy(src.data.begin(), src.data.end(), t.mutable_data().begin());
  }
}

AdamState restore_adam(const model::HGTNet& net, const Checkpoint& ckpt) {
  if (ckpt.moments.empty()) throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint has no optimizer state");
  const auto idx = index_table(ckpt.moments);
  if (idx.size() != 2 * net.params().size())
    throw CheckpointError(CheckpointErrorKind::kMalformed, "optimizer state does not match the parameter list");
  AdamState s;
  s.step = ckpt.adam_step;
  for (const auto& [name, t] : net.params()) {
    s.m.push_back(lookup(idx, "m/" + name, t).data);
    s.v.push_back(lookup(idx, "v/" + name, t).data);
  }
  return s;
}

}  // namespace hgt::train
