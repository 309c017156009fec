#include "synres/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "synres/config.hpp"

namespace synres {

static_assert(std::endian::native == std::endian::little, "payloads are written in host order");

namespace {

constexpr std::string_view kMagic = "synres-container 1";

template <class T>
void append_raw(std::string& out, const T* data, std::size_t count) {
  out.append(reinterpret_cast<const char*>(data), count * sizeof(T));
}

template <class T>
std::vector<T> read_raw(const std::string& payload, const ArrayEntry& e) {
  std::vector<T> out(e.rows * e.cols);
  std::memcpy(out.data(), payload.data() + e.offset, e.bytes());
  return out;
}

const ArrayEntry& find_entry(const Container& c, const std::string& name) {
  for (const auto& e : c.manifest) {
    if (e.name == name) return e;
  }
  throw CorruptFile("manifest entry '" + name + "' is missing");
}

}  // namespace

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

std::string encode_container(const std::string& header_text, const std::vector<ArrayEntry>& manifest,
                             const std::string& payload) {
  std::ostringstream o;
  o << kMagic << "\n" << header_text << "[tensors]\n";
  for (const auto& e : manifest) {
    o << "tensor." << e.name << " = " << e.rows << " " << e.cols << " " << e.width << " " << e.offset << " "
      << e.kind << "\n";
  }
  o << "\n";
  return o.str() + payload;
}

Container decode_container(const std::string& bytes) {
  if (bytes.compare(0, kMagic.size(), kMagic) != 0 || bytes.size() <= kMagic.size() ||
      bytes[kMagic.size()] != '\n') {
    throw CorruptFile("missing 'synres-container 1' signature");
  }
  const auto end = bytes.find("\n\n");
  if (end == std::string::npos) throw CorruptFile("header is not terminated by a blank line");
  const std::string header = bytes.substr(kMagic.size() + 1, end + 1 - kMagic.size() - 1);
  Container c;
  c.payload = bytes.substr(end + 2);
  const auto tensors_at = header.find("[tensors]\n");
  if (tensors_at == std::string::npos) throw CorruptFile("header has no [tensors] section");
  c.header_text = header.substr(0, tensors_at);

  std::vector<KeyValue> entries;
  try {
    entries = parse_key_values(header.substr(tensors_at));
  } catch (const ConfigError& e) {
    throw CorruptFile(std::string("manifest: ") + e.what());
  }
  std::size_t expected_offset = 0;
  for (const auto& kv : entries) {
    if (kv.key.rfind("tensor.", 0) != 0) throw CorruptFile("manifest: unexpected key '" + kv.key + "'");
    ArrayEntry e;
    e.name = kv.key.substr(7);
    std::istringstream fields(kv.value);
    std::string extra;
    if (!(fields >> e.rows >> e.cols >> e.width >> e.offset >> e.kind) || (fields >> extra)) {
      throw CorruptFile("manifest entry '" + e.name + "': malformed '" + kv.value + "'");
    }
    const bool width_ok = (e.kind == 'f' && (e.width == 4 || e.width == 8)) || (e.kind == 'i' && e.width == 4);
    if (!width_ok) throw CorruptFile("manifest entry '" + e.name + "': unsupported element type");
    if (e.offset != expected_offset) {
      throw CorruptFile("manifest entry '" + e.name + "': offset " + std::to_string(e.offset) + ", expected " +
                        std::to_string(expected_offset));
    }
    if (e.offset + e.bytes() > c.payload.size()) {
      throw CorruptFile("manifest entry '" + e.name + "': payload truncated (" + std::to_string(c.payload.size()) +
                        " bytes, need " + std::to_string(e.offset + e.bytes()) + ")");
    }
    expected_offset += e.bytes();
    c.manifest.push_back(std::move(e));
  }
  if (expected_offset != c.payload.size()) {
    throw CorruptFile("payload has " + std::to_string(c.payload.size() - expected_offset) + " trailing bytes");
  }
  return c;
}

// ---- checkpoints -------------------------------------------------------------

template <class T>
std::string encode_checkpoint(const Checkpoint<T>& ckpt) {
  std::ostringstream h;
  h << write_model_section(ckpt.model) << write_train_section(ckpt.train) << "[state]\n"
    << "rng_seed = " << ckpt.state.rng_seed << "\n"
    << "rng_counter = " << ckpt.state.rng_counter << "\n"
    << "epoch = " << ckpt.state.epoch << "\n"
    << "lr = " << format_real(ckpt.state.lr) << "\n"
    << "val_ppl = " << format_real(ckpt.state.val_ppl) << "\n";
  std::vector<ArrayEntry> manifest;
  std::string payload;
  ckpt.params.for_each([&](const std::string& name, const Tensor2<T>& t) {
    manifest.push_back({name, t.rows(), t.cols(), sizeof(T), payload.size(), 'f'});
    append_raw(payload, t.data(), t.size());
  });
  return encode_container(h.str(), manifest, payload);
}

template <class T>
Checkpoint<T> decode_checkpoint(const std::string& bytes) {
  const Container c = decode_container(bytes);
  Checkpoint<T> ckpt;
  std::vector<KeyValue> header;
  try {
    header = parse_key_values(c.header_text);
    for (const auto& kv : header) {
      bool known = false;
      if (kv.section == "model") known = apply_model_key(ckpt.model, kv.key, kv.value);
      else if (kv.section == "train") known = apply_train_key(ckpt.train, kv.key, kv.value);
      else if (kv.section == "state") {
        known = true;
        if (kv.key == "rng_seed") ckpt.state.rng_seed = parse_count(kv.value, kv.key);
        else if (kv.key == "rng_counter") ckpt.state.rng_counter = parse_count(kv.value, kv.key);
        else if (kv.key == "epoch") ckpt.state.epoch = parse_count(kv.value, kv.key);
        else if (kv.key == "lr") ckpt.state.lr = parse_real(kv.value, kv.key);
        else if (kv.key == "val_ppl") ckpt.state.val_ppl = parse_real(kv.value, kv.key);
        else known = false;
      }
      if (!known) throw ConfigError("unknown header key '" + kv.section + "." + kv.key + "'");
    }
    ckpt.model.validate();
  } catch (const std::invalid_argument& e) {
    throw CorruptFile(std::string("header: ") + e.what());
  }
  ckpt.params = zero_params<T>(ckpt.model);
  ckpt.params.for_each([&](const std::string& name, Tensor2<T>& t) {
    const ArrayEntry& e = find_entry(c, name);
    if (e.kind != 'f' || e.rows != t.rows() || e.cols != t.cols()) {
      throw CorruptFile("manifest entry '" + name + "': shape [" + std::to_string(e.rows) + "x" +
                        std::to_string(e.cols) + "] does not match the model's " + t.shape());
    }
    if (e.width == sizeof(T)) {
      std::memcpy(t.data(), c.payload.data() + e.offset, e.bytes());
    } else if (e.width == 4) {
      const auto v = read_raw<float>(c.payload, e);
      for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<T>(v[i]);
    } else {
      const auto v = read_raw<double>(c.payload, e);
      for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<T>(v[i]);
    }
    if (!t.all_finite()) throw CorruptFile("manifest entry '" + name + "': non-finite values");
  });
  std::size_t expected = 0;
  ckpt.params.for_each([&](const std::string&, const Tensor2<T>&) { ++expected; });
  if (c.manifest.size() != expected) throw CorruptFile("manifest lists tensors the model does not have");
  return ckpt;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(read_file(path));
}

std::size_t checkpoint_width(const std::filesystem::path& path) {
  const Container c = decode_container(read_file(path));
  if (c.manifest.empty()) throw CorruptFile("manifest is empty");
  return c.manifest.front().width;
}

template std::string encode_checkpoint(const Checkpoint<float>&);
template std::string encode_checkpoint(const Checkpoint<double>&);
template Checkpoint<float> decode_checkpoint<float>(const std::string&);
template Checkpoint<double> decode_checkpoint<double>(const std::string&);
template void save_checkpoint(const std::filesystem::path&, const Checkpoint<float>&);
template void save_checkpoint(const std::filesystem::path&, const Checkpoint<double>&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

// ---- datasets ------------------------------------------------------------------

std::string encode_dataset(const Dataset& data, const TaskSpec& spec) {
  std::ostringstream h;
  h << write_task_section(spec) << "[dataset]\n"
    << "kind = " << to_string(data.kind) << "\n"
    << "answers_lo = " << data.answers.lo << "\n"
    << "answers_hi = " << data.answers.hi << "\n";
  const Batch& b = data.data;
  std::vector<ArrayEntry> manifest;
  std::string payload;
  auto add_i32 = [&](const std::string& name, std::size_t rows, std::size_t cols, const std::vector<std::int32_t>& v) {
    manifest.push_back({name, rows, cols, 4, payload.size(), 'i'});
    append_raw(payload, v.data(), v.size());
  };
  auto widen = [](const std::vector<std::uint8_t>& v) { return std::vector<std::int32_t>(v.begin(), v.end()); };
  add_i32("tokens", b.rows, b.seq_len, b.tokens);
  add_i32("targets", b.rows, b.seq_len, b.targets);
  add_i32("mask", b.rows, b.seq_len, widen(b.mask));
  add_i32("protect", b.rows, b.seq_len, widen(b.protect));
  add_i32("distance", b.rows, 1, b.distance);
  return encode_container(h.str(), manifest, payload);
}

Dataset decode_dataset(const std::string& bytes, TaskSpec* spec_out) {
  const Container c = decode_container(bytes);
  TaskSpec spec;
  Dataset ds;
  try {
    for (const auto& kv : parse_key_values(c.header_text)) {
      bool known = false;
      if (kv.section == "task") known = apply_task_key(spec, kv.key, kv.value);
      else if (kv.section == "dataset") {
        known = true;
        if (kv.key == "kind") ds.kind = parse_task_kind(kv.value);
        else if (kv.key == "answers_lo") ds.answers.lo = static_cast<std::int32_t>(parse_count(kv.value, kv.key));
        else if (kv.key == "answers_hi") ds.answers.hi = static_cast<std::int32_t>(parse_count(kv.value, kv.key));
        else known = false;
      }
      if (!known) throw ConfigError("unknown header key '" + kv.section + "." + kv.key + "'");
    }
    ds.layout = spec.layout();
  } catch (const std::invalid_argument& e) {
    throw CorruptFile(std::string("header: ") + e.what());
  }
  const ArrayEntry& tok = find_entry(c, "tokens");
  Batch& b = ds.data;
  b = Batch(tok.rows, tok.cols);
  auto load = [&](const std::string& name, std::size_t cols) {
    const ArrayEntry& e = find_entry(c, name);
    if (e.kind != 'i' || e.rows != b.rows || e.cols != cols) {
      throw CorruptFile("manifest entry '" + name + "': unexpected shape or type");
    }
    return read_raw<std::int32_t>(c.payload, e);
  };
  auto narrow = [](const std::vector<std::int32_t>& v) { return std::vector<std::uint8_t>(v.begin(), v.end()); };
  b.tokens = load("tokens", b.seq_len);
  b.targets = load("targets", b.seq_len);
  b.mask = narrow(load("mask", b.seq_len));
  b.protect = narrow(load("protect", b.seq_len));
  b.distance = load("distance", 1);
  try {
    b.validate(ds.layout.vocab_size);
  } catch (const DimensionError& e) {
    throw CorruptFile(std::string("dataset arrays: ") + e.what());
  }
  if (spec_out) *spec_out = spec;
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data, const TaskSpec& spec) {
  write_file(path, encode_dataset(data, spec));
}

Dataset load_dataset(const std::filesystem::path& path, TaskSpec* spec) {
  return decode_dataset(read_file(path), spec);
}

}  // namespace synres
