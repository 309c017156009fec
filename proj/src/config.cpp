#include "synres/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace synres {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(what + ": expected true or false, got '" + text + "'");
}

std::string join_counts(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text) {
  std::vector<KeyValue> out;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    KeyValue kv{section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
    if (kv.key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double parse_real(const std::string& text, const std::string& what) {
  if (text.empty()) throw ConfigError(what + ": empty value");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE) {
    throw ConfigError(what + ": cannot parse '" + text + "' as a real number");
  }
  return v;
}

std::uint64_t parse_count(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(what + ": cannot parse '" + text + "' as a non-negative integer");
  }
  return v;
}

std::vector<std::size_t> parse_count_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(trim(item), what));
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

std::vector<double> parse_real_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(trim(item), what));
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

bool apply_model_key(ModelConfig& m, const std::string& key, const std::string& value) {
  const std::string what = "model." + key;
  if (key == "vocab_size") m.vocab_size = parse_count(value, what);
  else if (key == "d_model") m.d_model = parse_count(value, what);
  else if (key == "n_heads") m.n_heads = parse_count(value, what);
  else if (key == "n_layers") m.n_layers = parse_count(value, what);
  else if (key == "d_ff") m.d_ff = parse_count(value, what);
  else if (key == "max_seq_len") m.max_seq_len = parse_count(value, what);
  else if (key == "sigma_init") m.sigma_init = parse_real(value, what);
  else if (key == "gate_mode") {
    try {
      m.gate_mode = parse_gate_mode(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(what + ": " + e.what());
    }
  } else return false;
  return true;
}

bool apply_train_key(TrainConfig& t, const std::string& key, const std::string& value) {
  const std::string what = "train." + key;
  if (key == "lr") t.lr = parse_real(value, what);
  else if (key == "lr_decay") t.lr_decay = parse_real(value, what);
  else if (key == "ppl_threshold") {
    if (value == "auto") t.ppl_threshold.reset();
    else t.ppl_threshold = parse_real(value, what);
  } else if (key == "reg_weight") t.reg_weight = parse_real(value, what);
  else if (key == "epochs") t.epochs = parse_count(value, what);
  else if (key == "batch_size") t.batch_size = parse_count(value, what);
  else if (key == "grad_clip") {
    if (value == "off") t.grad_clip.reset();
    else t.grad_clip = parse_real(value, what);
  } else if (key == "seed") t.seed = parse_count(value, what);
  else if (key == "min_lr") t.min_lr = parse_real(value, what);
  else if (key == "shuffle") t.shuffle = parse_bool(value, what);
  else return false;
  return true;
}

bool apply_task_key(TaskSpec& s, const std::string& key, const std::string& value) {
  const std::string what = "task." + key;
  if (key == "kind") s.kind = parse_task_kind(value);
  else if (key == "seq_len") s.seq_len = parse_count(value, what);
  else if (key == "pairs") s.pairs = parse_count(value, what);
  else if (key == "distances") s.distances = parse_count_list(value, what);
  else if (key == "samples") s.samples = parse_count(value, what);
  else if (key == "val_samples") s.val_samples = parse_count(value, what);
  else if (key == "seed") s.seed = parse_count(value, what);
  else if (key == "vocab_size") s.vocab_size = parse_count(value, what);
  else if (key == "value_tokens") s.value_tokens = parse_count(value, what);
  else if (key == "corpus_path") s.corpus_path = value;
  else if (key == "train_fraction") s.train_fraction = parse_real(value, what);
  else return false;
  return true;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  for (const auto& kv : parse_key_values(text)) {
    bool known = false;
    if (kv.section == "model") known = apply_model_key(c.model, kv.key, kv.value);
    else if (kv.section == "train") known = apply_train_key(c.train, kv.key, kv.value);
    else if (kv.section == "task") known = apply_task_key(c.task, kv.key, kv.value);
    else {
      throw ConfigError("line " + std::to_string(kv.line) + ": unknown section '" + kv.section + "'");
    }
    if (!known) {
      throw ConfigError("line " + std::to_string(kv.line) + ": unknown key '" + kv.section + "." + kv.key + "'");
    }
  }
  try {
    c.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.train.validate();
  c.task.validate();
  if (c.task.layout().vocab_size != c.model.vocab_size) {
    throw ConfigError("model.vocab_size (" + std::to_string(c.model.vocab_size) + ") must equal the task vocabulary (" +
                      std::to_string(c.task.layout().vocab_size) + ")");
  }
  if (c.task.seq_len > c.model.max_seq_len) {
    throw ConfigError("task.seq_len exceeds model.max_seq_len");
  }
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return parse_run_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string write_model_section(const ModelConfig& m) {
  std::ostringstream o;
  o << "[model]\n"
    << "vocab_size = " << m.vocab_size << "\n"
    << "d_model = " << m.d_model << "\n"
    << "n_heads = " << m.n_heads << "\n"
    << "n_layers = " << m.n_layers << "\n"
    << "d_ff = " << m.d_ff << "\n"
    << "max_seq_len = " << m.max_seq_len << "\n"
    << "sigma_init = " << format_real(m.sigma_init) << "\n"
    << "gate_mode = " << to_string(m.gate_mode) << "\n";
  return o.str();
}

std::string write_train_section(const TrainConfig& t) {
  std::ostringstream o;
  o << "[train]\n"
    << "lr = " << format_real(t.lr) << "\n"
    << "lr_decay = " << format_real(t.lr_decay) << "\n"
    << "ppl_threshold = " << (t.ppl_threshold ? format_real(*t.ppl_threshold) : "auto") << "\n"
    << "reg_weight = " << format_real(t.reg_weight) << "\n"
    << "epochs = " << t.epochs << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "grad_clip = " << (t.grad_clip ? format_real(*t.grad_clip) : "off") << "\n"
    << "seed = " << t.seed << "\n"
    << "min_lr = " << format_real(t.min_lr) << "\n"
    << "shuffle = " << (t.shuffle ? "true" : "false") << "\n";
  return o.str();
}

std::string write_task_section(const TaskSpec& s) {
  std::ostringstream o;
  o << "[task]\n"
    << "kind = " << to_string(s.kind) << "\n"
    << "seq_len = " << s.seq_len << "\n"
    << "pairs = " << s.pairs << "\n"
    << "distances = " << join_counts(s.distances) << "\n"
    << "samples = " << s.samples << "\n"
    << "val_samples = " << s.val_samples << "\n"
    << "seed = " << s.seed << "\n"
    << "vocab_size = " << s.vocab_size << "\n"
    << "value_tokens = " << s.value_tokens << "\n";
  if (!s.corpus_path.empty()) o << "corpus_path = " << s.corpus_path << "\n";
  o << "train_fraction = " << format_real(s.train_fraction) << "\n";
  return o.str();
}

std::string write_run_config(const RunConfig& c) {
  return write_model_section(c.model) + "\n" + write_train_section(c.train) + "\n" + write_task_section(c.task);
}

}  // namespace synres
