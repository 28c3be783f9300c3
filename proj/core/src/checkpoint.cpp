#include "dualran/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <vector>

#include "dualran/errors.hpp"

namespace dualran {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'R', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeF64 = 2;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(U));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}

  template <typename U>
  U get(const char* what) {
    U v;
    take(&v, sizeof(U), what);
    return v;
  }
  void take(void* out, std::size_t n, const char* what) {
    if (n > buf_.size() - pos_) {
      throw FormatError(path_ + ": truncated while reading " + what + " at byte " + std::to_string(pos_));
    }
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string str(const char* what) {
    const auto n = get<std::uint32_t>(what);
    std::string s(n, '\0');
    take(s.data(), n, what);
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string path_;
};

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path + ": malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

CheckpointHeader read_header(Reader& r) {
  char magic[8];
  r.take(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError(r.path() + ": not a checkpoint (bad magic)");
  CheckpointHeader h;
  h.version = r.get<std::uint32_t>("version");
  if (h.version != kCheckpointVersion) {
    throw FormatError(r.path() + ": unsupported checkpoint version " + std::to_string(h.version));
  }
  h.config_hash = r.get<std::uint64_t>("config hash");
  const std::string text = r.str("config text");
  try {
    h.config = ModelConfig::from_key_values(parse_config_text(text, r.path()));
  } catch (const ConfigError& e) {
    throw FormatError(r.path() + ": embedded config unreadable: " + e.what());
  }
  if (h.config.hash() != h.config_hash) {
    throw FormatError(r.path() + ": embedded config hashes to " + hash_hex(h.config.hash()) + " but header says " +
                      hash_hex(h.config_hash));
  }
  return h;
}

template <typename T>
ModelParams<T> read_arrays(Reader& r, const CheckpointHeader& h) {
  ModelParams<T> params = init_params<T>(h.config, 0);
  auto& entries = params.store.entries();
  const auto count = r.get<std::uint32_t>("array count");
  if (count != entries.size()) {
    throw FormatError(r.path() + ": holds " + std::to_string(count) + " arrays, config implies " +
                      std::to_string(entries.size()));
  }
  // Decode into staging buffers first so a failure leaves nothing half-written.
  std::vector<std::vector<T>> staged(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str("array name");
    const auto& entry = entries[i];
    if (name != entry.name) {
      throw FormatError(r.path() + ": array " + std::to_string(i) + " is '" + name + "', expected '" + entry.name +
                        "'");
    }
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kDtypeF32 && dtype != kDtypeF64) {
      throw FormatError(r.path() + ": array '" + name + "' has unknown dtype " + std::to_string(dtype));
    }
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>("extent"));
    if (shape != entry.tensor.shape()) {
      throw FormatError(r.path() + ": array '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(entry.tensor.shape()));
    }
    const std::size_t n = shape_numel(shape);
    staged[i].resize(n);
    if (dtype == kDtypeF32) {
      std::vector<float> raw(n);
      r.take(raw.data(), n * sizeof(float), name.c_str());
      for (std::size_t j = 0; j < n; ++j) staged[i][j] = static_cast<T>(raw[j]);
    } else {
      std::vector<double> raw(n);
      r.take(raw.data(), n * sizeof(double), name.c_str());
      for (std::size_t j = 0; j < n; ++j) staged[i][j] = static_cast<T>(raw[j]);
    }
  }
  if (!r.at_end()) throw FormatError(r.path() + ": trailing bytes after last array");
  for (std::size_t i = 0; i < count; ++i) {
    auto dst = entries[i].tensor.mutable_data();
    std::copy(staged[i].begin(), staged[i].end(), dst.begin());
  }
  return params;
}

}  // namespace

template <typename T>
void save_params(const ModelParams<T>& params, const std::string& path) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);
  w.put(params.config.hash());
  w.str(params.config.canonical_text());
  w.put(static_cast<std::uint32_t>(params.store.size()));
  for (const auto& e : params.store.entries()) {
    w.str(e.name);
    w.put(sizeof(T) == 4 ? kDtypeF32 : kDtypeF64);
    w.put(static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto extent : e.tensor.shape()) w.put(static_cast<std::uint64_t>(extent));
    const auto v = e.tensor.data();
    w.bytes(v.data(), v.size() * sizeof(T));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint '" + path + "'");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw FormatError("short write to checkpoint '" + path + "'");
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  Reader r(slurp(path), path);
  return read_header(r);
}

template <typename T>
ModelParams<T> load_params(const std::string& path) {
  Reader r(slurp(path), path);
  const CheckpointHeader h = read_header(r);
  return read_arrays<T>(r, h);
}

template <typename T>
ModelParams<T> load_params(const std::string& path, const ModelConfig& expected) {
  Reader r(slurp(path), path);
  const CheckpointHeader h = read_header(r);
  if (h.config_hash != expected.hash()) {
    throw FormatError(path + ": config hash mismatch: checkpoint " + hash_hex(h.config_hash) + ", requested " +
                      hash_hex(expected.hash()));
  }
  return read_arrays<T>(r, h);
}

template void save_params(const ModelParams<float>&, const std::string&);
template void save_params(const ModelParams<double>&, const std::string&);
template ModelParams<float> load_params<float>(const std::string&);
template ModelParams<double> load_params<double>(const std::string&);
template ModelParams<float> load_params<float>(const std::string&, const ModelConfig&);
template ModelParams<double> load_params<double>(const std::string&, const ModelConfig&);

}  // namespace dualran
