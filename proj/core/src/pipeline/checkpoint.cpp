#include "aio/pipeline/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace aio::inline AIO_ABI {

namespace {

constexpr char kMagic[4] = {'A', 'I', 'O', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  template <class T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(char((std::uint64_t(v) >> (8 * i)) & 0xff));
  }
  void str(const std::string& s) {
    uint(std::uint32_t(s.size()));
    bytes(s.data(), s.size());
  }
  void floats(const std::vector<float>& v) {
    for (float f : v) uint(std::bit_cast<std::uint32_t>(f));
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T uint() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return T(v);
  }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats(std::size_t n) {
    need(n * 4);
    std::vector<float> v(n);
    for (auto& f : v) f = std::bit_cast<float>(uint<std::uint32_t>());
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ParseError(source_ + ": truncated checkpoint");
  }
  std::string data_, source_;
  std::size_t pos_ = 0;
};

std::vector<float> to_float(std::span<const Real> v) { return {v.begin(), v.end()}; }

}  // namespace

Checkpoint Checkpoint::capture(const Config& cfg, const Model& model, const AdamW& opt, std::uint64_t iteration,
                               const RngState& rng) {
  Checkpoint ck;
  ck.config_text = cfg.dump();
  for (const auto& [name, t] : model.params.entries()) ck.params.push_back({name, t.shape(), to_float(t.values())});
  ck.optimizer_steps = opt.steps();
  for (const auto& m : opt.first_moments()) ck.first_moments.push_back(to_float(m));
  for (const auto& v : opt.second_moments()) ck.second_moments.push_back(to_float(v));
  ck.iteration = iteration;
  ck.rng = rng;
  return ck;
}

void Checkpoint::restore(Model& model, AdamW* opt) const {
  const auto& entries = model.params.entries();
  if (entries.size() != params.size()) {
    throw ConfigError("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                      std::to_string(entries.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = entries[k].second;
    if (entries[k].first != params[k].name || t.shape() != params[k].shape) {
      throw ConfigError("checkpoint parameter " + params[k].name + shape_str(params[k].shape) + " does not match " +
                        entries[k].first + shape_str(t.shape()));
    }
    std::copy(params[k].values.begin(), params[k].values.end(), t.mutable_values().begin());
  }
  if (opt) {
    if (first_moments.size() != params.size() || second_moments.size() != params.size()) {
      throw ParseError("checkpoint optimizer state does not cover every parameter");
    }
    auto& m = opt->first_moments();
    auto& v = opt->second_moments();
    for (std::size_t k = 0; k < params.size(); ++k) {
      m[k].assign(first_moments[k].begin(), first_moments[k].end());
      v[k].assign(second_moments[k].begin(), second_moments[k].end());
    }
    opt->set_steps(optimizer_steps);
  }
}

Config Checkpoint::config() const { return Config::parse(config_text, "<checkpoint config>"); }

std::size_t Checkpoint::vocab_size() const {
  for (const auto& p : params)
    if (p.name == "embed.text") return p.shape.at(0);
  throw ParseError("checkpoint lacks the text embedding table");
}

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic, 4);
  w.uint(Checkpoint::kVersion);
  w.str(ck.config_text);
  w.uint(std::uint32_t(ck.params.size()));
  for (const auto& p : ck.params) {
    w.str(p.name);
    w.uint(std::uint32_t(p.shape.size()));
    for (auto d : p.shape) w.uint(std::uint64_t(d));
    w.floats(p.values);
  }
  w.uint(ck.optimizer_steps);
  w.uint(std::uint32_t(ck.first_moments.size()));
  for (std::size_t k = 0; k < ck.first_moments.size(); ++k) {
    w.floats(ck.first_moments[k]);
    w.floats(ck.second_moments[k]);
  }
  w.uint(ck.iteration);
  w.uint(ck.rng.seed);
  w.uint(ck.rng.stream);
  w.uint(ck.rng.position);

  // Write-then-rename so an interrupted save never clobbers the previous file.
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(w.data().data(), std::streamsize(w.data().size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, file, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + file.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + file.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}), file.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError(file.string() + ": not an AIO1 checkpoint");
  const auto version = r.uint<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw ParseError(file.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_text = r.str();
  const auto n = r.uint<std::uint32_t>();
  for (std::uint32_t k = 0; k < n; ++k) {
    Checkpoint::Param p;
    p.name = r.str();
    const auto nd = r.uint<std::uint32_t>();
    for (std::uint32_t d = 0; d < nd; ++d) p.shape.push_back(std::size_t(r.uint<std::uint64_t>()));
    p.values = r.floats(shape_numel(p.shape));
    ck.params.push_back(std::move(p));
  }
  ck.optimizer_steps = r.uint<std::uint64_t>();
  const auto nm = r.uint<std::uint32_t>();
  if (nm != n) throw ParseError(file.string() + ": optimizer state count mismatch");
  for (std::uint32_t k = 0; k < nm; ++k) {
    ck.first_moments.push_back(r.floats(ck.params[k].values.size()));
    ck.second_moments.push_back(r.floats(ck.params[k].values.size()));
  }
  ck.iteration = r.uint<std::uint64_t>();
  ck.rng.seed = r.uint<std::uint64_t>();
  ck.rng.stream = r.uint<std::uint64_t>();
  ck.rng.position = r.uint<std::uint64_t>();
  if (!r.done()) throw ParseError(file.string() + ": trailing bytes after checkpoint");
  return ck;
}

void require_compatible(const Config& saved, const Config& current) {
  for (const auto& key : Config::architecture_keys()) {
    if (saved.get(key) != current.get(key)) {
      throw ConfigError("checkpoint was trained with " + key + "=" + saved.get(key) + " but the config says " + key +
                        "=" + current.get(key));
    }
  }
}

}  // namespace aio::inline AIO_ABI
