// Binary model format, little-endian throughout:
//
//   "NMTD" | u32 version=1 | u32 tensor_count
//   per tensor: u16 name_len | name | u8 tag (0 f32, 1 q16) | u8 ndim | u32 dims[ndim]
//               f32 payload row-major, or u8 frac_bits | u32 layout_tag | i16 payload
//   footer: source vocab, target vocab, each u32 count then (u16 len | bytes) per token
//
// Besides the weights, a 1x4 float tensor "meta.options" carries
// [precompute_k, candidate_activation (0 tanh, 1 sigmoid), frac_bits_a, init_range].
// Quantized twins are stored under "<name>.q16" after all float tensors.

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>

#include "model_slots.hpp"
#include "nmtdec/errors.hpp"
#include "nmtdec/model.hpp"

namespace nmtdec {

namespace {

constexpr char kMagic[4] = {'N', 'M', 'T', 'D'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kTagF32 = 0;
constexpr uint8_t kTagQ16 = 1;
constexpr const char* kMetaName = "meta.options";
constexpr const char* kTwinSuffix = ".q16";

class Writer {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    u8(static_cast<uint8_t>(v));
    u8(static_cast<uint8_t>(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void str16(const std::string& s) {
    if (s.size() > 0xFFFF) throw InputError("string too long for model file: " + s.substr(0, 32));
    u16(static_cast<uint16_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : b_(b) {}

  void set_context(std::string ctx) { ctx_ = std::move(ctx); }
  bool at_end() const { return pos_ == b_.size(); }

  uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  uint16_t u16() {
    need(2);
    const uint16_t v = static_cast<uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str16() {
    const uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void f32s(float* out, std::size_t n) {
    need(n * 4);
    for (std::size_t i = 0; i < n; ++i) {
      uint32_t v = 0;
      for (int k = 0; k < 4; ++k) v |= static_cast<uint32_t>(b_[pos_ + 4 * i + k]) << (8 * k);
      out[i] = std::bit_cast<float>(v);
    }
    pos_ += n * 4;
  }
  void i16s(int16_t* out, std::size_t n) {
    need(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = static_cast<int16_t>(b_[pos_ + 2 * i] | (b_[pos_ + 2 * i + 1] << 8));
    }
    pos_ += n * 2;
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("model file truncated while reading " + ctx_);
  }

  std::span<const uint8_t> b_;
  std::size_t pos_ = 0;
  std::string ctx_ = "header";
};

void write_header(Writer& w, const std::string& name, uint8_t tag, std::size_t rows, std::size_t cols) {
  w.str16(name);
  w.u8(tag);
  w.u8(2);
  w.u32(static_cast<uint32_t>(rows));
  w.u32(static_cast<uint32_t>(cols));
}

void write_vocab(Writer& w, const Vocab& v) {
  w.u32(static_cast<uint32_t>(v.size()));
  for (const auto& t : v.tokens()) w.str16(t);
}

Vocab read_vocab(Reader& r, const char* which) {
  r.set_context(std::string(which) + " vocabulary");
  const uint32_t n = r.u32();
  std::vector<std::string> tokens;
  tokens.reserve(n);
  for (uint32_t i = 0; i < n; ++i) tokens.push_back(r.str16());
  return Vocab(std::move(tokens));
}

struct RawTensors {
  std::map<std::string, Tensor> floats;
  std::map<std::string, QuantMatrix> quants;
};

const Tensor* find(const RawTensors& raw, const std::string& name) {
  const auto it = raw.floats.find(name);
  return it == raw.floats.end() ? nullptr : &it->second;
}

const Tensor& require(const RawTensors& raw, const std::string& name) {
  const Tensor* t = find(raw, name);
  if (!t) throw ValidationError("model file is missing tensor '" + name + "'");
  return *t;
}

// Recover hyperparameters from tensor shapes; Model::validate then cross-checks
// every tensor against the recovered spec.
ModelSpec derive_spec(const RawTensors& raw) {
  ModelSpec s;
  const Tensor& src_emb = require(raw, "src.emb");
  const Tensor& trg_emb = require(raw, "trg.emb");
  s.src_vocab_size = static_cast<int>(src_emb.rows());
  s.trg_vocab_size = static_cast<int>(trg_emb.rows());
  s.embed_dim = static_cast<int>(src_emb.cols());
  s.src_layers = 0;
  while (find(raw, "src.l" + std::to_string(s.src_layers + 1) + ".fwd.W_u")) ++s.src_layers;
  if (s.src_layers == 0) throw ValidationError("model file is missing tensor 'src.l1.fwd.W_u'");
  s.src_hidden = static_cast<int>(2 * require(raw, "src.l1.fwd.W_u").rows());
  s.trg_hidden = static_cast<int>(require(raw, "trg.gru.W_u").rows());
  s.fc_layers = 0;
  s.fc_dims.clear();
  while (const Tensor* t = find(raw, "fc." + std::to_string(s.fc_layers + 1) + ".W")) {
    s.fc_dims.push_back(static_cast<int>(t->rows()));
    ++s.fc_layers;
  }
  if (s.fc_dims.empty()) s.fc_dims = {1};
  if (const Tensor* top = find(raw, "top.W")) {
    s.top_layer = TopLayer::kFcTanh;
    s.top_dim = static_cast<int>(top->rows());
  } else {
    s.top_layer = TopLayer::kGru;
    s.top_dim = static_cast<int>(require(raw, "top.gru.W_u").rows());
  }
  if (s.top_dim == s.trg_hidden) s.top_dim = 0;
  if (const Tensor* meta = find(raw, kMetaName)) {
    if (meta->size() < 2) throw ValidationError("tensor 'meta.options' is too short");
    s.precompute_k = static_cast<int>(meta->data()[0]);
    s.candidate_activation =
        meta->data()[1] != 0.0f ? CandidateActivation::kSigmoid : CandidateActivation::kTanh;
    if (meta->size() >= 4) s.init_range = meta->data()[3];
  }
  // Skip-width constraint, reported against the tensor that breaks it.
  for (int l = 3; l <= s.fc_layers; l += 2) {
    if (s.fc_dim(l) != s.fc_dim(l - 2)) {
      throw ValidationError("tensor 'fc." + std::to_string(l) + ".W' has " +
                            std::to_string(s.fc_dim(l)) + " rows but its skip input fc." +
                            std::to_string(l - 2) + " has " + std::to_string(s.fc_dim(l - 2)));
    }
  }
  return s;
}

}  // namespace

std::vector<uint8_t> serialize_model(const Model& model) {
  model.validate();
  Writer w;
  w.u8(kMagic[0]);
  w.u8(kMagic[1]);
  w.u8(kMagic[2]);
  w.u8(kMagic[3]);
  w.u32(kVersion);
  const auto tensors = model.named_tensors();
  w.u32(static_cast<uint32_t>(tensors.size() + 1 + model.quantized.size()));
  for (const auto& [name, t] : tensors) {
    write_header(w, name, kTagF32, t->rows(), t->cols());
    for (float v : t->values()) w.f32(v);
  }
  write_header(w, kMetaName, kTagF32, 1, 4);
  w.f32(static_cast<float>(model.spec.precompute_k));
  w.f32(model.spec.candidate_activation == CandidateActivation::kSigmoid ? 1.0f : 0.0f);
  w.f32(static_cast<float>(model.frac_bits_a));
  w.f32(model.spec.init_range);
  if (!model.quantized.empty()) {
    for (const auto& name : model.weight_matrix_names()) {
      const QuantMatrix& q = model.quantized.at(name);
      write_header(w, name + kTwinSuffix, kTagQ16, q.rows(), q.cols());
      w.u8(static_cast<uint8_t>(q.frac_bits()));
      w.u32(q.layout_tag());
      for (int16_t v : q.payload()) w.u16(static_cast<uint16_t>(v));
    }
  }
  write_vocab(w, model.src_vocab);
  write_vocab(w, model.trg_vocab);
  return w.take();
}

Model deserialize_model(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  r.set_context("magic");
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a model file (bad magic)");
  r.set_context("version");
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("unsupported model file version " + std::to_string(version));
  }
  r.set_context("tensor count");
  const uint32_t count = r.u32();

  RawTensors raw;
  int frac_bits_a = 0;
  for (uint32_t i = 0; i < count; ++i) {
    r.set_context("tensor #" + std::to_string(i) + " header");
    const std::string name = r.str16();
    r.set_context("tensor '" + name + "'");
    const uint8_t tag = r.u8();
    const uint8_t ndim = r.u8();
    if (ndim < 1 || ndim > 2) {
      throw FormatError("tensor '" + name + "' has unsupported rank " + std::to_string(ndim));
    }
    std::size_t dims[2] = {1, 1};
    for (uint8_t d = 0; d < ndim; ++d) dims[2 - ndim + d] = r.u32();
    if (raw.floats.count(name) || raw.quants.count(name)) {
      throw FormatError("duplicate tensor '" + name + "'");
    }
    if (tag == kTagF32) {
      std::vector<float> data(dims[0] * dims[1]);
      r.f32s(data.data(), data.size());
      raw.floats.emplace(name, Tensor(dims[0], dims[1], std::move(data)));
    } else if (tag == kTagQ16) {
      const int fb = r.u8();
      const uint32_t layout = r.u32();
      std::vector<int16_t> payload(QuantMatrix::packed_size(dims[0], dims[1]));
      r.i16s(payload.data(), payload.size());
      raw.quants.emplace(name,
                         QuantMatrix::from_packed(dims[0], dims[1], fb, layout, std::move(payload)));
    } else {
      throw FormatError("tensor '" + name + "' has unknown tag " + std::to_string(tag));
    }
  }
  Vocab src_vocab = read_vocab(r, "source");
  Vocab trg_vocab = read_vocab(r, "target");
  if (!r.at_end()) throw FormatError("trailing bytes after model footer");

  if (const Tensor* meta = find(raw, kMetaName); meta && meta->size() >= 3) {
    frac_bits_a = static_cast<int>(meta->data()[2]);
  }

  Model m;
  m.spec = derive_spec(raw);
  detail::size_containers(m, m.spec);
  std::size_t used = 0;
  detail::visit_slots(m, m.spec, [&](const std::string& name, Tensor& t, std::size_t, std::size_t,
                                     detail::SlotKind) {
    t = require(raw, name);
    ++used;
  });
  if (used + (find(raw, kMetaName) ? 1 : 0) != raw.floats.size()) {
    for (const auto& [name, t] : raw.floats) {
      bool known = name == kMetaName;
      for (const auto& [n, _] : m.named_tensors()) known = known || n == name;
      if (!known) throw ValidationError("unexpected tensor '" + name + "' in model file");
    }
  }
  for (auto& [name, q] : raw.quants) {
    const std::string suffix = kTwinSuffix;
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix)) {
      throw ValidationError("quantized tensor '" + name + "' lacks the " + suffix + " suffix");
    }
    m.quantized.emplace(name.substr(0, name.size() - suffix.size()), std::move(q));
  }
  m.frac_bits_a = m.quantized.empty() ? 0 : frac_bits_a;
  m.src_vocab = std::move(src_vocab);
  m.trg_vocab = std::move(trg_vocab);
  m.validate();
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace nmtdec
