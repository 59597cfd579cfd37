#include "nmtdec/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "model_slots.hpp"
#include "nmtdec/errors.hpp"

namespace nmtdec {

// ---------------------------------------------------------------------------
// ModelSpec

int ModelSpec::fc_dim(int layer) const {
  if (fc_dims.size() == 1) return fc_dims.front();
  return fc_dims.at(static_cast<std::size_t>(layer - 1));
}

bool ModelSpec::operator==(const ModelSpec& o) const {
  if (src_vocab_size != o.src_vocab_size || trg_vocab_size != o.trg_vocab_size ||
      embed_dim != o.embed_dim || src_layers != o.src_layers || src_hidden != o.src_hidden ||
      trg_hidden != o.trg_hidden || fc_layers != o.fc_layers || top_layer != o.top_layer ||
      top_width() != o.top_width() || precompute_k != o.precompute_k ||
      candidate_activation != o.candidate_activation || init_range != o.init_range) {
    return false;
  }
  for (int l = 1; l <= fc_layers; ++l)
    if (fc_dim(l) != o.fc_dim(l)) return false;
  return true;
}

void ModelSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("model spec field '" + field + "': " + why);
  };
  if (src_vocab_size < 3) fail("src_vocab_size", "must be >= 3 (ids 0-2 are reserved)");
  if (trg_vocab_size < 3) fail("trg_vocab_size", "must be >= 3 (ids 0-2 are reserved)");
  if (embed_dim <= 0) fail("embed_dim", "must be > 0");
  if (src_layers <= 0) fail("src_layers", "must be > 0");
  if (src_hidden <= 0 || src_hidden % 2 != 0) fail("src_hidden", "must be a positive even number");
  if (trg_hidden <= 0) fail("trg_hidden", "must be > 0");
  if (fc_layers < 0) fail("fc_layers", "must be >= 0");
  if (fc_layers > 0) {
    if (fc_dims.size() != 1 && fc_dims.size() != static_cast<std::size_t>(fc_layers)) {
      fail("fc_dim", "needs one value or exactly fc_layers values");
    }
    for (int d : fc_dims)
      if (d <= 0) fail("fc_dim", "all widths must be > 0");
    for (int l = 3; l <= fc_layers; l += 2) {
      if (fc_dim(l) != fc_dim(l - 2)) {
        fail("fc_dim", "layer " + std::to_string(l) + " has a skip connection from layer " +
                           std::to_string(l - 2) + " and needs the same width (" +
                           std::to_string(fc_dim(l)) + " vs " + std::to_string(fc_dim(l - 2)) + ")");
      }
    }
  }
  if (top_dim < 0) fail("top_dim", "must be >= 0");
  if (precompute_k < 0) fail("precompute_k", "must be >= 0");
  if (!(init_range > 0.0f && init_range <= 1.0f)) fail("init_range", "must be in (0, 1]");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int_field(std::string_view key, std::string_view v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ValidationError("model spec field '" + std::string(key) + "': not an integer: '" +
                          std::string(v) + "'");
  }
  return out;
}

}  // namespace

ModelSpec parse_model_spec(std::string_view text) {
  ModelSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string_view l = line;
    if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    const auto eq = l.find_first_of("=:");
    if (eq == std::string_view::npos) {
      throw ValidationError("model spec line without '=': '" + std::string(l) + "'");
    }
    const std::string_view key = trim(l.substr(0, eq));
    const std::string_view val = trim(l.substr(eq + 1));
    if (key == "src_vocab_size") spec.src_vocab_size = parse_int_field(key, val);
    else if (key == "trg_vocab_size") spec.trg_vocab_size = parse_int_field(key, val);
    else if (key == "embed_dim") spec.embed_dim = parse_int_field(key, val);
    else if (key == "src_layers") spec.src_layers = parse_int_field(key, val);
    else if (key == "src_hidden") spec.src_hidden = parse_int_field(key, val);
    else if (key == "trg_hidden") spec.trg_hidden = parse_int_field(key, val);
    else if (key == "fc_layers") spec.fc_layers = parse_int_field(key, val);
    else if (key == "fc_dim") {
      spec.fc_dims.clear();
      std::string_view rest = val;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        spec.fc_dims.push_back(parse_int_field(key, trim(rest.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
      if (spec.fc_dims.empty()) throw ValidationError("model spec field 'fc_dim': empty");
    } else if (key == "top_layer") {
      if (val == "fc-tanh") spec.top_layer = TopLayer::kFcTanh;
      else if (val == "gru") spec.top_layer = TopLayer::kGru;
      else throw ValidationError("model spec field 'top_layer': expected fc-tanh or gru");
    } else if (key == "top_dim") spec.top_dim = parse_int_field(key, val);
    else if (key == "precompute_k") spec.precompute_k = parse_int_field(key, val);
    else if (key == "candidate_activation") {
      if (val == "tanh") spec.candidate_activation = CandidateActivation::kTanh;
      else if (val == "sigmoid") spec.candidate_activation = CandidateActivation::kSigmoid;
      else throw ValidationError("model spec field 'candidate_activation': expected tanh or sigmoid");
    } else if (key == "init_range") {
      float f = 0.0f;
      const auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), f);
      if (ec != std::errc() || p != val.data() + val.size()) {
        throw ValidationError("model spec field 'init_range': not a number");
      }
      spec.init_range = f;
    } else {
      throw ValidationError("model spec field '" + std::string(key) + "': unknown field");
    }
  }
  spec.validate();
  return spec;
}

ModelSpec read_model_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_spec(ss.str());
}

std::string format_model_spec(const ModelSpec& spec) {
  std::ostringstream out;
  out << "src_vocab_size = " << spec.src_vocab_size << "\n"
      << "trg_vocab_size = " << spec.trg_vocab_size << "\n"
      << "embed_dim = " << spec.embed_dim << "\n"
      << "src_layers = " << spec.src_layers << "\n"
      << "src_hidden = " << spec.src_hidden << "\n"
      << "trg_hidden = " << spec.trg_hidden << "\n"
      << "fc_layers = " << spec.fc_layers << "\n"
      << "fc_dim = ";
  for (std::size_t i = 0; i < spec.fc_dims.size(); ++i) out << (i ? "," : "") << spec.fc_dims[i];
  out << "\n"
      << "top_layer = " << (spec.top_layer == TopLayer::kGru ? "gru" : "fc-tanh") << "\n"
      << "top_dim = " << spec.top_dim << "\n"
      << "precompute_k = " << spec.precompute_k << "\n"
      << "candidate_activation = "
      << (spec.candidate_activation == CandidateActivation::kSigmoid ? "sigmoid" : "tanh") << "\n"
      << "init_range = " << spec.init_range << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3) throw ValidationError("vocabulary needs at least the 3 special tokens");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int32_t>(i));
}

Vocab Vocab::synthetic(std::size_t size) {
  std::vector<std::string> t{"<s>", "</s>", "<unk>"};
  for (std::size_t i = 3; i < size; ++i) t.push_back("w" + std::to_string(i));
  return Vocab(std::move(t));
}

Vocab Vocab::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

int32_t Vocab::lookup(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

// ---------------------------------------------------------------------------
// Model

std::vector<std::pair<std::string, const Tensor*>> Model::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  detail::visit_slots(*this, spec, [&](const std::string& name, const Tensor& t, std::size_t,
                                       std::size_t, detail::SlotKind) { out.emplace_back(name, &t); });
  return out;
}

std::vector<std::string> Model::weight_matrix_names() const {
  std::vector<std::string> out;
  detail::visit_slots(*this, spec, [&](const std::string& name, const Tensor&, std::size_t,
                                       std::size_t, detail::SlotKind kind) {
    if (kind == detail::SlotKind::kWeight) out.push_back(name);
  });
  return out;
}

const Tensor& Model::tensor(const std::string& name) const {
  for (const auto& [n, t] : named_tensors())
    if (n == name) return *t;
  throw InputError("no tensor named '" + name + "'");
}

void Model::add_quantized_twins(int frac_bits_w, int frac_bits_act) {
  if (frac_bits_act < 8 || frac_bits_act > 11) {
    throw InputError("frac_bits_a must be in [8, 11], got " + std::to_string(frac_bits_act));
  }
  quantized.clear();
  for (const auto& name : weight_matrix_names()) {
    quantized.emplace(name, quantize_weights(tensor(name), frac_bits_w));
  }
  frac_bits_a = frac_bits_act;
}

void Model::validate() const {
  spec.validate();
  detail::visit_slots(*this, spec, [&](const std::string& name, const Tensor& t, std::size_t rows,
                                       std::size_t cols, detail::SlotKind) {
    if (t.rows() != rows || t.cols() != cols) {
      throw ValidationError("tensor '" + name + "' has shape " + std::to_string(t.rows()) + "x" +
                            std::to_string(t.cols()) + ", expected " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }
  });
  if (src_vocab.size() != static_cast<std::size_t>(spec.src_vocab_size)) {
    throw ValidationError("source vocabulary has " + std::to_string(src_vocab.size()) +
                          " tokens, embeddings have " + std::to_string(spec.src_vocab_size) + " rows");
  }
  if (trg_vocab.size() != static_cast<std::size_t>(spec.trg_vocab_size)) {
    throw ValidationError("target vocabulary has " + std::to_string(trg_vocab.size()) +
                          " tokens, embeddings have " + std::to_string(spec.trg_vocab_size) + " rows");
  }
  if (!quantized.empty()) {
    if (frac_bits_a < 8 || frac_bits_a > 11) {
      throw ValidationError("quantized twins present but activation fractional bits is " +
                            std::to_string(frac_bits_a));
    }
    for (const auto& name : weight_matrix_names()) {
      const auto it = quantized.find(name);
      if (it == quantized.end()) throw ValidationError("tensor '" + name + "' has no quantized twin");
      const QuantMatrix& q = it->second;
      const Tensor& w = tensor(name);
      if (q.rows() != w.rows() || q.cols() != w.cols()) {
        throw ValidationError("quantized twin of '" + name + "' has the wrong shape");
      }
      const float bound = std::ldexp(1.0f, -(q.frac_bits() + 1));
      const float inv = std::ldexp(1.0f, -q.frac_bits());
      for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t c = 0; c < w.cols(); ++c) {
          const float clipped = std::min(std::max(w(r, c), -kWeightClip), kWeightClip);
          if (std::fabs(static_cast<float>(q.at(r, c)) * inv - clipped) > bound) {
            throw ValidationError("quantized twin of '" + name + "' disagrees with its float weights");
          }
        }
      }
    }
    if (quantized.size() != weight_matrix_names().size()) {
      throw ValidationError("model carries quantized twins for unknown tensors");
    }
  }
}

Model generate_random_model(const ModelSpec& spec, uint64_t seed) {
  spec.validate();
  Model m;
  m.spec = spec;
  detail::size_containers(m, spec);
  std::mt19937_64 rng(seed);
  const float range = spec.init_range;
  detail::visit_slots(m, spec, [&](const std::string&, Tensor& t, std::size_t rows,
                                   std::size_t cols, detail::SlotKind kind) {
    t = Tensor(rows, cols);
    if (kind == detail::SlotKind::kBias) return;
    for (float& v : t.values()) {
      // 24 random bits → [0, 1) exactly representable, mapped to [-range, range).
      const float u = static_cast<float>(rng() >> 40) * 0x1p-24f;
      v = (2.0f * u - 1.0f) * range;
    }
  });
  m.src_vocab = Vocab::synthetic(static_cast<std::size_t>(spec.src_vocab_size));
  m.trg_vocab = Vocab::synthetic(static_cast<std::size_t>(spec.trg_vocab_size));
  return m;
}

}  // namespace nmtdec
