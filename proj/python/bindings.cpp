#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "nmtdec/app.hpp"
#include "nmtdec/errors.hpp"

namespace py = pybind11;
using namespace nmtdec;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  Tensor t(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy_n(a.data(), t.size(), t.data());
  return t;
}

FloatArray to_array(const Tensor& t) {
  FloatArray a({t.rows(), t.cols()});
  std::copy_n(t.data(), t.size(), a.mutable_data());
  return a;
}

// A model plus runtimes for one flag setting.
class Decoder {
 public:
  Decoder(std::vector<std::shared_ptr<Model>> models, const std::string& opts, int precompute_k)
      : models_(std::move(models)) {
    std::vector<const Model*> ptrs;
    for (const auto& m : models_) ptrs.push_back(m.get());
    ensemble_ = std::make_unique<Ensemble>(ptrs, StepFlags::parse(opts), precompute_k);
  }

  py::list decode(const std::vector<std::string>& words, int beam, double delta, int nbest, int max_len) const {
    DecodeConfig cfg;
    cfg.beam_size = beam;
    cfg.delta = delta;
    cfg.nbest = nbest;
    cfg.max_len = max_len;
    const Model& m = ensemble_->primary();
    const std::vector<int32_t> ids = encode_words(m.src_vocab, words);
    const DecodeResult r = beam_search(ensemble_->runtimes(), ids, cfg, {});
    py::list out;
    for (const NBestEntry& e : r.nbest) {
      py::dict d;
      d["ids"] = e.tokens;
      d["words"] = unk_replace(e.tokens, e.alpha, words, ids, {}, m.trg_vocab);
      d["logscore"] = e.logscore;
      d["complete"] = e.complete;
      d["alpha"] = to_array(e.alpha);
      out.append(d);
    }
    return out;
  }

 private:
  std::vector<std::shared_ptr<Model>> models_;
  std::unique_ptr<Ensemble> ensemble_;
};

}  // namespace

PYBIND11_MODULE(_nmtdec, m) {
  m.doc() = "CPU beam-search decoder for attentional sequence-to-sequence models";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  py::class_<Model, std::shared_ptr<Model>>(m, "Model")
      .def_property_readonly("spec_text", [](const Model& x) { return format_model_spec(x.spec); })
      .def_property_readonly("src_vocab_size", [](const Model& x) { return x.src_vocab.size(); })
      .def_property_readonly("trg_vocab_size", [](const Model& x) { return x.trg_vocab.size(); })
      .def_property_readonly("has_quantized_twins", [](const Model& x) { return !x.quantized.empty(); })
      .def("tensor_names", [](const Model& x) {
        std::vector<std::string> names;
        for (const auto& [n, t] : x.named_tensors()) names.push_back(n);
        return names;
      })
      .def("tensor", [](const Model& x, const std::string& name) { return to_array(x.tensor(name)); })
      .def("add_quantized_twins", &Model::add_quantized_twins, py::arg("frac_bits_w") = kDefaultWeightFracBits,
           py::arg("frac_bits_a") = kDefaultActivationFracBits)
      .def("save", [](const Model& x, const std::string& path) { save_model(x, path); })
      .def("to_bytes", [](const Model& x) {
        const auto b = serialize_model(x);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      });

  m.def(
      "generate_model",
      [](const std::string& spec_text, uint64_t seed) {
        const ModelSpec spec = parse_model_spec(spec_text);
        spec.validate();
        return std::make_shared<Model>(generate_random_model(spec, seed));
      },
      py::arg("spec_text"), py::arg("seed") = 0,
      "Seeded random model from 'key = value' spec text.");
  m.def("load_model", [](const std::string& path) { return std::make_shared<Model>(load_model(path)); });

  py::class_<Decoder>(m, "Decoder")
      .def(py::init([](py::object models, const std::string& opts, int precompute_k) {
             std::vector<std::shared_ptr<Model>> list;
             if (py::isinstance<Model>(models)) list.push_back(models.cast<std::shared_ptr<Model>>());
             else list = models.cast<std::vector<std::shared_ptr<Model>>>();
             return std::make_unique<Decoder>(std::move(list), opts, precompute_k);
           }),
           py::arg("models"), py::arg("opts") = "none", py::arg("precompute_k") = -1)
      .def("decode", &Decoder::decode, py::arg("words"), py::arg("beam") = 6, py::arg("delta") = 3.0,
           py::arg("nbest") = 1, py::arg("max_len") = 0);

  m.def(
      "gemm_f32", [](const FloatArray& a, const FloatArray& b) { return to_array(gemm_f32(to_tensor(a), to_tensor(b))); },
      "C = A·B in float32, summed in order.");
  m.def(
      "gemm_i16",
      [](const FloatArray& w, const FloatArray& x, int frac_bits_w, int frac_bits_a) {
        return to_array(gemm_i16(quantize_weights(to_tensor(w), frac_bits_w),
                                 quantize_activations(to_tensor(x).transposed(), frac_bits_a)));
      },
      py::arg("w"), py::arg("x"), py::arg("frac_bits_w") = kDefaultWeightFracBits,
      py::arg("frac_bits_a") = kDefaultActivationFracBits, "W·X through the 16-bit fixed-point kernel.");
  m.def(
      "quantize_roundtrip",
      [](const FloatArray& w, int frac_bits_w) { return to_array(quantize_weights(to_tensor(w), frac_bits_w).dequantize()); },
      py::arg("w"), py::arg("frac_bits_w") = kDefaultWeightFracBits);
  m.def(
      "lut",
      [](const std::string& kind, FloatArray x) {
        const ActivationKind k = kind == "sigmoid" ? ActivationKind::kSigmoid
                                 : kind == "tanh"  ? ActivationKind::kTanh
                                                   : throw InputError("kind must be sigmoid or tanh");
        FloatArray out(x.request().shape);
        std::copy_n(x.data(), x.size(), out.mutable_data());
        LookupTable::standard(k).apply({out.mutable_data(), static_cast<std::size_t>(out.size())});
        return out;
      },
      py::arg("kind"), py::arg("x"), "Table-based sigmoid or tanh.");
  m.def("parse_opts", [](const std::string& s) { return StepFlags::parse(s).to_string(); });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full{"nmtdec"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in process; returns (exit code, stdout, stderr).");
}
