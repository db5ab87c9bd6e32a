#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "levemb/checkpoint.hpp"
#include "levemb/commands.hpp"
#include "levemb/esd.hpp"
#include "levemb/eval.hpp"
#include "levemb/losses.hpp"
#include "levemb/seqcore.hpp"

namespace py = pybind11;
using namespace levemb;

namespace {

Sequence parse_padded(const std::string& text, std::size_t len) {
  return pad(parse_sequence(text, Alphabet::dna()), len, Alphabet::dna());
}

// A loaded checkpoint exposed as an embedding model.
class PyModel {
 public:
  explicit PyModel(Checkpoint ck) : ck_(std::move(ck)) {}

  py::array_t<double> embed(const std::vector<std::string>& seqs) {
    std::vector<Sequence> batch;
    batch.reserve(seqs.size());
    for (const auto& s : seqs) batch.push_back(parse_padded(s, ck_.model->spec().input_len));
    TensorD emb;
    {
      py::gil_scoped_release release;
      emb = embed_sequences(*ck_.model, batch);
    }
    py::array_t<double> out({emb.dim(0), emb.dim(1)});
    std::copy(emb.data().begin(), emb.data().end(), out.mutable_data());
    return out;
  }

  std::vector<double> predict(const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<PairSample> samples;
    samples.reserve(pairs.size());
    for (const auto& [s, t] : pairs) {
      PairSample p;
      p.s = parse_sequence(s, Alphabet::dna());
      p.t = parse_sequence(t, Alphabet::dna());
      samples.push_back(std::move(p));
    }
    py::gil_scoped_release release;
    return predict_distances(*ck_.model, samples);
  }

  std::string arch() const { return to_string(ck_.model->spec().kind); }
  std::size_t dim() const { return ck_.model->spec().embedding_dim; }
  std::size_t input_len() const { return ck_.model->spec().input_len; }
  double scale() const { return ck_.model->scale(); }
  std::string loss() const { return ck_.meta.loss.name(); }
  std::size_t epochs_completed() const { return ck_.meta.epochs_completed; }

 private:
  Checkpoint ck_;
};

py::dict detection_to_dict(const EsdDetection& det) {
  py::dict d;
  d["dims"] = det.dims;
  d["ranks"] = det.ranks;
  d["full_rank"] = std::vector<bool>(det.full_rank.begin(), det.full_rank.end());
  d["a4_suspect"] = std::vector<bool>(det.a4_suspect.begin(), det.a4_suspect.end());
  d["lower_bound"] = det.lower_bound;
  d["plateau_start"] = det.plateau_start;
  d["n0"] = det.n0 ? py::cast(*det.n0) : py::none();
  d["max_dim"] = det.max_dim;
  return d;
}

}  // namespace

PYBIND11_MODULE(_levemb, m) {
  m.doc() = "levemb C++ core";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def(
      "levenshtein",
      [](const std::string& a, const std::string& b) {
        return levenshtein(parse_sequence(a, Alphabet::dna()), parse_sequence(b, Alphabet::dna()));
      },
      py::arg("a"), py::arg("b"), "Levenshtein distance between two DNA strings.");

  m.def(
      "evaluate_loss",
      [](const std::string& loss, double dhat, double d) {
        const LossValue v = evaluate_loss(parse_loss(loss), dhat, d);
        return py::make_tuple(v.value, v.grad);
      },
      py::arg("loss"), py::arg("dhat"), py::arg("d"), "(value, d value / d dhat) for a loss name.");

  m.def("predicted_variance", &predicted_variance, py::arg("d"), py::arg("mean_distance"),
        py::arg("embedding_dim"));
  m.def("regularized_gamma_p", &regularized_gamma_p, py::arg("a"), py::arg("x"));
  m.def("chi2_cdf", &chi2_cdf, py::arg("x"), py::arg("dof"));
  m.def("ks_critical_value", &ks_critical_value, py::arg("n"), py::arg("alpha"));

  m.def(
      "sample_independent_distances",
      [](std::size_t n, double scale, std::size_t count, std::uint64_t seed) {
        Rng rng = make_rng(seed, Stream::kHarness, 0);
        return sample_independent_distances(n, scale, count, rng);
      },
      py::arg("n"), py::arg("scale"), py::arg("count"), py::arg("seed") = 0);
  m.def(
      "sample_correlated_distances",
      [](std::size_t n, double mean_distance, int d, std::size_t count, std::uint64_t seed) {
        Rng rng = make_rng(seed, Stream::kHarness, 1);
        return sample_correlated_distances(n, mean_distance, d, count, rng);
      },
      py::arg("n"), py::arg("mean_distance"), py::arg("d"), py::arg("count"), py::arg("seed") = 0);

  m.def(
      "sym_eigenvalues",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a) {
        if (a.ndim() != 2) throw ShapeError("expected a square matrix");
        const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
        TensorD t({rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
        return sym_eigen(t).values;
      },
      py::arg("a"), "Eigenvalues of a symmetric matrix, descending.");

  m.def(
      "detect_esd",
      [](const std::vector<std::vector<double>>& spectra, double tau, double slack) {
        std::vector<Spectrum> s;
        for (const auto& values : spectra) {
          Spectrum sp;
          sp.dim = values.size();
          sp.eigenvalues = values;
          std::sort(sp.eigenvalues.rbegin(), sp.eigenvalues.rend());
          s.push_back(std::move(sp));
        }
        EsdOptions opt;
        opt.tau = tau;
        opt.slack = slack;
        return detection_to_dict(detect_esd(s, opt));
      },
      py::arg("spectra"), py::arg("tau") = 0.5, py::arg("slack") = 0.1,
      "Detect n0 from per-dimension eigenvalue lists (dimension = list length).");

  py::class_<PyModel>(m, "Model")
      .def("embed", &PyModel::embed, py::arg("sequences"), "Eval-mode embeddings, one row per sequence.")
      .def("predict", &PyModel::predict, py::arg("pairs"), "Predicted distances for (s, t) string pairs.")
      .def_property_readonly("arch", &PyModel::arch)
      .def_property_readonly("dim", &PyModel::dim)
      .def_property_readonly("input_len", &PyModel::input_len)
      .def_property_readonly("scale", &PyModel::scale)
      .def_property_readonly("loss", &PyModel::loss)
      .def_property_readonly("epochs_completed", &PyModel::epochs_completed);

  m.def(
      "load_checkpoint", [](const std::string& path) { return PyModel(load_checkpoint(path)); }, py::arg("path"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "levemb");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        py::gil_scoped_release release;
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Run a levemb command; returns its exit code.");
}
