// Python bindings for the i-RIM toolkit (double precision).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>
#include <optional>

#include "irim/data_synth.hpp"
#include "irim/diagnostics.hpp"
#include "irim/error.hpp"
#include "irim/gradient_engine.hpp"
#include "irim/losses.hpp"
#include "irim/serialize.hpp"
#include "irim/training.hpp"

namespace py = pybind11;
using namespace irim;

namespace {

using CArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;
using RArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// [H, W] or [N, H, W] complex -> ComplexField [N, 1, H, W].
ComplexField<double> to_field(const CArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3)
    throw ShapeError("expected a complex array of shape [H, W] or [N, H, W]");
  const std::size_t n = a.ndim() == 3 ? a.shape(0) : 1;
  const std::size_t h = a.shape(a.ndim() - 2), w = a.shape(a.ndim() - 1);
  auto f = ComplexField<double>::zeros(n, h, w);
  const auto* p = a.data();
  for (std::size_t i = 0; i < n * h * w; ++i) {
    f.re[i] = p[i].real();
    f.im[i] = p[i].imag();
  }
  return f;
}

CArray from_field(const ComplexField<double>& f, bool squeeze) {
  const std::size_t n = f.batch(), h = f.height(), w = f.width();
  CArray out = squeeze && n == 1 ? CArray({h, w}) : CArray({n, h, w});
  auto* p = out.mutable_data();
  for (std::size_t i = 0; i < n * h * w; ++i) p[i] = {f.re[i], f.im[i]};
  return out;
}

RealTensor to_image(const RArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a real 2-D image");
  RealTensor t({std::size_t(a.shape(0)), std::size_t(a.shape(1))});
  std::copy(a.data(), a.data() + a.size(), t.storage().begin());
  return t;
}

SamplingMask to_mask(const MaskArray& cols, std::size_t height) {
  if (cols.ndim() != 1) throw ShapeError("mask must be a 1-D array of column flags");
  std::vector<std::uint8_t> c(cols.data(), cols.data() + cols.size());
  const std::size_t kept = std::count_if(c.begin(), c.end(), [](auto v) { return v != 0; });
  return SamplingMask(height, std::move(c), double(cols.size()) / double(std::max<std::size_t>(1, kept)),
                      0.0, 0);
}

py::array_t<std::uint8_t> mask_array(const SamplingMask& m) {
  return py::array_t<std::uint8_t>(py::ssize_t(m.width()), m.columns().data());
}

FourierOperator<double> make_op(const MaskArray& mask, std::size_t height) {
  return FourierOperator<double>(to_mask(mask, height));
}

ModelConfig model_config(std::size_t channels, std::size_t steps, std::size_t layers,
                         std::size_t max_factor, std::size_t hidden,
                         const std::string& flow, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.channels = channels;
  cfg.steps = steps;
  cfg.layers = layers;
  cfg.schedule = fanned_schedule(layers, max_factor);
  cfg.hidden = hidden;
  cfg.flow = gradient_flow_from_string(flow);
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

py::dict config_dict(const ModelConfig& c) {
  py::dict d;
  d["channels"] = c.channels;
  d["steps"] = c.steps;
  d["layers"] = c.layers;
  d["schedule"] = c.schedule;
  d["hidden"] = c.hidden;
  d["reflections"] = c.reflections;
  d["gradient_flow"] = to_string(c.flow);
  d["seed"] = c.seed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Invertible recurrent inference machines for synthetic MRI reconstruction";
  m.attr("__version__") = IRIM_VERSION;

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // ---- forward model ----
  m.def("make_mask",
        [](std::size_t height, std::size_t width, double acceleration,
           std::optional<double> center_fraction, std::uint64_t seed) {
          return mask_array(make_mask(height, width, acceleration,
                                      center_fraction.value_or(default_center_fraction(acceleration)),
                                      seed));
        },
        py::arg("height"), py::arg("width"), py::arg("acceleration"),
        py::arg("center_fraction") = py::none(), py::arg("seed") = 0,
        "Column mask (uint8 per k-space column, natural frequency order).");
  m.def("forward",
        [](const CArray& image, const MaskArray& mask) {
          const auto f = to_field(image);
          return from_field(make_op(mask, f.height()).apply_forward(f), image.ndim() == 2);
        },
        py::arg("image"), py::arg("mask"), "Masked unitary 2-D DFT, A x.");
  m.def("adjoint",
        [](const CArray& kspace, const MaskArray& mask) {
          const auto f = to_field(kspace);
          return from_field(make_op(mask, f.height()).apply_adjoint(f), kspace.ndim() == 2);
        },
        py::arg("kspace"), py::arg("mask"), "Zero-filled inverse, A^H y.");
  m.def("generate_phantom",
        [](std::size_t size, std::uint64_t index, std::uint64_t seed, double phase_amplitude) {
          PhantomConfig cfg;
          cfg.height = cfg.width = size;
          cfg.seed = seed;
          cfg.phase_amplitude = phase_amplitude;
          return from_field(generate_phantom<double>(cfg, index), true);
        },
        py::arg("size") = 32, py::arg("index") = 0, py::arg("seed") = 0,
        py::arg("phase_amplitude") = 0.5);

  // ---- metrics ----
  m.def("nmse", [](const CArray& est, const CArray& ref) { return nmse(to_field(est), to_field(ref)); },
        py::arg("estimate"), py::arg("reference"));
  m.def("psnr", [](const RArray& est, const RArray& ref) { return psnr(to_image(est), to_image(ref)); },
        py::arg("estimate"), py::arg("reference"));
  m.def("ssim", [](const RArray& est, const RArray& ref) { return ssim(to_image(est), to_image(ref)); },
        py::arg("estimate"), py::arg("reference"));

  // ---- model ----
  py::class_<IRIMModel<double>>(m, "Model")
      .def(py::init([](std::size_t channels, std::size_t steps, std::size_t layers,
                       std::size_t max_factor, std::size_t hidden, const std::string& flow,
                       std::uint64_t seed) {
             IRIMModel<double> model(
                 model_config(channels, steps, layers, max_factor, hidden, flow, seed));
             model.initialize();
             return model;
           }),
           py::arg("channels") = 16, py::arg("steps") = 4, py::arg("layers") = 6,
           py::arg("max_factor") = 4, py::arg("hidden") = 16,
           py::arg("gradient_flow") = "exact", py::arg("seed") = 0)
      .def_property_readonly("config", [](const IRIMModel<double>& self) { return config_dict(self.config()); })
      .def_property_readonly("parameter_count", &IRIMModel<double>::parameter_count)
      .def("zero_residuals", &IRIMModel<double>::zero_residuals)
      .def("reconstruct",
           [](const IRIMModel<double>& self, const CArray& kspace, const MaskArray& mask) {
             const auto d = to_field(kspace);
             const auto op = make_op(mask, d.height());
             return from_field(irim_rollout(self, d, op, self.steps()).estimate(), kspace.ndim() == 2);
           },
           py::arg("kspace"), py::arg("mask"), "Runs every step from the zero state.")
      .def("reversal_error",
           [](const IRIMModel<double>& self, const CArray& kspace, const MaskArray& mask) {
             const auto d = to_field(kspace);
             const auto op = make_op(mask, d.height());
             auto state = irim_rollout(self, d, op, self.steps()).final_state;
             for (std::size_t t = self.steps(); t-- > 0;)
               state = irim_reverse_step(state, d, op, self.step(t));
             double err = 0.0;
             for (double v : state.values.data()) err = std::max(err, std::abs(v));
             return err;
           },
           py::arg("kspace"), py::arg("mask"),
           "Max |state| after running the rollout backwards to step 0.")
      .def("gradients",
           [](const IRIMModel<double>& self, const CArray& target, const CArray& kspace,
              const MaskArray& mask, const std::string& mode, double keep_fraction,
              std::uint64_t seed) {
             const auto d = to_field(kspace);
             const auto op = make_op(mask, d.height());
             const MaskedNmseLoss<double> loss(to_field(target), keep_fraction, seed);
             const auto r = backprop(self, d, op, loss, last_step_weights(self.steps()),
                                     backprop_mode_from_string(mode));
             py::list grads;
             for (const auto& g : r.grads) grads.append(py::array_t<double>(g.size(), g.data()));
             py::dict out;
             out["loss"] = r.loss;
             out["grads"] = grads;
             out["peak_elements"] = r.peak_elements;
             out["layer_evals"] = r.layer_evals;
             return out;
           },
           py::arg("target"), py::arg("kspace"), py::arg("mask"), py::arg("mode") = "invertible",
           py::arg("keep_fraction") = 1.0, py::arg("seed") = 0)
      .def("save", [](const IRIMModel<double>& self, const std::string& dir) { return save_checkpoint(self, dir); },
           py::arg("directory"), "Writes checkpoint.bin and model_manifest.json; returns the sha256.")
      .def_static("load", [](const std::string& path) { return load_checkpoint<double>(path); },
                  py::arg("path"));

  // ---- data and training ----
  m.def("build_dataset",
        [](const std::string& dir, std::size_t n_train, std::size_t n_val, std::size_t size,
           std::uint64_t seed) {
          PhantomConfig cfg;
          cfg.height = cfg.width = size;
          cfg.seed = seed;
          const auto r = build_dataset(cfg, n_train, n_val, dir);
          py::dict out;
          out["n_train"] = r.manifest.n_train;
          out["n_val"] = r.manifest.n_val;
          out["written"] = r.written;
          return out;
        },
        py::arg("directory"), py::arg("n_train"), py::arg("n_val"), py::arg("size") = 32,
        py::arg("seed") = 0);
  m.def("train",
        [](IRIMModel<double>& model, const std::string& data_dir, std::size_t iterations,
           std::size_t batch, double lr, double keep_fraction, std::vector<double> accelerations,
           const std::string& mode, std::uint64_t seed) {
          const auto data = Dataset::open(data_dir);
          TrainConfig tc;
          tc.iterations = iterations;
          tc.batch = batch;
          tc.adam.lr = lr;
          tc.loss.keep_fraction = keep_fraction;
          tc.loss.seed = derive_seed(seed, 3);
          tc.accelerations = std::move(accelerations);
          tc.mode = backprop_mode_from_string(mode);
          tc.seed = derive_seed(seed, 2);
          AdamState state;
          std::vector<TrainLogRow> rows;
          {
            py::gil_scoped_release release;
            rows = train(model, data, tc, state);
          }
          py::list out;
          for (const auto& r : rows) {
            py::dict d;
            d["iteration"] = r.iteration;
            d["loss"] = r.loss;
            d["grad_norm"] = r.grad_norm;
            d["peak_retained_elements"] = r.peak_retained_elements;
            out.append(d);
          }
          return out;
        },
        py::arg("model"), py::arg("data_dir"), py::arg("iterations"), py::arg("batch") = 4,
        py::arg("lr") = 1e-3, py::arg("keep_fraction") = 0.01,
        py::arg("accelerations") = std::vector<double>{4.0}, py::arg("mode") = "invertible",
        py::arg("seed") = 0);
  m.def("evaluate",
        [](const IRIMModel<double>* model, const std::string& data_dir,
           std::vector<double> accelerations, bool ground_truth) {
          const auto data = Dataset::open(data_dir);
          EvalConfig ec;
          ec.accelerations = std::move(accelerations);
          ec.include_ground_truth = ground_truth;
          py::list out;
          for (const auto& r : evaluate(model, data, ec)) {
            py::dict d;
            d["item_id"] = r.item_id;
            d["method"] = r.method;
            d["acceleration"] = r.acceleration;
            d["nmse"] = r.nmse;
            d["psnr"] = r.psnr;
            d["ssim"] = r.ssim;
            out.append(d);
          }
          return out;
        },
        py::arg("model"), py::arg("data_dir"),
        py::arg("accelerations") = std::vector<double>{4.0, 8.0},
        py::arg("ground_truth") = false, "model=None evaluates only the baselines.");

  // ---- diagnostics ----
  m.def("roundtrip_error",
        [](const std::string& coupling, std::size_t layers, std::uint64_t seed,
           const std::string& precision, std::size_t channels, std::size_t size,
           std::size_t max_factor, std::size_t hidden) {
          const StackProblem p{channels, size, max_factor, hidden};
          CouplingKind kind;
          if (coupling == "additive") kind = CouplingKind::kAdditive;
          else if (coupling == "affine") kind = CouplingKind::kAffine;
          else throw ConfigError("coupling must be 'additive' or 'affine'");
          if (precision == "f32") return roundtrip_error<float>(kind, p, layers, seed);
          if (precision == "f64") return roundtrip_error<double>(kind, p, layers, seed);
          throw ConfigError("precision must be 'f32' or 'f64'");
        },
        py::arg("coupling"), py::arg("layers"), py::arg("seed") = 0,
        py::arg("precision") = "f64", py::arg("channels") = 16, py::arg("size") = 16,
        py::arg("max_factor") = 4, py::arg("hidden") = 16);
  m.def("gradcheck",
        [](std::size_t channels, std::size_t steps, std::size_t layers, std::size_t hidden,
           std::size_t size, std::size_t coordinates, double h, std::uint64_t seed) {
          GradcheckConfig gc;
          gc.model = model_config(channels, steps, layers, 4, hidden, "exact", seed);
          gc.size = size;
          gc.coordinates = coordinates;
          gc.h = h;
          gc.seed = seed;
          const auto r = run_gradcheck(gc);
          py::dict out;
          out["fd_vs_stored"] = r.fd_vs_stored;
          out["fd_vs_invertible"] = r.fd_vs_invertible;
          out["stored_vs_invertible"] = r.stored_vs_invertible;
          out["coordinates"] = r.rows.size();
          return out;
        },
        py::arg("channels") = 16, py::arg("steps") = 4, py::arg("layers") = 6,
        py::arg("hidden") = 16, py::arg("size") = 16, py::arg("coordinates") = 20,
        py::arg("h") = 1e-6, py::arg("seed") = 0);
}
