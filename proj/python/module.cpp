#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gpcert/dataset.hpp"
#include "gpcert/gp.hpp"
#include "gpcert/kernels.hpp"
#include "gpcert/selection.hpp"
#include "gpcert/socp.hpp"

namespace py = pybind11;
using namespace gpcert;

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Gaussian-process models of control-affine residuals, correlation-aware "
      "online data selection, and the cone-constrained safety filter solver.";

  // ---- kernels -----------------------------------------------------------
  py::class_<SeKernelParams>(m, "SeKernelParams")
      .def(py::init<>())
      .def(py::init([](double signal_variance, const VectorXd& lengthscales) {
             SeKernelParams p;
             p.signal_variance = signal_variance;
             p.lengthscales = lengthscales;
             return p;
           }),
           py::arg("signal_variance"), py::arg("lengthscales"))
      .def_readwrite("signal_variance", &SeKernelParams::signal_variance)
      .def_readwrite("lengthscales", &SeKernelParams::lengthscales);

  m.def("se_eval", &se_eval, py::arg("params"), py::arg("a"), py::arg("b"));

  py::class_<AdpKernel>(m, "AdpKernel")
      .def_static("squared_exponential", &AdpKernel::squared_exponential,
                  py::arg("f_params"), py::arg("g_params"))
      .def("control_dim", &AdpKernel::control_dim)
      .def("kf", &AdpKernel::kf, py::arg("a"), py::arg("b"))
      .def("kg", &AdpKernel::kg, py::arg("channel"), py::arg("a"), py::arg("b"))
      .def("eval", &AdpKernel::eval, py::arg("x"), py::arg("u"), py::arg("x2"),
           py::arg("u2"))
      .def("eval_u", &AdpKernel::eval_u, py::arg("x"), py::arg("u"), py::arg("x2"),
           py::arg("u2"))
      .def("gram_matrix", &AdpKernel::gram_matrix, py::arg("data"))
      .def("cross_matrix", &AdpKernel::cross_matrix, py::arg("x"), py::arg("data"))
      .def("prior_gram", &AdpKernel::prior_gram, py::arg("x"));

  // ---- dataset -----------------------------------------------------------
  py::class_<Dataset>(m, "Dataset")
      .def(py::init<int, int>(), py::arg("state_dim"), py::arg("control_dim"))
      .def("state_dim", &Dataset::state_dim)
      .def("control_dim", &Dataset::control_dim)
      .def("size", &Dataset::size)
      .def("__len__", &Dataset::size)
      .def("append",
           [](Dataset& d, const VectorXd& x, const VectorXd& u, double z,
              const std::string& tag) { d.append(x, u, z, tag); },
           py::arg("x"), py::arg("u"), py::arg("z"), py::arg("tag") = "")
      .def("extend", [](Dataset& d, const Dataset& other) { d.append(other); },
           py::arg("other"))
      .def("state", &Dataset::state, py::arg("j"))
      .def("control", &Dataset::control, py::arg("j"))
      .def("output", &Dataset::output, py::arg("j"))
      .def("tag", &Dataset::tag, py::arg("j"))
      .def("states", &Dataset::states)
      .def("controls", &Dataset::controls)
      .def("outputs", &Dataset::outputs)
      .def("subset", &Dataset::subset, py::arg("indices"))
      .def("content_hash", &Dataset::content_hash)
      .def("save", &Dataset::save, py::arg("path"))
      .def_static("load", &Dataset::load, py::arg("path"));

  // ---- GP model ----------------------------------------------------------
  py::class_<GpModel> gp(m, "GpModel");
  py::class_<GpModel::Prediction>(gp, "Prediction")
      .def_readonly("mean", &GpModel::Prediction::mean)
      .def_readonly("variance", &GpModel::Prediction::variance)
      .def_readonly("stddev", &GpModel::Prediction::stddev);
  gp.def_static("fit", &GpModel::fit, py::arg("kernel"), py::arg("data"),
                py::arg("noise_variance"), py::arg("defer_factorization") = false)
      .def_static("prior", &GpModel::prior, py::arg("kernel"), py::arg("state_dim"),
                  py::arg("noise_variance") = 0.0)
      .def("size", &GpModel::size)
      .def("noise_variance", &GpModel::noise_variance)
      .def("jitter", &GpModel::jitter)
      .def("data", &GpModel::data, py::return_value_policy::reference_internal)
      .def("kernel", &GpModel::kernel, py::return_value_policy::reference_internal)
      .def("mean_coeffs", &GpModel::mean_coeffs, py::arg("x"))
      .def("variance_gram", &GpModel::variance_gram, py::arg("x"))
      .def("predict", &GpModel::predict, py::arg("x"), py::arg("u"))
      .def("log_marginal_likelihood", &GpModel::log_marginal_likelihood)
      .def("prior_diag", &GpModel::prior_diag, py::arg("i"));

  py::class_<ErrorBoundConfig>(m, "ErrorBoundConfig")
      .def(py::init<>())
      .def_readwrite("delta", &ErrorBoundConfig::delta)
      .def_readwrite("beta_min", &ErrorBoundConfig::beta_min)
      .def_readwrite("beta_max", &ErrorBoundConfig::beta_max)
      .def_readwrite("grid_size", &ErrorBoundConfig::grid_size);

  m.def("calibrate_beta", &calibrate_beta, py::arg("model"), py::arg("validation"),
        py::arg("config") = ErrorBoundConfig{});

  // ---- selection ---------------------------------------------------------
  py::class_<SelectionConfig> sc(m, "SelectionConfig");
  py::enum_<SelectionConfig::LgHintPolicy>(sc, "LgHintPolicy")
      .value("FullDataset", SelectionConfig::LgHintPolicy::FullDataset)
      .value("PreviousStep", SelectionConfig::LgHintPolicy::PreviousStep);
  sc.def(py::init<>())
      .def_readwrite("M", &SelectionConfig::M)
      .def_readwrite("epsilon", &SelectionConfig::epsilon)
      .def_readwrite("lg_hint_policy", &SelectionConfig::lg_hint_policy);

  py::class_<CorrelationIndicator>(m, "CorrelationIndicator")
      .def("size", &CorrelationIndicator::size)
      .def("epsilon", &CorrelationIndicator::epsilon)
      .def("dataset_hash", &CorrelationIndicator::dataset_hash)
      .def("at", &CorrelationIndicator::at, py::arg("i"), py::arg("j"))
      .def("save", &CorrelationIndicator::save, py::arg("path"));

  py::class_<OnlineSubset>(m, "OnlineSubset")
      .def_readonly("indices", &OnlineSubset::indices)
      .def_readonly("lg_direction", &OnlineSubset::lg_direction)
      .def_readonly("exhausted", &OnlineSubset::exhausted)
      .def_readonly("zero_alignment_fallback", &OnlineSubset::zero_alignment_fallback)
      .def("size", &OnlineSubset::size);

  py::class_<BoundCheck>(m, "BoundCheck")
      .def_readonly("lhs", &BoundCheck::lhs)
      .def_readonly("rhs", &BoundCheck::rhs)
      .def_readonly("conditions_ok", &BoundCheck::conditions_ok);

  m.def("alignment", &alignment, py::arg("model"), py::arg("x"), py::arg("u"),
        py::arg("i"));
  m.def("modified_alignment", &modified_alignment, py::arg("model"), py::arg("x"),
        py::arg("u"), py::arg("i"), py::arg("epsilon"), py::arg("M"));
  m.def("selection_objective", &selection_objective, py::arg("model"),
        py::arg("subset"), py::arg("x"), py::arg("u"));
  m.def("build_correlation_indicator", &build_correlation_indicator, py::arg("model"),
        py::arg("epsilon"));
  m.def("naive_select", &naive_select, py::arg("model"), py::arg("x"),
        py::arg("lg_dir"), py::arg("M"));
  m.def("select_online",
        [](const GpModel& model, const VectorXd& x, const SelectionConfig& cfg,
           const CorrelationIndicator& B, const RowVectorXd& lg_dir) {
          return select_online(model, x, cfg, B, lg_dir);
        },
        py::arg("model"), py::arg("x"), py::arg("config"), py::arg("indicator"),
        py::arg("lg_dir"));
  m.def("asymptotic_direction_cost", &asymptotic_direction_cost, py::arg("model"),
        py::arg("subset"), py::arg("x"), py::arg("lg_dir"));
  m.def("theorem1_bound", &theorem1_bound, py::arg("model"), py::arg("subset"),
        py::arg("x"), py::arg("u"), py::arg("epsilon"));
  m.def("theorem3_bound", &theorem3_bound, py::arg("model"), py::arg("subset"),
        py::arg("x"), py::arg("u"), py::arg("epsilon"));
  m.def("data_quality", &data_quality, py::arg("model"), py::arg("subset"),
        py::arg("x"), py::arg("lg_dir"));
  m.def("correlation_quantiles", &correlation_quantiles, py::arg("model"),
        py::arg("probs"));

  // ---- cone solver -------------------------------------------------------
  py::class_<Box>(m, "Box")
      .def(py::init<>())
      .def(py::init([](const VectorXd& lo, const VectorXd& hi) {
             return Box{lo, hi};
           }),
           py::arg("lo"), py::arg("hi"))
      .def_readwrite("lo", &Box::lo)
      .def_readwrite("hi", &Box::hi)
      .def("contains", &Box::contains, py::arg("u"), py::arg("tol") = 0.0)
      .def("clamp", &Box::clamp, py::arg("u"));

  py::class_<ConeProblem>(m, "ConeProblem")
      .def(py::init<>())
      .def_readwrite("u_ref", &ConeProblem::u_ref)
      .def_readwrite("cone_scale", &ConeProblem::cone_scale)
      .def_readwrite("cone_matrix", &ConeProblem::cone_matrix)
      .def_readwrite("affine_offset", &ConeProblem::affine_offset)
      .def_readwrite("affine_row", &ConeProblem::affine_row)
      .def_readwrite("bounds", &ConeProblem::bounds)
      .def_readwrite("linear_objective", &ConeProblem::linear_objective);

  py::enum_<SolveStatus>(m, "SolveStatus")
      .value("Optimal", SolveStatus::Optimal)
      .value("Infeasible", SolveStatus::Infeasible)
      .value("NumericalFailure", SolveStatus::NumericalFailure);

  py::class_<SolveOutcome>(m, "SolveOutcome")
      .def_readonly("status", &SolveOutcome::status)
      .def_readonly("u", &SolveOutcome::u)
      .def_readonly("objective", &SolveOutcome::objective)
      .def_readonly("iterations", &SolveOutcome::iterations)
      .def_readonly("primal_residual", &SolveOutcome::primal_residual)
      .def_readonly("dual_residual", &SolveOutcome::dual_residual);

  m.def("solve_filter_problem", &solve_filter_problem, py::arg("problem"),
        py::arg("tol") = 1e-8);
  m.def("solve_backup_problem", &solve_backup_problem, py::arg("problem"),
        py::arg("tol") = 1e-8);
  m.def("kkt_residual", &kkt_residual, py::arg("problem"), py::arg("outcome"),
        py::arg("backup_objective") = false);
  m.def("cone_violation", &cone_violation, py::arg("problem"), py::arg("u"));
}
