#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lfda/criteria.hpp"
#include "lfda/errors.hpp"
#include "lfda/io.hpp"
#include "lfda/posterior.hpp"
#include "lfda/sampler.hpp"
#include "lfda/simgen.hpp"

namespace py = pybind11;
using namespace lfda;

namespace {

/// Complete surfaces as an (n, n_s, n_t) list of matrices plus covariates.
FunctionalDataset make_dataset(const std::vector<Matrix>& surfaces, const std::vector<double>& s,
                               const std::vector<double>& t, std::optional<Matrix> x) {
  FunctionalDataset data;
  data.s_grid = s;
  data.t_grid = t;
  data.d = x ? static_cast<std::size_t>(x->cols()) : 1;
  if (x && static_cast<std::size_t>(x->rows()) != surfaces.size())
    throw ArgumentError("x needs one row per subject");
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    SubjectRecord r;
    r.id = std::to_string(i + 1);
    r.y = surfaces[i];
    r.mask = r.y.array().isFinite();
    r.y = r.mask.select(r.y, 0.0);
    r.x = x ? Vector(x->row(static_cast<Eigen::Index>(i)).transpose()) : Vector::Ones(1);
    data.subjects.push_back(std::move(r));
  }
  data.validate();
  return data;
}

/// Masked cells come back as NaN.
std::vector<Matrix> surfaces_of(const FunctionalDataset& data) {
  std::vector<Matrix> out;
  for (const auto& r : data.subjects)
    out.push_back(r.mask.select(r.y, std::numeric_limits<double>::quiet_NaN()));
  return out;
}

py::dict band_dict(const FunctionBand& b) {
  py::dict d;
  d["points"] = b.points;
  d["center"] = b.center;
  d["lower"] = b.lower;
  d["upper"] = b.upper;
  d["level"] = b.level;
  d["critical_value"] = b.critical_value;
  return d;
}

py::dict axis_dict(const AxisSummary& a) {
  py::dict d;
  d["covariance"] = a.mean_marginal.matrix;
  d["eigenvalues"] = a.eigenvalues_mean;
  d["eigenvalue_draws"] = a.eigenvalue_draws;
  py::list funcs;
  for (const auto& b : a.eigenfunctions) funcs.append(band_dict(b));
  d["eigenfunctions"] = funcs;
  d["crossings"] = a.crossings;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bayesian longitudinal functional data analysis";

  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<DatasetMismatchError>(m, "DatasetMismatchError", PyExc_ValueError);
  // Translators run newest first, so subclasses follow their bases.
  auto format_error = py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<VersionError>(m, "VersionError", format_error.ptr());
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<ChainError>(m, "ChainError", PyExc_RuntimeError);

  py::class_<BasisConfig>(m, "BasisConfig")
      .def(py::init<>())
      .def(py::init([](int degree, std::vector<double> knots, double lo, double hi) {
             BasisConfig b{degree, std::move(knots), lo, hi};
             b.validate();
             return b;
           }),
           py::arg("degree"), py::arg("interior_knots"), py::arg("lo") = 0.0, py::arg("hi") = 1.0)
      .def_static("uniform", &BasisConfig::uniform, py::arg("degree"), py::arg("dimension"), py::arg("lo") = 0.0,
                  py::arg("hi") = 1.0)
      .def_readwrite("degree", &BasisConfig::degree)
      .def_readwrite("interior_knots", &BasisConfig::interior_knots)
      .def_readwrite("lo", &BasisConfig::lo)
      .def_readwrite("hi", &BasisConfig::hi)
      .def_property_readonly("dimension", &BasisConfig::dimension)
      .def("knot_vector", &BasisConfig::knot_vector);

  m.def("default_s_basis", &default_s_basis);
  m.def("default_t_basis", &default_t_basis);
  m.def(
      "build_basis",
      [](const BasisConfig& c, const std::vector<double>& points) { return build_basis(c, points); },
      py::arg("config"), py::arg("points"));

  py::class_<Hyperparameters>(m, "Hyperparameters")
      .def(py::init<>())
      .def_readwrite("q1", &Hyperparameters::q1)
      .def_readwrite("q2", &Hyperparameters::q2)
      .def_readwrite("nu1", &Hyperparameters::nu1)
      .def_readwrite("nu2", &Hyperparameters::nu2)
      .def_readwrite("r1", &Hyperparameters::r1)
      .def_readwrite("r2", &Hyperparameters::r2)
      .def_readwrite("a_sigma", &Hyperparameters::a_sigma)
      .def_readwrite("b_sigma", &Hyperparameters::b_sigma)
      .def_readwrite("a_h", &Hyperparameters::a_h)
      .def_readwrite("b_h", &Hyperparameters::b_h)
      .def_readwrite("a_phi", &Hyperparameters::a_phi)
      .def_readwrite("b_phi", &Hyperparameters::b_phi);

  py::class_<ChainConfig>(m, "ChainConfig")
      .def(py::init<>())
      .def_readwrite("n_iterations", &ChainConfig::n_iterations)
      .def_readwrite("burn_in", &ChainConfig::burn_in)
      .def_readwrite("thin", &ChainConfig::thin)
      .def_readwrite("n_chains", &ChainConfig::n_chains)
      .def_readwrite("seed", &ChainConfig::seed)
      .def_readwrite("mh_step_sd", &ChainConfig::mh_step_sd)
      .def_readwrite("adapt", &ChainConfig::adapt)
      .def_readwrite("cache_omega", &ChainConfig::cache_omega)
      .def_readwrite("warm_start", &ChainConfig::warm_start);

  py::class_<ScenarioSpec>(m, "ScenarioSpec")
      .def(py::init<>())
      .def_readwrite("case_id", &ScenarioSpec::case_id)
      .def_readwrite("n_subjects", &ScenarioSpec::n_subjects)
      .def_readwrite("n_s", &ScenarioSpec::n_s)
      .def_readwrite("n_t", &ScenarioSpec::n_t)
      .def_readwrite("noise_var", &ScenarioSpec::noise_var)
      .def_readwrite("matern_sigma2", &ScenarioSpec::matern_sigma2)
      .def_readwrite("matern_rho", &ScenarioSpec::matern_rho)
      .def_readwrite("alpha", &ScenarioSpec::alpha)
      .def_readwrite("k_terms", &ScenarioSpec::k_terms)
      .def("s_grid", &ScenarioSpec::s_grid)
      .def("t_grid", &ScenarioSpec::t_grid);

  py::class_<FunctionalDataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("surfaces"), py::arg("s_grid"), py::arg("t_grid"),
           py::arg("x") = py::none(),
           "Surfaces on a shared grid; NaN cells are treated as unobserved.")
      .def_readonly("s_grid", &FunctionalDataset::s_grid)
      .def_readonly("t_grid", &FunctionalDataset::t_grid)
      .def_property_readonly("n_subjects", &FunctionalDataset::n_subjects)
      .def_property_readonly("n_observed", &FunctionalDataset::n_observed)
      .def_property_readonly("surfaces", &surfaces_of)
      .def_property_readonly("x", [](const FunctionalDataset& d) {
        Matrix x(d.n_subjects(), d.d);
        for (std::size_t i = 0; i < d.n_subjects(); ++i) x.row(static_cast<Eigen::Index>(i)) = d.subjects[i].x;
        return x;
      })
      .def("content_hash", &FunctionalDataset::content_hash)
      .def("to_csv", &format_dataset);

  m.def("load_dataset", [](const std::string& path) { return load_dataset(path); }, py::arg("path"));
  m.def("save_dataset", &save_dataset, py::arg("path"), py::arg("data"));

  m.def(
      "simulate",
      [](const ScenarioSpec& spec, std::uint64_t seed, const BasisConfig& s_basis, const BasisConfig& t_basis,
         std::size_t n_components) {
        Rng rng(seed, 0);
        SimulatedData sim = generate(spec, rng, TruthOptions{s_basis, t_basis, n_components});
        py::dict truth;
        truth["mean"] = sim.truth.mean;
        truth["gram"] = sim.truth.gram;
        truth["k_s"] = sim.truth.k_s.matrix;
        truth["k_t"] = sim.truth.k_t.matrix;
        truth["psi"] = sim.truth.psi;
        truth["phi"] = sim.truth.phi;
        return py::make_tuple(std::move(sim.data), truth);
      },
      py::arg("scenario"), py::arg("seed") = 1, py::arg("s_basis") = default_s_basis(),
      py::arg("t_basis") = default_t_basis(), py::arg("n_components") = 2,
      "Draws a dataset from stream (seed, 0); returns (Dataset, truth dict).");

  py::class_<PosteriorDraws>(m, "Draws")
      .def_property_readonly("n_draws", [](const PosteriorDraws& d) { return d.draws.size(); })
      .def_property_readonly("any_failed", &PosteriorDraws::any_failed)
      .def_readonly("dataset_hash", &PosteriorDraws::dataset_hash)
      .def_readonly("s_basis", &PosteriorDraws::s_basis)
      .def_readonly("t_basis", &PosteriorDraws::t_basis)
      .def_readonly("hyper", &PosteriorDraws::hyper)
      .def_readonly("config", &PosteriorDraws::config)
      .def_property_readonly("log_likelihood",
                             [](const PosteriorDraws& d) {
                               Vector v(d.draws.size());
                               for (std::size_t i = 0; i < d.draws.size(); ++i) v[i] = d.draws[i].log_likelihood;
                               return v;
                             })
      .def("phi2", [](const PosteriorDraws& d) {
        Vector v(d.draws.size());
        for (std::size_t i = 0; i < d.draws.size(); ++i) v[i] = d.draws[i].state.phi2;
        return v;
      })
      .def("lambda_", [](const PosteriorDraws& d, std::size_t i) { return d.draws.at(i).state.lambda; })
      .def("gamma", [](const PosteriorDraws& d, std::size_t i) { return d.draws.at(i).state.gamma; })
      .def("beta", [](const PosteriorDraws& d, std::size_t i) { return d.draws.at(i).state.beta; })
      .def("save", [](const PosteriorDraws& d, const std::string& path) { save_draws(path, d); })
      .def("to_bytes", [](const PosteriorDraws& d) { return py::bytes(encode_draws(d)); });

  m.def("load_draws", &load_draws, py::arg("path"));
  m.def(
      "draws_from_bytes", [](const py::bytes& b) { return decode_draws(std::string(b)); }, py::arg("data"));

  m.def(
      "fit",
      [](const FunctionalDataset& data, const Hyperparameters& hyper, const ChainConfig& chain,
         const BasisConfig& s_basis, const BasisConfig& t_basis) {
        py::gil_scoped_release release;
        return run_chain(data, hyper, s_basis, t_basis, chain);
      },
      py::arg("data"), py::arg("hyper") = Hyperparameters{}, py::arg("chain") = ChainConfig{},
      py::arg("s_basis") = default_s_basis(), py::arg("t_basis") = default_t_basis());

  m.def(
      "summarize",
      [](const PosteriorDraws& draws, double alpha, std::size_t rank, std::vector<double> s_points,
         std::vector<double> t_points) {
        SummaryOptions opt;
        opt.alpha = alpha;
        opt.rank = rank;
        opt.s_points = std::move(s_points);
        opt.t_points = std::move(t_points);
        PosteriorSummary s;
        {
          py::gil_scoped_release release;
          s = summarize(draws, opt);
        }
        py::dict d;
        d["s_points"] = s.s_points;
        d["t_points"] = s.t_points;
        d["mean"] = band_dict(s.mean);
        d["gram"] = s.kernel_mean.gram;
        d["s_axis"] = axis_dict(s.s_axis);
        d["t_axis"] = axis_dict(s.t_axis);
        d["n_draws"] = s.n_draws;
        return d;
      },
      py::arg("draws"), py::arg("alpha") = 0.05, py::arg("rank") = 3, py::arg("s_points") = std::vector<double>{},
      py::arg("t_points") = std::vector<double>{});

  m.def(
      "criteria",
      [](const PosteriorDraws& draws, const FunctionalDataset& data) {
        if (draws.dataset_hash != data.content_hash())
          throw DatasetMismatchError("draws were fitted to a different dataset");
        const Matrix B1 = build_basis(draws.s_basis, data.s_grid);
        const Matrix B2 = build_basis(draws.t_basis, data.t_grid);
        const CriteriaReport r = compute_criteria(draws, data, B1, B2);
        py::dict d;
        d["dic"] = r.dic;
        d["bic1"] = r.bic1;
        d["bic2"] = r.bic2;
        d["p_dic"] = r.p_dic;
        d["mean_deviance"] = r.mean_deviance;
        d["plugin_deviance"] = r.plugin_deviance;
        d["n_fixed"] = r.n_fixed;
        d["n_total"] = r.n_total;
        d["n_obs"] = r.n_obs;
        return d;
      },
      py::arg("draws"), py::arg("data"));

  m.def(
      "simultaneous_band",
      [](const Matrix& draws, double alpha) { return band_dict(simultaneous_band(draws, alpha)); },
      py::arg("draws"), py::arg("alpha") = 0.05, "Rows are draws, columns grid points.");
  m.def("relative_error", &relative_error, py::arg("estimate"), py::arg("truth"));
}
