#include "sicmag/config.hpp"
#include "sicmag/error.hpp"
#include "sicmag/magnet.hpp"
#include "sicmag/odmr.hpp"
#include "sicmag/pipeline.hpp"
#include "sicmag/relaxometry.hpp"
#include "sicmag/spinmodel.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

namespace py = pybind11;
using namespace sicmag;

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

py::dict fit_dict(const numfit::FitResult& f) {
  py::dict d;
  d["params"] = to_vector(f.params);
  d["std_errors"] = to_vector(f.std_errors);
  d["residual_norm"] = f.residual_norm;
  d["iterations"] = f.iterations;
  d["converged"] = f.converged;
  d["termination"] = std::string(numfit::to_string(f.termination));
  return d;
}

magnet::Branch branch_arg(const std::string& s) { return magnet::parse_branch(s); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Divacancy magnetometry and relaxometry toolkit";
  m.attr("__version__") = pipeline::kToolVersion;

  py::register_exception<Error>(m, "SicmagError", PyExc_RuntimeError);

  // spin model
  py::class_<spin::SensorSpinModel>(m, "SensorSpinModel")
      .def(py::init<>())
      .def(py::init([](double d0, double dd_dt, double t_ref, double e, double gamma) {
             spin::SensorSpinModel s{d0, dd_dt, t_ref, e, gamma};
             s.validate();
             return s;
           }),
           py::arg("d0_mhz") = spin::kDefaultD0, py::arg("dd_dt_mhz_per_k") = 0.0,
           py::arg("t_ref_k") = spin::kDefaultTref, py::arg("e_mhz") = 0.0,
           py::arg("gamma_mhz_per_g") = spin::kDefaultGamma)
      .def_readwrite("d0_mhz", &spin::SensorSpinModel::d0_mhz)
      .def_readwrite("dd_dt_mhz_per_k", &spin::SensorSpinModel::dd_dt_mhz_per_k)
      .def_readwrite("t_ref_k", &spin::SensorSpinModel::t_ref_k)
      .def_readwrite("e_mhz", &spin::SensorSpinModel::e_mhz)
      .def_readwrite("gamma_mhz_per_g", &spin::SensorSpinModel::gamma_mhz_per_g);

  m.def("zfs_at", &spin::zfs_at, py::arg("model"), py::arg("temperature_k"));
  m.def(
      "transition_frequencies",
      [](const spin::SensorSpinModel& model, double bz, double t, double bx, double by) {
        const auto tr = spin::transition_frequencies(model, {bx, by, bz}, t);
        return py::make_tuple(tr.f_minus_mhz, tr.f_plus_mhz);
      },
      py::arg("model"), py::arg("bz_g"), py::arg("temperature_k") = spin::kDefaultTref, py::arg("bx_g") = 0.0,
      py::arg("by_g") = 0.0);
  m.def(
      "field_from_splitting",
      [](const spin::SensorSpinModel& model, double lo, double hi) {
        const auto s = spin::field_from_splitting(model, lo, hi);
        return py::make_tuple(s.b_g, s.center_mhz);
      },
      py::arg("model"), py::arg("f_minus_mhz"), py::arg("f_plus_mhz"));

  // odmr
  py::class_<odmr::OdmrSpectrum>(m, "OdmrSpectrum")
      .def(py::init([](std::vector<double> f, std::vector<double> s, double t) {
             odmr::OdmrSpectrum sp;
             sp.frequencies_mhz = std::move(f);
             sp.signal = std::move(s);
             sp.meta.temperature_k = t;
             sp.validate();
             return sp;
           }),
           py::arg("frequencies_mhz"), py::arg("signal"), py::arg("temperature_k") = spin::kDefaultTref)
      .def_readonly("frequencies_mhz", &odmr::OdmrSpectrum::frequencies_mhz)
      .def_readonly("signal", &odmr::OdmrSpectrum::signal)
      .def_readonly("transitions_outside_grid", &odmr::OdmrSpectrum::transitions_outside_grid);

  m.def(
      "synthesize_spectrum",
      [](const spin::SensorSpinModel& model, double bz, double t, double start, double stop, double step,
         double fwhm, double contrast, double noise, double baseline, std::uint64_t seed) {
        odmr::SynthesisOptions o;
        o.grid = {start, stop, step};
        o.fwhm_mhz = fwhm;
        o.contrast = contrast;
        o.noise_sigma = noise;
        o.baseline = baseline;
        o.seed = seed;
        auto s = odmr::synthesize_spectrum(model, spin::axial_field(bz), t, o);
        s.meta.temperature_k = t;
        return s;
      },
      py::arg("model"), py::arg("bz_g"), py::arg("temperature_k") = spin::kDefaultTref,
      py::arg("start_mhz") = 20.0, py::arg("stop_mhz") = 2900.0, py::arg("step_mhz") = 0.25,
      py::arg("fwhm_mhz") = 12.0, py::arg("contrast") = 0.01, py::arg("noise_sigma") = 0.0,
      py::arg("baseline") = 1.0, py::arg("seed") = 0);

  m.def(
      "extract_field",
      [](const odmr::OdmrSpectrum& s, const spin::SensorSpinModel& model, std::optional<double> hint) {
        const auto e = odmr::extract_field(s, model, hint);
        py::dict d;
        d["b_g"] = e.b_g;
        d["sigma_b_g"] = e.sigma_b_g;
        d["d_est_mhz"] = e.d_est_mhz;
        d["sigma_d_mhz"] = e.sigma_d_mhz;
        d["beyond_anticrossing"] = e.beyond_anticrossing;
        d["converged"] = e.converged;
        std::vector<double> centers;
        for (const auto& p : e.fit.peaks) centers.push_back(p.center_mhz);
        d["centers_mhz"] = centers;
        return d;
      },
      py::arg("spectrum"), py::arg("model") = spin::SensorSpinModel{}, py::arg("d_hint_mhz") = py::none());

  m.def(
      "differential_field",
      [](double probe_b, double probe_sigma, double ref_b, double ref_sigma) {
        odmr::FieldEstimate p, r;
        p.b_g = probe_b;
        p.sigma_b_g = probe_sigma;
        r.b_g = ref_b;
        r.sigma_b_g = ref_sigma;
        const auto d = odmr::differential_field(p, r);
        return py::make_tuple(d.b_fgt_g, d.sigma_g);
      },
      py::arg("probe_b_g"), py::arg("probe_sigma_g"), py::arg("reference_b_g"), py::arg("reference_sigma_g"));

  // magnet
  py::class_<magnet::MagnetizationModel>(m, "MagnetizationModel")
      .def(py::init<>())
      .def_readwrite("m_sat_a_per_m", &magnet::MagnetizationModel::m_sat_a_per_m)
      .def_readwrite("tc_k", &magnet::MagnetizationModel::tc_k)
      .def_readwrite("beta_crit", &magnet::MagnetizationModel::beta_crit)
      .def_readwrite("hc_g", &magnet::MagnetizationModel::hc_g)
      .def_readwrite("chi_para", &magnet::MagnetizationModel::chi_para)
      .def_readwrite("chi_high", &magnet::MagnetizationModel::chi_high);

  py::class_<magnet::FlakeGeometry>(m, "FlakeGeometry")
      .def(py::init([](std::array<double, 3> half, std::array<double, 3> center, std::array<double, 3> dir) {
             magnet::FlakeGeometry g{{half[0], half[1], half[2]}, {center[0], center[1], center[2]},
                                     {dir[0], dir[1], dir[2]}};
             g.validate();
             return g;
           }),
           py::arg("half_extents_um") = std::array<double, 3>{5.0, 5.0, 0.01},
           py::arg("center_um") = std::array<double, 3>{0.0, 0.0, 0.01},
           py::arg("direction") = std::array<double, 3>{0.0, 0.0, 1.0})
      .def("volume_um3", &magnet::FlakeGeometry::volume_um3);

  py::class_<magnet::SensorPlacement>(m, "SensorPlacement")
      .def(py::init([](double x, double y, double depth) {
             magnet::SensorPlacement p{x, y, depth};
             p.validate();
             return p;
           }),
           py::arg("offset_x_um") = 5.5, py::arg("offset_y_um") = 0.0, py::arg("depth_nm") = 40.0);

  m.def(
      "magnetization",
      [](const magnet::MagnetizationModel& model, double t, double h, const std::string& branch) {
        return magnet::magnetization(model, t, h, branch_arg(branch));
      },
      py::arg("model"), py::arg("temperature_k"), py::arg("h_applied_g"), py::arg("branch") = "descending");
  m.def(
      "stray_field",
      [](const magnet::FlakeGeometry& g, double m_a_per_m, std::array<double, 3> p) {
        const auto s = magnet::stray_field(g, m_a_per_m, {p[0], p[1], p[2]});
        return py::make_tuple(s.b.bx, s.b.by, s.b.bz);
      },
      py::arg("geometry"), py::arg("m_a_per_m"), py::arg("point_um"));
  m.def(
      "field_at_sensor",
      [](const magnet::MagnetizationModel& model, const magnet::FlakeGeometry& g, const magnet::SensorPlacement& p,
         double t, double h, const std::string& branch) {
        return magnet::field_at_sensor(model, g, p, t, h, branch_arg(branch));
      },
      py::arg("model"), py::arg("geometry"), py::arg("placement"), py::arg("temperature_k"),
      py::arg("h_applied_g") = 200.0, py::arg("branch") = "descending");
  m.def(
      "estimate_tc",
      [](const std::vector<double>& t, const std::vector<double>& b, const std::vector<double>& s,
         std::optional<double> fixed_beta) {
        if (t.size() != b.size() || t.size() != s.size()) {
          throw Error(ErrorCode::InvalidInput, "temperature, field and sigma lengths differ");
        }
        std::vector<magnet::TcSample> series;
        for (std::size_t i = 0; i < t.size(); ++i) series.push_back({t[i], b[i], s[i]});
        magnet::TcOptions o;
        o.fixed_beta = fixed_beta;
        const auto e = magnet::estimate_tc(series, o);
        py::dict d;
        d["tc_k"] = e.tc_k;
        d["beta_crit"] = e.beta_crit;
        d["b0_scale_g"] = e.b0_scale_g;
        d["tc_steepest_k"] = e.tc_steepest_k;
        d["extrapolated"] = e.extrapolated;
        d["fit"] = fit_dict(e.fit);
        return d;
      },
      py::arg("temperatures_k"), py::arg("b_fgt_g"), py::arg("sigma_g"), py::arg("fixed_beta") = py::none());

  // relaxometry
  m.def("log_delays", &relax::log_delays, py::arg("first_us"), py::arg("last_us"), py::arg("count"));
  m.def(
      "synthesize_trace",
      [](double gamma, double n, double amplitude, const std::vector<double>& delays, double noise,
         std::uint64_t seed) {
        return relax::synthesize_trace(gamma, n, amplitude, delays, noise, seed).signal;
      },
      py::arg("gamma_khz"), py::arg("n_stretch"), py::arg("amplitude"), py::arg("delays_us"),
      py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);
  m.def(
      "fit_trace",
      [](std::vector<double> delays, std::vector<double> signal, std::optional<double> fix_n) {
        relax::RelaxationTrace tr;
        tr.delays_us = std::move(delays);
        tr.signal = std::move(signal);
        const auto f = relax::fit_trace(tr, fix_n);
        py::dict d;
        d["gamma_khz"] = f.gamma_khz;
        d["sigma_gamma_khz"] = f.sigma_gamma_khz;
        d["n_stretch"] = f.n_stretch;
        d["sigma_n"] = f.sigma_n;
        d["amplitude"] = f.amplitude;
        d["fit"] = fit_dict(f.fit);
        return d;
      },
      py::arg("delays_us"), py::arg("signal"), py::arg("fix_n") = py::none());

  py::class_<relax::PhononModelParams>(m, "PhononModelParams")
      .def(py::init([](double a, double b, double c, double delta) {
             relax::PhononModelParams p{a, b, c, delta};
             p.validate();
             return p;
           }),
           py::arg("a_khz") = 0.0, py::arg("b_khz") = 0.0, py::arg("c_khz_per_k5") = 0.0,
           py::arg("delta_over_k") = 400.0)
      .def_readwrite("a_khz", &relax::PhononModelParams::a_khz)
      .def_readwrite("b_khz", &relax::PhononModelParams::b_khz)
      .def_readwrite("c_khz_per_k5", &relax::PhononModelParams::c_khz_per_k5)
      .def_readwrite("delta_over_k", &relax::PhononModelParams::delta_over_k)
      .def("delta_mev", &relax::PhononModelParams::delta_mev);

  m.def("phonon_rate", &relax::phonon_rate, py::arg("params"), py::arg("temperature_k"));
  m.def("calibrate_phonon", &relax::calibrate_phonon, py::arg("a_khz"), py::arg("delta_over_k"), py::arg("t1_k"),
        py::arg("r1_khz"), py::arg("t2_k"), py::arg("r2_khz"));
  m.def(
      "fit_phonon_model",
      [](const std::vector<double>& t, const std::vector<double>& r, const std::vector<double>& s) {
        if (t.size() != r.size() || t.size() != s.size()) {
          throw Error(ErrorCode::InvalidInput, "temperature, rate and sigma lengths differ");
        }
        std::vector<relax::RateSample> series;
        for (std::size_t i = 0; i < t.size(); ++i) series.push_back({t[i], r[i], s[i]});
        const auto f = relax::fit_phonon_model(series);
        return py::make_tuple(f.params, fit_dict(f.fit));
      },
      py::arg("temperatures_k"), py::arg("rates_khz"), py::arg("sigmas_khz"));
  m.def(
      "differential_rate",
      [](double p, double r, double sp, double sr) {
        const auto d = relax::differential_rate(p, r, sp, sr);
        return py::make_tuple(d.gamma_fgt_khz, d.sigma_khz, d.noise_consistent);
      },
      py::arg("gamma_p_khz"), py::arg("gamma_r_khz"), py::arg("sigma_p_khz") = 0.0, py::arg("sigma_r_khz") = 0.0);

  py::class_<relax::FluctuationModel>(m, "FluctuationModel")
      .def(py::init([](double a, double tc, double pb, double pa, double w) {
             relax::FluctuationModel f{a, tc, pb, pa, w};
             f.validate();
             return f;
           }),
           py::arg("amplitude_khz") = 1.0, py::arg("tc_k") = 360.0, py::arg("exponent_below") = 1.0,
           py::arg("exponent_above") = 1.0, py::arg("width_k") = 10.0)
      .def_readwrite("amplitude_khz", &relax::FluctuationModel::amplitude_khz)
      .def_readwrite("tc_k", &relax::FluctuationModel::tc_k)
      .def_readwrite("exponent_below", &relax::FluctuationModel::exponent_below)
      .def_readwrite("exponent_above", &relax::FluctuationModel::exponent_above)
      .def_readwrite("width_k", &relax::FluctuationModel::width_k)
      .def("peak_rate_khz", &relax::FluctuationModel::peak_rate_khz);

  m.def("fluctuation_rate", &relax::fluctuation_rate, py::arg("model"), py::arg("temperature_k"));
  m.def("fluctuation_with_peak", &relax::fluctuation_with_peak, py::arg("model"), py::arg("peak_khz"));
  m.def(
      "fit_fluctuation_model",
      [](const std::vector<double>& t, const std::vector<double>& r, const std::vector<double>& s,
         const relax::FluctuationModel& shape) {
        if (t.size() != r.size() || t.size() != s.size()) {
          throw Error(ErrorCode::InvalidInput, "temperature, rate and sigma lengths differ");
        }
        std::vector<relax::RateSample> series;
        for (std::size_t i = 0; i < t.size(); ++i) series.push_back({t[i], r[i], s[i]});
        const auto f = relax::fit_fluctuation_model(series, shape);
        py::dict d;
        d["model"] = f.model;
        d["peak_t_k"] = f.peak_t_k;
        d["sigma_peak_t_k"] = f.sigma_peak_t_k;
        d["fit"] = fit_dict(f.fit);
        return d;
      },
      py::arg("temperatures_k"), py::arg("rates_khz"), py::arg("sigmas_khz"),
      py::arg("shape") = relax::FluctuationModel{});

  // campaign
  m.def("default_config_json", [] { return config::dump_config(config::default_config()); });
  m.def(
      "reproduce",
      [](const std::string& out, std::optional<std::string> config_json, std::optional<std::uint64_t> seed,
         int jobs) {
        auto cfg = config_json ? config::parse_config(*config_json, "config") : config::default_config();
        if (seed) cfg.seed = *seed;
        pipeline::ReproduceResult res;
        {
          py::gil_scoped_release release;
          res = pipeline::reproduce(cfg, out, jobs);
        }
        return py::make_tuple(res.all_pass, res.report.dump());
      },
      py::arg("out_dir"), py::arg("config_json") = py::none(), py::arg("seed") = py::none(), py::arg("jobs") = 1);
}
