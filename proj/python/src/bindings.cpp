/*
 * Copyright (c) 2026 The eegalign Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "eegalign/cli.hpp"
#include "eegalign/config.hpp"
#include "eegalign/eval.hpp"
#include "eegalign/fft.hpp"
#include "eegalign/signal.hpp"
#include "eegalign/textembed.hpp"

namespace py = pybind11;
using namespace eegalign;

namespace {

using Signal = SignalMatrix<double>;

py::array_t<double> spectral_mask_py(const Eigen::Ref<const Signal>& x, double f_min, double f_max,
                                     double sample_rate) {
  BasicSegment<double> s;
  s.data = x;
  return py::cast(spectral_mask(s, BandMask{f_min, f_max}, sample_rate).data);
}

// Keyword arguments mirror cli::Options; levels as a comma list.
py::tuple run_cli(const std::string& command, const std::string& out, const std::string& config,
                  std::optional<std::uint64_t> seed, bool force, const std::string& data,
                  const std::string& checkpoint, const std::string& store, const std::string& levels,
                  std::optional<std::string> instruction, const std::string& trial) {
  cli::Options o;
  o.config_path = config;
  o.out = out;
  o.seed = seed;
  o.force = force;
  o.data = data;
  o.checkpoint = checkpoint;
  o.store = store;
  if (!levels.empty()) o.levels = cli::parse_levels(levels);
  o.instruction = std::move(instruction);
  o.trial = trial;
  std::ostringstream log, err;
  int code;
  {
    py::gil_scoped_release release;
    code = cli::run(command, o, log, err);
  }
  return py::make_tuple(code, log.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "eegalign native core";

  // raised with a .kind attribute naming the error kind
  static py::handle error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object instance = error_type(e.what());
      instance.attr("kind") = to_string(e.kind());
      PyErr_SetObject(error_type.ptr(), instance.ptr());
    }
  });

  m.attr("SAMPLE_RATE") = kSampleRate;
  m.attr("CHANNELS") = kMontageChannels;
  m.attr("WINDOW") = kWindowSamples;

  m.def("rfft", [](const std::vector<double>& x) { return fft::rfft<double>(x); }, py::arg("x"));
  m.def("irfft", [](const std::vector<std::complex<double>>& spec, std::size_t n) { return fft::irfft<double>(spec, n); },
        py::arg("spectrum"), py::arg("n"));
  m.def("spectral_mask", &spectral_mask_py, py::arg("x"), py::arg("f_min"), py::arg("f_max"),
        py::arg("sample_rate") = kSampleRate, "Zero the bins of [f_min, f_max] in each row of x.");

  m.def("balanced_accuracy",
        py::overload_cast<const std::vector<std::string>&, const std::vector<std::string>&,
                          const std::vector<std::string>&>(&balanced_accuracy),
        py::arg("y_true"), py::arg("y_pred"), py::arg("classes"));
  m.def("cohens_kappa",
        [](const std::vector<std::string>& t, const std::vector<std::string>& p, const std::vector<std::string>& c) {
          return cohens_kappa(t, p, c).value;
        },
        py::arg("y_true"), py::arg("y_pred"), py::arg("classes"));

  m.def("pseudo_embed",
        [](const std::string& text, std::uint64_t seed, std::size_t dim) {
          return Eigen::VectorXd(pseudo_embed(text, seed, dim).vector.transpose());
        },
        py::arg("text"), py::arg("seed"), py::arg("dim") = kDefaultTextDim);

  m.def("parse_config", [](const std::string& text) { return flatten(parse_config(text, "<python>")); },
        py::arg("text"), "Validated config as a flat {'section.key': value} dict.");
  m.def("default_config", [] { return flatten(RunConfig{}); });
  m.def("config_ini", [](const std::map<std::string, std::string>& flat) { return to_ini(unflatten(flat)); },
        py::arg("config"));

  m.def("run_cli", &run_cli, py::arg("command"), py::kw_only(), py::arg("out"), py::arg("config") = "",
        py::arg("seed") = py::none(), py::arg("force") = false, py::arg("data") = "", py::arg("checkpoint") = "",
        py::arg("store") = "", py::arg("levels") = "", py::arg("instruction") = py::none(), py::arg("trial") = "",
        "Run a CLI command in-process; returns (exit_code, log, error_json).");
}
