#include "qf/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace qf::harness {

namespace {

std::string join_issues(const std::vector<std::string>& v) {
  std::string s = "invalid configuration";
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += (i == 0 ? ": " : "; ") + v[i];
  }
  return s;
}

const char* measure_name(sde::Measure m) {
  return m == sde::Measure::kP ? "P" : "Pprime";
}

bool known_experiment(const std::string& e) {
  return e == "fig1" || e == "fig2" || e == "fig3" || e == "bound" ||
         e == "exact";
}

void collect_issues(const ExperimentConfig& c, std::vector<std::string>* out) {
  if (!known_experiment(c.experiment)) {
    out->push_back("unknown experiment: " + c.experiment);
  }
  if (!c.explicit_model() && c.preset != "spin-half-qnd") {
    out->push_back("unknown preset: " + c.preset);
  }
  if (!(c.eta > 0.0) || c.eta > 1.0) {
    out->push_back("detector efficiency out of range");
  }
  if (!(c.M > 0.0)) out->push_back("M must be > 0");
  if (!(c.t_final > 0.0)) out->push_back("t_final must be > 0");
  if (c.steps < 1) out->push_back("steps must be >= 1");
  if (c.trajectories < 1) out->push_back("trajectories must be >= 1");
  if (c.record_stride < 1) out->push_back("record_stride must be >= 1");
  if (c.threads < 0) out->push_back("threads must be >= 0");
  if (c.output_dir.empty()) out->push_back("output_dir must not be empty");
  if (!(c.gains.alpha > 0.0) || !(c.gains.beta >= 0.0) ||
      !(c.gains.gamma >= 1.0)) {
    out->push_back(
        "feedback gains out of range (need alpha > 0, beta >= 0, gamma >= 1)");
  }

  if ((c.experiment == "fig1" || c.experiment == "fig2" ||
       c.experiment == "fig3") &&
      c.explicit_model()) {
    out->push_back(
        "fig experiments take eta/M/omega_eg, not an explicit H or L");
  }
  if (c.H && core::hermiticity_defect(*c.H) > 1e-10) {
    out->push_back("H is not Hermitian");
  }
  if (c.L && c.L->rows() != c.L->cols()) {
    out->push_back("L must be square");
  }
  if (c.H && c.L && c.H->rows() != c.L->rows()) {
    out->push_back("H and L dimensions differ");
  }
  if (!out->empty()) return;  // later checks assume a well-formed model

  sde::ModelSpec m = c.model();
  try {
    m.validate();
  } catch (const std::exception& e) {
    out->push_back(e.what());
  }
  if (m.dim() != 2 && !c.rho0) {
    out->push_back("rho0 is required when the model dimension is not 2");
    return;
  }
  if (c.rho0) {
    if (c.rho0->rows() != m.dim()) {
      out->push_back("rho0 dimension does not match the model");
      return;
    }
    if (!core::is_density(*c.rho0)) {
      out->push_back("rho0 is not a density matrix");
      return;
    }
  }

  try {
    if (c.experiment == "exact") {
      exact::make_chart(m, c.initial_state());
    } else {
      c.family();
    }
  } catch (const std::exception& e) {
    out->push_back(e.what());
  }
}

}  // namespace

// ---- config ----

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_issues(problems)), issues(std::move(problems)) {}

qubit::QubitParams ExperimentConfig::qubit_params() const {
  qubit::QubitParams p;
  p.omega_eg = omega_eg;
  p.M = M;
  p.eta = eta;
  p.gains = gains;
  return p;
}

sde::ModelSpec ExperimentConfig::model() const {
  sde::ModelSpec m = qubit_params().model();
  if (H) m.H = *H;
  if (L) m.L = *L;
  m.eta = eta;
  return m;
}

Matrix ExperimentConfig::initial_state() const {
  if (rho0) return *rho0;
  return core::bloch_to_density({-1.0, 0.0, 0.0});
}

proj::ExponentialFamily ExperimentConfig::family() const {
  if (generators.empty()) {
    return proj::qnd_family(model(), initial_state());
  }
  proj::ExponentialFamily fam;
  fam.A = generators;
  fam.rho0 = initial_state();
  Matrix sum = Matrix::Zero(fam.dim(), fam.dim());
  for (const auto& a : fam.A) sum += a;
  fam.sum_is_identity = (sum - core::identity(fam.dim())).norm() < 1e-8;
  fam.validate();
  return fam;
}

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  if (experiment == "bound") {
    c.trajectories = 1000;
    c.measure = sde::Measure::kPprime;
  } else if (experiment == "exact") {
    c.trajectories = 32;
  }
  return c;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  std::vector<std::string> issues;
  ExperimentConfig c;
  if (!j.is_object()) {
    throw ConfigError({"top-level JSON value must be an object"});
  }

  auto get = [&](const char* key, auto setter) {
    if (!j.contains(key)) return;
    try {
      setter(j.at(key));
    } catch (const std::exception& e) {
      issues.push_back(std::string(key) + ": " + e.what());
    }
  };

  static const char* known[] = {
      "experiment", "preset",       "H",       "L",
      "rho0",       "eta",          "omega_eg", "M",
      "gains",      "generators",   "t_final", "steps",
      "seed",       "trajectories", "threads", "record_stride",
      "measure",    "output_dir"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) issues.push_back("unknown key: " + it.key());
  }

  get("experiment", [&](const nlohmann::json& v) {
    c.experiment = v.get<std::string>();
  });
  // the experiment defaults seed the remaining fields
  c = default_config(c.experiment);
  get("preset",
      [&](const nlohmann::json& v) { c.preset = v.get<std::string>(); });
  get("H", [&](const nlohmann::json& v) { c.H = core::matrix_from_json(v); });
  get("L", [&](const nlohmann::json& v) { c.L = core::matrix_from_json(v); });
  get("rho0",
      [&](const nlohmann::json& v) { c.rho0 = core::matrix_from_json(v); });
  get("eta", [&](const nlohmann::json& v) { c.eta = v.get<double>(); });
  get("omega_eg",
      [&](const nlohmann::json& v) { c.omega_eg = v.get<double>(); });
  get("M", [&](const nlohmann::json& v) { c.M = v.get<double>(); });
  get("gains", [&](const nlohmann::json& v) {
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (it.key() != "alpha" && it.key() != "beta" && it.key() != "gamma") {
        issues.push_back("gains: unknown key: " + it.key());
      }
    }
    if (v.contains("alpha")) c.gains.alpha = v.at("alpha").get<double>();
    if (v.contains("beta")) c.gains.beta = v.at("beta").get<double>();
    if (v.contains("gamma")) c.gains.gamma = v.at("gamma").get<double>();
  });
  get("generators", [&](const nlohmann::json& v) {
    for (const auto& g : v) c.generators.push_back(core::matrix_from_json(g));
  });
  get("t_final", [&](const nlohmann::json& v) { c.t_final = v.get<double>(); });
  get("steps", [&](const nlohmann::json& v) { c.steps = v.get<long>(); });
  get("seed",
      [&](const nlohmann::json& v) { c.seed = v.get<std::uint64_t>(); });
  get("trajectories",
      [&](const nlohmann::json& v) { c.trajectories = v.get<int>(); });
  get("threads", [&](const nlohmann::json& v) { c.threads = v.get<int>(); });
  get("record_stride",
      [&](const nlohmann::json& v) { c.record_stride = v.get<long>(); });
  get("measure", [&](const nlohmann::json& v) {
    std::string s = v.get<std::string>();
    if (s == "P") {
      c.measure = sde::Measure::kP;
    } else if (s == "Pprime") {
      c.measure = sde::Measure::kPprime;
    } else {
      issues.push_back("measure must be \"P\" or \"Pprime\"");
    }
  });
  get("output_dir",
      [&](const nlohmann::json& v) { c.output_dir = v.get<std::string>(); });

  collect_issues(c, &issues);
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["preset"] = c.preset;
  if (c.H) j["H"] = core::matrix_to_json(*c.H);
  if (c.L) j["L"] = core::matrix_to_json(*c.L);
  if (c.rho0) j["rho0"] = core::matrix_to_json(*c.rho0);
  j["eta"] = c.eta;
  j["omega_eg"] = c.omega_eg;
  j["M"] = c.M;
  j["gains"] = {{"alpha", c.gains.alpha},
                {"beta", c.gains.beta},
                {"gamma", c.gains.gamma}};
  if (!c.generators.empty()) {
    nlohmann::json gens = nlohmann::json::array();
    for (const auto& g : c.generators) gens.push_back(core::matrix_to_json(g));
    j["generators"] = gens;
  }
  j["t_final"] = c.t_final;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["trajectories"] = c.trajectories;
  j["threads"] = c.threads;
  j["record_stride"] = c.record_stride;
  j["measure"] = measure_name(c.measure);
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file: " + path});
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({std::string("JSON parse error: ") + e.what()});
  }
  return config_from_json(j);
}

void validate_config(const ExperimentConfig& c) {
  std::vector<std::string> issues;
  collect_issues(c, &issues);
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

void apply_overrides(ExperimentConfig& c, const CliOverrides& o) {
  if (o.eta) c.eta = *o.eta;
  if (o.M) c.M = *o.M;
  if (o.omega) c.omega_eg = *o.omega;
  if (o.t_final) c.t_final = *o.t_final;
  if (o.steps) c.steps = *o.steps;
  if (o.record_stride) c.record_stride = *o.record_stride;
  if (o.trajectories) c.trajectories = *o.trajectories;
  if (o.threads) c.threads = *o.threads;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
}

// ---- output ----

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) {
      throw std::runtime_error("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_csv_atomic(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw std::invalid_argument("write_csv_atomic: ragged row");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << format_double(row[i]);
    }
    out << '\n';
  }
  write_text_atomic(path, out.str());
}

void write_trajectory_csv(const std::filesystem::path& path,
                          const sde::TrajectoryRecord& rec) {
  std::vector<std::string> header = {"t", "dW", "dY", "Y"};
  std::vector<std::vector<double>> rows;
  rows.reserve(rec.times.size());
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    // increments of the step ending at row i; zeros on the first row
    double dw = i == 0 ? 0.0 : rec.dW[i - 1];
    double dy = i == 0 ? 0.0 : rec.dY[i - 1];
    rows.push_back({rec.times[i], dw, dy, rec.Y[i]});
  }
  write_csv_atomic(path, header, rows);
}

void write_phi_csv(const std::filesystem::path& path,
                   const std::vector<exact::ExactChart>& charts) {
  if (charts.empty()) {
    throw std::invalid_argument("write_phi_csv: no charts");
  }
  const auto& s = *charts.front().s;
  std::vector<std::string> header = {"t"};
  for (int k = 0; k < s.K(); ++k) header.push_back("theta" + std::to_string(k));
  for (int j = 0; j < s.D(); ++j) header.push_back("gamma" + std::to_string(j));
  for (const auto& [k, j] : s.alpha_index) {
    header.push_back("alpha" + std::to_string(k) + "_" + std::to_string(j));
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(charts.size());
  for (const auto& c : charts) {
    std::vector<double> row = {c.t};
    for (int k = 0; k < s.K(); ++k) row.push_back(c.theta[k]);
    for (int j = 0; j < s.D(); ++j) row.push_back(c.gamma[j]);
    for (int a = 0; a < s.n_alpha(); ++a) row.push_back(c.alpha[a]);
    rows.push_back(std::move(row));
  }
  write_csv_atomic(path, header, rows);
}

}  // namespace qf::harness
