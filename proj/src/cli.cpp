#include "hbvm/cli.hpp"

#include "hbvm/missions.hpp"

#include "CLI11.hpp"
#include "json.hpp"
#include "toml.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

namespace hbvm::cli {

namespace {

using json = nlohmann::ordered_json;

const std::set<std::string> kListKeys = {"y0", "values", "P1", "P2"};
const std::set<std::string> kStringKeys = {"model", "driver", "jacobian", "csv", "report", "gnuplot"};
const std::set<std::string> kIntKeys = {"k", "s", "n", "steps", "max_iters", "max_halvings", "divergence_limit",
                                        "oversample"};

const std::set<std::string> kOutputKeys = {"csv", "report", "gnuplot", "oversample"};
const std::set<std::string> kSolveKeys = {"mu", "k", "s", "n", "tol", "max_iters", "max_halvings",
                                          "divergence_limit", "jacobian"};

struct KindFields {
  std::set<std::string> required;
  std::set<std::string> optional;
};

const std::map<std::string, KindFields>& kind_fields() {
  static const std::map<std::string, KindFields> table = {
      {"ivp", {{"model", "y0", "h", "steps"}, {"mu", "k", "s"}}},
      {"lyapunov-period", {{"T_days"}, {"guess_amplitude"}}},
      {"lyapunov-energy", {{"H"}, {"guess_period_days", "guess_amplitude"}}},
      {"halo-period", {{"T_days"}, {"guess_amplitude", "guess_aspect"}}},
      {"halo-energy", {{"H"}, {"guess_period_days", "guess_amplitude", "guess_aspect"}}},
      {"hill-transfer", {{"tf"}, {"P1", "P2"}}},
      {"halo-transfer", {{"T1_days", "H2"}, {"T_days", "guess_amplitude", "guess_aspect"}}},
      {"continuation",
       {{"driver", "values"}, {"guess_period_days", "guess_amplitude", "guess_aspect", "P1", "P2"}}},
  };
  return table;
}

std::string key_from_flag(std::string flag) {
  std::replace(flag.begin(), flag.end(), '-', '_');
  return flag;
}

double parse_number(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("field '" + key + "': expected a number, got '" + text + "'");
  }
}

Value value_from_text(const std::string& key, const std::string& text) {
  if (kStringKeys.count(key)) return text;
  if (kListKeys.count(key)) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number(key, item));
    return out;
  }
  return parse_number(key, text);
}

Value value_from_toml(const std::string& key, const toml::node& node) {
  if (auto s = node.value<std::string>(); s && node.is_string()) return *s;
  if (node.is_integer() || node.is_floating_point()) return *node.value<double>();
  if (const toml::array* arr = node.as_array()) {
    std::vector<double> out;
    for (const toml::node& item : *arr) {
      if (!(item.is_integer() || item.is_floating_point())) {
        throw ConfigError("field '" + key + "': array entries must be numbers");
      }
      out.push_back(*item.value<double>());
    }
    return out;
  }
  throw ConfigError("field '" + key + "': unsupported value type");
}

double as_number(const std::map<std::string, Value>& f, const std::string& key) {
  const Value& v = f.at(key);
  if (const double* d = std::get_if<double>(&v)) return *d;
  throw ConfigError("field '" + key + "': expected a number");
}

int as_int(const std::map<std::string, Value>& f, const std::string& key) {
  const double v = as_number(f, key);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError("field '" + key + "': expected an integer");
  return int(v);
}

std::string as_string(const std::map<std::string, Value>& f, const std::string& key) {
  const Value& v = f.at(key);
  if (const std::string* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError("field '" + key + "': expected a string");
}

std::vector<double> as_list(const std::map<std::string, Value>& f, const std::string& key) {
  const Value& v = f.at(key);
  if (const auto* l = std::get_if<std::vector<double>>(&v)) return *l;
  if (const double* d = std::get_if<double>(&v)) return {*d};
  throw ConfigError("field '" + key + "': expected a list of numbers");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json value_json(const std::string& key, const Value& v) {
  if (const double* d = std::get_if<double>(&v); d && kIntKeys.count(key)) return json(std::lround(*d));
  return std::visit([](const auto& x) { return json(x); }, v);
}

json report_json(const NewtonReport& r) {
  return json{{"iterations", r.iterations},
              {"residual_history", r.residual_history},
              {"step_history", r.step_history},
              {"condition_estimates", r.condition_estimates},
              {"damping_events", r.damping_events},
              {"lsq_residual", r.lsq_residual},
              {"final_residual", r.final_residual}};
}

json orbit_json(const OrbitResult& r) {
  return json{{"period_days", r.period_days},
              {"period_nondim", r.mesh.period()},
              {"energy", r.energy},
              {"max_energy_drift", r.max_energy_drift},
              {"classification", r.classification}};
}

json transfer_json(const TransferResult& r) {
  double umax = 0.0;
  for (const Vec& u : r.control) umax = std::max(umax, u.norm());
  return json{{"transfer_time_nondim", r.mesh.period()},
              {"transfer_time_days", nondim_to_days(r.mesh.period())},
              {"cost", r.cost},
              {"max_control_norm", umax},
              {"initial_mismatch", r.initial_mismatch},
              {"final_mismatch", r.final_mismatch},
              {"hamiltonian_error", r.hamiltonian_error},
              {"max_relative_drift", r.max_relative_drift}};
}

// What one experiment leaves behind for the writers.
struct Outcome {
  bool converged = true;
  json result = json::object();
  json newton;
  std::optional<MeshSolution> mesh;
  ModelPtr model;
  StagePartition part;
  std::string summary;
};

MissionSetup mission_setup(const RunConfig& c) {
  MissionSetup s;
  s.mu = c.mu;
  s.k = c.k;
  s.s = c.s;
  s.n = c.n;
  s.newton = c.newton;
  return s;
}

GuessShape halo_shape(const RunConfig& c) {
  GuessShape g{5e-3, 2.0, 0.0};
  if (c.guess_amplitude) g.amplitude = *c.guess_amplitude;
  if (c.guess_aspect) g.aspect = *c.guess_aspect;
  return g;
}

MeshSolution lyapunov_start(const RunConfig& c, const MissionSetup& s) {
  const MeshSolution g = lyapunov_guess(s, c.guess_amplitude.value_or(1e-2));
  if (!c.guess_period_days) return g;
  return lyapunov_by_period(s, *c.guess_period_days, g).mesh;
}

MeshSolution halo_start(const RunConfig& c, const MissionSetup& s) {
  const MeshSolution g = halo_guess(s, halo_shape(c));
  if (!c.guess_period_days) return g;
  return halo_by_period(s, *c.guess_period_days, g).mesh;
}

Vec hill_endpoint(const std::vector<double>& given, double dx, double y) {
  if (given.empty()) return equilibrium_state(hill_l2_abscissa() + dx, y, 4);
  if (given.size() != 4) throw ConfigError("Hill endpoints need 4 components (q1, q2, p1, p2)");
  return Eigen::Map<const Vec>(given.data(), 4);
}

Outcome orbit_outcome(const OrbitResult& r, bool spatial, const RunConfig& c) {
  Outcome o;
  o.result = orbit_json(r);
  o.newton = report_json(r.mesh.report);
  o.mesh = r.mesh;
  o.model = crtbp_model({c.mu, spatial});
  o.part = make_partition(c.k, c.s);
  char buf[160];
  std::snprintf(buf, sizeof buf, "converged in %d iterations: period %.6f days, H = %.10f (%s)",
                r.mesh.report.iterations, r.period_days, r.energy, r.classification.c_str());
  o.summary = buf;
  return o;
}

Outcome transfer_outcome(const TransferResult& r, ModelPtr base, const RunConfig& c) {
  Outcome o;
  o.result = transfer_json(r);
  o.newton = report_json(r.mesh.report);
  o.mesh = r.mesh;
  o.model = std::make_shared<ExtendedControlModel>(std::move(base));
  o.part = make_partition(c.k, c.s);
  char buf[160];
  std::snprintf(buf, sizeof buf, "converged in %d iterations: J = %.6e, Hhat(y_n) - Hhat(y_0) = %.3e",
                r.mesh.report.iterations, r.cost, r.hamiltonian_error);
  o.summary = buf;
  return o;
}

Outcome run_ivp(const RunConfig& c) {
  Outcome o;
  o.model = model_by_name(c.model, c.mu);
  o.part = make_partition(c.k, c.s);
  if (Eigen::Index(c.y0.size()) != o.model->dim()) {
    throw ConfigError("field 'y0': model " + c.model + " needs " + std::to_string(o.model->dim()) + " components");
  }
  MeshSolution mesh;
  mesh.h = *c.h;
  mesh.y.push_back(Eigen::Map<const Vec>(c.y0.data(), Eigen::Index(c.y0.size())));
  for (int i = 0; i < c.steps; ++i) {
    const StepResult r = hbvm_step(*o.model, mesh.y.back(), mesh.h, o.part);
    mesh.Z.push_back(r.Z);
    mesh.y.push_back(r.y1);
  }
  const std::vector<double> drift = energy_drift(*o.model, mesh.y);
  double worst = 0.0;
  for (double d : drift) worst = std::max(worst, std::abs(d));
  o.result = json{{"final_time", mesh.h * c.steps}, {"energy", o.model->energy(mesh.y.front())},
                  {"max_energy_drift", worst}};
  o.summary = "integrated " + std::to_string(c.steps) + " steps, max |H - H0| = " + fmt(worst);
  o.mesh = std::move(mesh);
  return o;
}

template <class R>
Outcome continuation_outcome(const std::vector<ContinuationStep<R>>& steps, const std::function<json(const R&)>& to_json,
                             const std::function<Outcome(const R&)>& last) {
  Outcome o;
  json arr = json::array();
  const R* final_result = nullptr;
  int ok = 0;
  for (const auto& st : steps) {
    json j{{"parameter", st.parameter}, {"converged", st.converged()}};
    if (st.converged()) {
      j["result"] = to_json(*st.result);
      j["iterations"] = st.result->mesh.report.iterations;
      final_result = &*st.result;
      ++ok;
    } else {
      j["error"] = st.error;
    }
    arr.push_back(j);
  }
  if (final_result) o = last(*final_result);
  o.converged = ok > 0;
  o.result = json{{"steps", arr}, {"converged_steps", ok}};
  o.summary = std::to_string(ok) + " of " + std::to_string(steps.size()) + " continuation steps converged";
  return o;
}

Outcome run_continuation(const RunConfig& c) {
  const MissionSetup s = mission_setup(c);
  using OrbitDriver = std::function<OrbitResult(double, const MeshSolution&)>;
  if (c.driver == "hill-transfer") {
    const Vec P1 = hill_endpoint(c.P1, 0.0, 0.0), P2 = hill_endpoint(c.P2, 0.005, 0.0044);
    const std::function<TransferResult(double, const MeshSolution&)> drv = [&](double tf, const MeshSolution& w) {
      return w.n() == 0 ? hill_transfer(P1, P2, tf, s) : hill_transfer(P1, P2, tf, s, &w);
    };
    const auto steps = continuation(drv, c.values, MeshSolution{});
    return continuation_outcome<TransferResult>(steps, transfer_json, [&](const TransferResult& r) {
      return transfer_outcome(r, hill_model(), c);
    });
  }
  OrbitDriver drv;
  MeshSolution start;
  bool spatial = false;
  if (c.driver == "lyapunov-period") {
    drv = [&](double T, const MeshSolution& g) { return lyapunov_by_period(s, T, g); };
    start = lyapunov_start(c, s);
  } else if (c.driver == "lyapunov-energy") {
    drv = [&](double H, const MeshSolution& g) { return lyapunov_by_energy(s, H, g); };
    start = lyapunov_start(c, s);
  } else if (c.driver == "halo-period") {
    drv = [&](double T, const MeshSolution& g) { return halo_by_period(s, T, g); };
    start = halo_start(c, s);
    spatial = true;
  } else if (c.driver == "halo-energy") {
    drv = [&](double H, const MeshSolution& g) { return halo_by_energy(s, H, g); };
    start = halo_start(c, s);
    spatial = true;
  } else {
    throw ConfigError("field 'driver': unknown driver '" + c.driver + "'");
  }
  const auto steps = continuation(drv, c.values, start);
  return continuation_outcome<OrbitResult>(steps, orbit_json, [&](const OrbitResult& r) {
    return orbit_outcome(r, spatial, c);
  });
}

// Model matching the best iterate of a failed solve; halo-transfer can fail in
// either of its orbit solves or in the transfer itself.
ModelPtr failure_model(const RunConfig& c, Eigen::Index dim) {
  ModelPtr m;
  if (c.kind.rfind("lyapunov", 0) == 0) m = crtbp_model({c.mu, false});
  if (c.kind.rfind("halo", 0) == 0) m = crtbp_model({c.mu, true});
  if (c.kind == "hill-transfer") m = std::make_shared<ExtendedControlModel>(hill_model());
  if (c.kind == "halo-transfer" && dim == 12) m = std::make_shared<ExtendedControlModel>(crtbp_model({c.mu, true}));
  return m && m->dim() == dim ? m : nullptr;
}

Outcome execute(const RunConfig& c) {
  const MissionSetup s = mission_setup(c);
  if (c.kind == "ivp") return run_ivp(c);
  if (c.kind == "lyapunov-period") {
    return orbit_outcome(lyapunov_by_period(s, *c.T_days, lyapunov_guess(s, c.guess_amplitude.value_or(1e-2))),
                         false, c);
  }
  if (c.kind == "lyapunov-energy") return orbit_outcome(lyapunov_by_energy(s, *c.H, lyapunov_start(c, s)), false, c);
  if (c.kind == "halo-period") {
    return orbit_outcome(halo_by_period(s, *c.T_days, halo_guess(s, halo_shape(c))), true, c);
  }
  if (c.kind == "halo-energy") return orbit_outcome(halo_by_energy(s, *c.H, halo_start(c, s)), true, c);
  if (c.kind == "hill-transfer") {
    const TransferResult r =
        hill_transfer(hill_endpoint(c.P1, 0.0, 0.0), hill_endpoint(c.P2, 0.005, 0.0044), *c.tf, s);
    Outcome o = transfer_outcome(r, hill_model(), c);
    o.result["winding_about_L2"] = winding_number(r.mesh.y, hill_l2_abscissa(), 0.0);
    return o;
  }
  if (c.kind == "halo-transfer") {
    const OrbitResult A = halo_by_period(s, *c.T1_days, halo_guess(s, halo_shape(c)));
    const OrbitResult B = halo_by_energy(s, *c.H2, A.mesh);
    const double T = c.T_days.value_or(0.5 * (A.period_days + B.period_days));
    Outcome o = transfer_outcome(halo_transfer(A, B, T, s), crtbp_model({c.mu, true}), c);
    const Vec ta = A.mesh.y[topmost_node(A.mesh)], tb = B.mesh.y[topmost_node(B.mesh)];
    o.result["orbit_A"] = orbit_json(A);
    o.result["orbit_B"] = orbit_json(B);
    o.result["topmost_distance_km"] = nondim_to_km((ta.head(3) - tb.head(3)).norm());
    return o;
  }
  if (c.kind == "continuation") return run_continuation(c);
  throw ConfigError("unknown experiment kind '" + c.kind + "'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write to '" + path + "' failed");
}

void write_gnuplot(const RunConfig& c, int dim) {
  const bool spatial = dim >= 6 && (c.kind.find("halo") != std::string::npos ||
                                    c.driver.find("halo") != std::string::npos);
  std::ostringstream g;
  g << "set datafile separator ','\n"
    << "set key autotitle columnhead\n"
    << "set multiplot layout 1,2\n";
  if (spatial) {
    g << "splot '" << c.csv << "' using 2:3:4 with lines title 'trajectory'\n";
  } else {
    g << "plot '" << c.csv << "' using 2:3 with lines title 'trajectory'\n";
  }
  g << "plot '" << c.csv << "' using 1:" << (dim + 3) << " with lines title 'H - H(t0)'\n"
    << "unset multiplot\n";
  write_text(c.gnuplot, g.str());
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"ivp",           "lyapunov-period", "lyapunov-energy",
                                                 "halo-period",   "halo-energy",     "hill-transfer",
                                                 "halo-transfer", "continuation"};
  return kinds;
}

RunConfig load_config(const std::string& kind, const std::optional<std::string>& path,
                      const std::vector<std::pair<std::string, std::string>>& overrides) {
  const auto spec_it = kind_fields().find(kind);
  if (spec_it == kind_fields().end()) throw ConfigError("unknown experiment kind '" + kind + "'");
  const KindFields& spec = spec_it->second;

  std::map<std::string, Value> f;
  if (path) {
    toml::table tbl;
    try {
      tbl = toml::parse_file(*path);
    } catch (const toml::parse_error& e) {
      std::ostringstream msg;
      msg << "cannot read config '" << *path << "': " << e.description() << " (line " << e.source().begin.line
          << ")";
      throw ConfigError(msg.str());
    }
    for (const auto& [k, node] : tbl) {
      const std::string key(k.str());
      if (node.is_table()) continue;  // per-kind tables, applied below
      f[key] = value_from_toml(key, node);
    }
    if (const toml::table* own = tbl[kind].as_table()) {
      for (const auto& [k, node] : *own) f[std::string(k.str())] = value_from_toml(std::string(k.str()), node);
    }
  }
  for (const auto& [k, v] : overrides) {
    const std::string key = key_from_flag(k);
    f[key] = value_from_text(key, v);
  }
  f.erase("kind");

  const std::set<std::string> shared = kind == "ivp" ? kOutputKeys : [] {
    std::set<std::string> u = kOutputKeys;
    u.insert(kSolveKeys.begin(), kSolveKeys.end());
    return u;
  }();
  for (const auto& [key, v] : f) {
    if (!spec.required.count(key) && !spec.optional.count(key) && !shared.count(key)) {
      throw ConfigError("field '" + key + "' is not used by experiment kind '" + kind + "'");
    }
  }
  for (const std::string& key : spec.required) {
    if (!f.count(key)) throw ConfigError("missing required field '" + key + "' for experiment kind '" + kind + "'");
  }

  RunConfig c;
  c.kind = kind;
  c.fields = f;
  const bool hill = kind == "hill-transfer" || (f.count("driver") && as_string(f, "driver") == "hill-transfer");
  if (hill) c.k = 4;
  if (kind == "ivp") c.k = 2;
  auto num = [&](const std::string& key) -> std::optional<double> {
    return f.count(key) ? std::optional<double>(as_number(f, key)) : std::nullopt;
  };
  if (f.count("mu")) c.mu = as_number(f, "mu");
  if (f.count("k")) c.k = as_int(f, "k");
  if (f.count("s")) c.s = as_int(f, "s");
  if (f.count("n")) c.n = as_int(f, "n");
  if (f.count("tol")) c.newton.tol = as_number(f, "tol");
  if (f.count("max_iters")) c.newton.max_iters = as_int(f, "max_iters");
  if (f.count("max_halvings")) c.newton.max_halvings = as_int(f, "max_halvings");
  if (f.count("divergence_limit")) c.newton.divergence_limit = as_int(f, "divergence_limit");
  if (f.count("jacobian")) {
    const std::string j = as_string(f, "jacobian");
    if (j == "exact") {
      c.newton.jacobian = JacobianMode::Exact;
    } else if (j == "midpoint") {
      c.newton.jacobian = JacobianMode::Midpoint;
    } else {
      throw ConfigError("field 'jacobian': expected 'exact' or 'midpoint'");
    }
  }
  c.T_days = num("T_days");
  c.H = num("H");
  c.guess_period_days = num("guess_period_days");
  c.guess_amplitude = num("guess_amplitude");
  c.guess_aspect = num("guess_aspect");
  c.tf = num("tf");
  c.T1_days = num("T1_days");
  c.H2 = num("H2");
  c.h = num("h");
  if (f.count("P1")) c.P1 = as_list(f, "P1");
  if (f.count("P2")) c.P2 = as_list(f, "P2");
  if (f.count("values")) c.values = as_list(f, "values");
  if (f.count("y0")) c.y0 = as_list(f, "y0");
  if (f.count("driver")) c.driver = as_string(f, "driver");
  if (f.count("model")) c.model = as_string(f, "model");
  if (f.count("steps")) c.steps = as_int(f, "steps");
  if (f.count("csv")) c.csv = as_string(f, "csv");
  if (f.count("report")) c.report = as_string(f, "report");
  if (f.count("gnuplot")) c.gnuplot = as_string(f, "gnuplot");
  if (f.count("oversample")) c.oversample = as_int(f, "oversample");

  if (c.s < 1 || c.k < c.s) throw ConfigError("fields 'k', 's': need k >= s >= 1");
  if (c.n < 2) throw ConfigError("field 'n': need n >= 2");
  if (c.oversample < 1) throw ConfigError("field 'oversample': need oversample >= 1");
  if (!c.gnuplot.empty() && c.csv.empty()) throw ConfigError("field 'gnuplot' needs field 'csv'");
  if (kind == "ivp" && c.steps < 1) throw ConfigError("field 'steps': need steps >= 1");
  if (kind == "continuation") {
    static const std::set<std::string> drivers = {"lyapunov-period", "lyapunov-energy", "halo-period",
                                                  "halo-energy", "hill-transfer"};
    if (!drivers.count(c.driver)) throw ConfigError("field 'driver': unknown driver '" + c.driver + "'");
    if (c.values.empty()) throw ConfigError("field 'values': need at least one parameter");
  }
  return c;
}

void write_trajectory(const MeshSolution& mesh, const HamiltonianModel& model, const StagePartition& part,
                      const std::string& path, int oversample) {
  if (oversample < 1) throw DomainError("write_trajectory: oversample must be >= 1");
  const int d = model.dim(), m = d / 2;
  std::ostringstream out;
  out << "t";
  for (int i = 1; i <= m; ++i) out << ",q" << i;
  for (int i = 1; i <= m; ++i) out << ",p" << i;
  out << ",H,H_drift\n";
  const double H0 = model.energy(mesh.y.front());
  auto row = [&](double t, const Vec& y) {
    const double H = model.energy(y);
    out << fmt(t);
    for (int i = 0; i < d; ++i) out << ',' << fmt(y[i]);
    out << ',' << fmt(H) << ',' << fmt(H - H0) << '\n';
  };
  for (int i = 0; i < mesh.n(); ++i) {
    row(mesh.t0 + i * mesh.h, mesh.y[i]);
    for (int j = 1; j < oversample; ++j) {
      const double c = double(j) / oversample;
      row(mesh.t0 + (i + c) * mesh.h, dense_output(part, mesh.y[i], mesh.Z[i], mesh.h, c));
    }
  }
  row(mesh.t0 + mesh.n() * mesh.h, mesh.y.back());
  write_text(path, out.str());
}

int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  int status = kExitOk;
  std::string error;
  try {
    o = execute(c);
    if (!o.converged) status = kExitNewton;
  } catch (const NewtonFailure& e) {
    status = kExitNewton;
    error = e.what();
    o.converged = false;
    o.newton = report_json(e.best().report);
    o.result = json{{"best_iterate_residual", e.best().report.final_residual}};
    o.mesh = e.best();
    if (!e.best().y.empty()) o.model = failure_model(c, e.best().y.front().size());
    o.part = make_partition(c.k, c.s);
  } catch (const ConvergenceError& e) {
    status = kExitNewton;
    error = e.what();
    o.converged = false;
  } catch (const ConfigError& e) {
    err << "hbvm: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "hbvm: " << e.what() << '\n';
    return kExitConfig;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  try {
    if (!c.csv.empty() && o.mesh && o.model) write_trajectory(*o.mesh, *o.model, o.part, c.csv, c.oversample);
    if (!c.gnuplot.empty() && o.model) write_gnuplot(c, o.model->dim());
    if (!c.report.empty()) {
      json cfg = json::object();
      for (const auto& [k, v] : c.fields) cfg[k] = value_json(k, v);
      json rep{{"kind", c.kind},
               {"config", cfg},
               {"method", {{"k", c.k}, {"s", c.s}, {"n", c.n}, {"mu", c.mu}}},
               {"converged", o.converged}};
      if (!o.newton.is_null()) rep["newton"] = o.newton;
      rep["result"] = o.result;
      if (!error.empty()) rep["error"] = error;
      rep["units"] = {{"time", "nondimensional unless suffixed _days"},
                      {"day_in_nondim", days_to_nondim(1.0)},
                      {"length_unit_km", PhysicalConstants::R_km}};
      rep["timing"] = {{"wall_seconds", seconds}};
      write_text(c.report, rep.dump(2) + "\n");
    }
  } catch (const IoError& e) {
    err << "hbvm: " << e.what() << '\n';
    return kExitConfig;
  }

  if (status == kExitOk) {
    out << c.kind << ": " << o.summary << '\n';
  } else {
    err << "hbvm: " << c.kind << ": " << (error.empty() ? o.summary : error) << '\n';
  }
  return status;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy-conserving HBVM solver for Hamiltonian boundary value problems"};
  app.name("hbvm");
  app.require_subcommand(1);
  CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
  std::string kind;
  std::string config;
  run_cmd->add_option("kind", kind, "experiment kind")->required()->check(CLI::IsMember(experiment_kinds()));
  run_cmd->add_option("--config", config, "TOML file with the experiment fields");
  run_cmd->allow_extras();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::vector<std::pair<std::string, std::string>> overrides;
  const std::vector<std::string> extras = run_cmd->remaining();
  for (size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) {
      err << "hbvm: unexpected argument '" << a << "' (overrides are --key value)\n";
      return kExitConfig;
    }
    const size_t eq = a.find('=');
    if (eq != std::string::npos) {
      overrides.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      overrides.emplace_back(a.substr(2), extras[++i]);
    } else {
      err << "hbvm: flag '" << a << "' needs a value\n";
      return kExitConfig;
    }
  }
  try {
    return run(load_config(kind, config.empty() ? std::nullopt : std::optional<std::string>(config), overrides),
               out, err);
  } catch (const ConfigError& e) {
    err << "hbvm: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace hbvm::cli
