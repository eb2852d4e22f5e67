#include "mixem/config.hpp"

#include "mixem/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mixem {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(out)) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

Eigen::Vector2d to_pair(const std::string& key, const std::string& v) {
  const auto parts = split(v, ',');
  if (parts.size() != 2) throw ConfigError("config: '" + key + "' expects two comma-separated numbers");
  return {to_double(key, parts[0]), to_double(key, parts[1])};
}

std::vector<std::vector<double>> to_matrix(const std::string& key, const std::string& v) {
  std::vector<std::vector<double>> rows;
  for (const auto& row : split(v, ';')) {
    if (row.empty()) continue;
    std::vector<double> r;
    for (const auto& cell : split(row, ',')) r.push_back(to_double(key, cell));
    if (!rows.empty() && r.size() != rows.front().size()) {
      throw ConfigError("config: '" + key + "' rows must have equal length");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

template <typename Fn>
auto convert(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ContractViolation& e) {
    throw ConfigError("config: '" + key + "': " + e.what());
  }
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

ConfigEntries parse_entries(const std::string& text) {
  ConfigEntries out;
  std::string section;
  std::istringstream in(text);
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string body = trim(line);
    if (!body.empty() && (body.front() == '#' || body.front() == ';')) continue;
    const auto inline_comment = body.find(" #");
    if (inline_comment != std::string::npos) body = body.substr(0, inline_comment);
    body = trim(body);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError("config line " + std::to_string(number) + ": bad section header");
      section = trim(body.substr(1, body.size() - 2));
      if (section.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty section name");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(number) + ": key outside of a section");
    }
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
    const std::string full = section + "." + key;
    if (out.count(full)) throw ConfigError("config line " + std::to_string(number) + ": duplicate key '" + full + "'");
    out[full] = trim(body.substr(eq + 1));
  }
  return out;
}

void apply_overrides(ConfigEntries& entries, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' must look like section.key=value");
    const std::string key = trim(o.substr(0, eq));
    if (key.find('.') == std::string::npos) {
      throw ConfigError("override '" + o + "' must name a section, as in section.key=value");
    }
    entries[key] = trim(o.substr(eq + 1));
  }
}

ExperimentConfig config_from_entries(const ConfigEntries& entries) {
  ExperimentConfig c;
  for (const auto& [key, v] : entries) {
    // model
    if (key == "model.forward") c.model.forward = v;
    else if (key == "model.dim") c.model.dim = to_long(key, v);
    else if (key == "model.matrix") c.model.matrix = to_matrix(key, v);
    else if (key == "model.matrix_file") c.model.matrix_file = v;
    else if (key == "model.blur_width") c.model.blur_width = to_double(key, v);
    else if (key == "model.constant_value") c.model.constant_value = to_double(key, v);
    else if (key == "model.prior_mean") c.model.prior_mean = to_double(key, v);
    else if (key == "model.prior_std") c.model.prior_std = to_double(key, v);
    else if (key == "model.a_min") c.model.box.a_min = to_double(key, v);
    else if (key == "model.a_max") c.model.box.a_max = to_double(key, v);
    else if (key == "model.b_min") c.model.box.b_min = to_double(key, v);
    else if (key == "model.b_max") c.model.box.b_max = to_double(key, v);
    else if (key == "model.theta_star") c.model.theta_star = to_pair(key, v);
    else if (key == "model.theta0") c.model.theta0 = v.empty() ? std::nullopt : std::optional(to_pair(key, v));
    // data
    else if (key == "data.observations") c.data.observations = to_long(key, v);
    else if (key == "data.seed") c.data.seed = to_u64(key, v);
    else if (key == "data.design") c.data.design = convert(key, [&] { return observation_design_from_string(v); });
    else if (key == "data.quadrature_nodes") c.data.quadrature_nodes = static_cast<int>(to_long(key, v));
    // estep
    else if (key == "estep.backend") c.estep.backend = convert(key, [&] { return estep_backend_from_string(v); });
    else if (key == "estep.samples_per_observation") c.estep.samples_per_observation = to_long(key, v);
    else if (key == "estep.grid_resolution") c.estep.grid.resolution = to_long(key, v);
    else if (key == "estep.grid_resolution_2d") c.estep.grid.resolution_2d = to_long(key, v);
    else if (key == "estep.grid_half_width") c.estep.grid.half_width = to_double(key, v);
    else if (key == "estep.grid_boundary_weight") c.estep.grid.boundary_weight = to_double(key, v);
    else if (key == "estep.grid_max_widenings") c.estep.grid.max_widenings = static_cast<int>(to_long(key, v));
    else if (key == "estep.ode_steps") c.estep.flow.ode_steps = static_cast<int>(to_long(key, v));
    else if (key == "estep.ode_scheme") c.estep.flow.scheme = convert(key, [&] { return ode_scheme_from_string(v); });
    else if (key == "estep.training_steps") c.estep.flow.training_steps = to_long(key, v);
    else if (key == "estep.batch_size") c.estep.flow.batch_size = to_long(key, v);
    else if (key == "estep.hidden") {
      c.estep.flow.hidden.clear();
      for (const auto& w : split(v, ',')) c.estep.flow.hidden.push_back(to_long(key, w));
    }
    else if (key == "estep.activation") c.estep.flow.activation = convert(key, [&] { return activation_from_string(v); });
    else if (key == "estep.learning_rate") c.estep.flow.adam.learning_rate = to_double(key, v);
    else if (key == "estep.refresh_steps") c.estep.refresh_steps = to_long(key, v);
    else if (key == "estep.metropolis_scale") c.estep.metropolis.proposal_scale = to_double(key, v);
    else if (key == "estep.metropolis_burn_in") c.estep.metropolis.burn_in = to_long(key, v);
    else if (key == "estep.metropolis_thin") c.estep.metropolis.thin = to_long(key, v);
    else if (key == "estep.checkpoint") c.estep.checkpoint = v;
    // mstep
    else if (key == "mstep.solver") c.mstep.solver = convert(key, [&] { return mstep_solver_from_string(v); });
    else if (key == "mstep.eta") c.mstep.eta = to_double(key, v);
    else if (key == "mstep.inner_iters") c.mstep.inner_iters = to_long(key, v);
    // run
    else if (key == "run.rounds") c.run.rounds = to_long(key, v);
    else if (key == "run.tolerance") c.run.tolerance = to_double(key, v);
    else if (key == "run.output_dir") c.run.output_dir = v;
    // theory
    else if (key == "theory.epsilon") c.theory.epsilon = to_double(key, v);
    else if (key == "theory.directions") c.theory.directions = static_cast<int>(to_long(key, v));
    else if (key == "theory.radii") c.theory.radii = static_cast<int>(to_long(key, v));
    else if (key == "theory.tau") c.theory.tau = to_double(key, v);
    else if (key == "theory.contraction_rounds") c.theory.contraction_rounds = to_long(key, v);
    else if (key == "theory.fos") c.theory.fos = to_bool(key, v);
    else if (key == "theory.center") {
      if (v != "fixed_point" && v != "theta_star") {
        throw ConfigError("config: 'theory.center' must be fixed_point or theta_star");
      }
      c.theory.center = v;
    }
    else if (key == "theory.lambda") c.theory.lambda = to_double(key, v);
    else if (key == "theory.mu") c.theory.mu = to_double(key, v);
    else if (key == "theory.gamma") c.theory.gamma = to_double(key, v);
    else throw ConfigError("config: unknown key '" + key + "'");
  }

  if (c.model.dim < 1) throw ConfigError("config: model.dim must be at least 1");
  if (c.data.observations < 1) throw ConfigError("config: data.observations must be at least 1");
  if (c.estep.samples_per_observation < 1) throw ConfigError("config: estep.samples_per_observation must be at least 1");
  if (c.mstep.eta <= 0.0) throw ConfigError("config: mstep.eta must be positive");
  if (c.mstep.inner_iters < 1) throw ConfigError("config: mstep.inner_iters must be at least 1");
  if (c.run.rounds < 1) throw ConfigError("config: run.rounds must be at least 1");
  if (c.run.tolerance < 0.0) throw ConfigError("config: run.tolerance must be non-negative");
  if (c.theory.epsilon <= 0.0) throw ConfigError("config: theory.epsilon must be positive");
  if (c.theory.contraction_rounds < 1) throw ConfigError("config: theory.contraction_rounds must be at least 1");
  if (c.model.prior_std <= 0.0) throw ConfigError("config: model.prior_std must be positive");
  convert("model box", [&] { c.model.box.validate(); return 0; });
  convert("estep grid", [&] { c.estep.grid.validate(); return 0; });
  convert("estep flow", [&] { c.estep.flow.validate(); return 0; });
  convert("estep metropolis", [&] { c.estep.metropolis.validate(); return 0; });
  return c;
}

ExperimentConfig parse_config(const std::string& text) { return config_from_entries(parse_entries(text)); }

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  ConfigEntries entries = parse_entries(buf.str());
  apply_overrides(entries, overrides);
  return config_from_entries(entries);
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto pair = [](const Eigen::Vector2d& v) { return fmt(v[0]) + ", " + fmt(v[1]); };
  o << "[model]\n";
  o << "forward = " << c.model.forward << "\n";
  o << "dim = " << c.model.dim << "\n";
  if (!c.model.matrix.empty()) {
    o << "matrix = ";
    for (std::size_t r = 0; r < c.model.matrix.size(); ++r) {
      if (r) o << "; ";
      for (std::size_t k = 0; k < c.model.matrix[r].size(); ++k) o << (k ? ", " : "") << fmt(c.model.matrix[r][k]);
    }
    o << "\n";
  }
  if (!c.model.matrix_file.empty()) o << "matrix_file = " << c.model.matrix_file << "\n";
  o << "blur_width = " << fmt(c.model.blur_width) << "\n";
  o << "constant_value = " << fmt(c.model.constant_value) << "\n";
  o << "prior_mean = " << fmt(c.model.prior_mean) << "\n";
  o << "prior_std = " << fmt(c.model.prior_std) << "\n";
  o << "a_min = " << fmt(c.model.box.a_min) << "\n";
  o << "a_max = " << fmt(c.model.box.a_max) << "\n";
  o << "b_min = " << fmt(c.model.box.b_min) << "\n";
  o << "b_max = " << fmt(c.model.box.b_max) << "\n";
  o << "theta_star = " << pair(c.model.theta_star) << "\n";
  if (c.model.theta0) o << "theta0 = " << pair(*c.model.theta0) << "\n";

  o << "\n[data]\n";
  o << "observations = " << c.data.observations << "\n";
  o << "seed = " << c.data.seed << "\n";
  o << "design = " << to_string(c.data.design) << "\n";
  o << "quadrature_nodes = " << c.data.quadrature_nodes << "\n";

  o << "\n[estep]\n";
  o << "backend = " << to_string(c.estep.backend) << "\n";
  o << "samples_per_observation = " << c.estep.samples_per_observation << "\n";
  o << "grid_resolution = " << c.estep.grid.resolution << "\n";
  o << "grid_resolution_2d = " << c.estep.grid.resolution_2d << "\n";
  o << "grid_half_width = " << fmt(c.estep.grid.half_width) << "\n";
  o << "grid_boundary_weight = " << fmt(c.estep.grid.boundary_weight) << "\n";
  o << "grid_max_widenings = " << c.estep.grid.max_widenings << "\n";
  o << "ode_steps = " << c.estep.flow.ode_steps << "\n";
  o << "ode_scheme = " << to_string(c.estep.flow.scheme) << "\n";
  o << "training_steps = " << c.estep.flow.training_steps << "\n";
  o << "batch_size = " << c.estep.flow.batch_size << "\n";
  o << "hidden = ";
  for (std::size_t k = 0; k < c.estep.flow.hidden.size(); ++k) o << (k ? ", " : "") << c.estep.flow.hidden[k];
  o << "\n";
  o << "activation = " << to_string(c.estep.flow.activation) << "\n";
  o << "learning_rate = " << fmt(c.estep.flow.adam.learning_rate) << "\n";
  o << "refresh_steps = " << c.estep.refresh_steps << "\n";
  o << "metropolis_scale = " << fmt(c.estep.metropolis.proposal_scale) << "\n";
  o << "metropolis_burn_in = " << c.estep.metropolis.burn_in << "\n";
  o << "metropolis_thin = " << c.estep.metropolis.thin << "\n";
  if (!c.estep.checkpoint.empty()) o << "checkpoint = " << c.estep.checkpoint << "\n";

  o << "\n[mstep]\n";
  o << "solver = " << to_string(c.mstep.solver) << "\n";
  o << "eta = " << fmt(c.mstep.eta) << "\n";
  o << "inner_iters = " << c.mstep.inner_iters << "\n";

  o << "\n[run]\n";
  o << "rounds = " << c.run.rounds << "\n";
  o << "tolerance = " << fmt(c.run.tolerance) << "\n";
  o << "output_dir = " << c.run.output_dir << "\n";

  o << "\n[theory]\n";
  o << "epsilon = " << fmt(c.theory.epsilon) << "\n";
  o << "directions = " << c.theory.directions << "\n";
  o << "radii = " << c.theory.radii << "\n";
  o << "tau = " << fmt(c.theory.tau) << "\n";
  o << "contraction_rounds = " << c.theory.contraction_rounds << "\n";
  o << "fos = " << (c.theory.fos ? "true" : "false") << "\n";
  o << "center = " << c.theory.center << "\n";
  if (c.theory.lambda) o << "lambda = " << fmt(*c.theory.lambda) << "\n";
  if (c.theory.mu) o << "mu = " << fmt(*c.theory.mu) << "\n";
  if (c.theory.gamma) o << "gamma = " << fmt(*c.theory.gamma) << "\n";
  return o.str();
}

ModelBundle build_model(const ExperimentConfig& config) {
  const ModelSection& m = config.model;
  ModelBundle bundle;
  try {
    const Eigen::Index dim = m.dim;
    bundle.prior = GaussianPrior::diagonal(Eigen::VectorXd::Constant(dim, m.prior_mean),
                                           Eigen::VectorXd::Constant(dim, m.prior_std));
    if (m.forward == "identity") {
      bundle.forward = make_identity(dim);
    } else if (m.forward == "linear") {
      Eigen::MatrixXd a;
      if (!m.matrix_file.empty()) {
        a = load_matrix_csv(m.matrix_file);
      } else if (!m.matrix.empty()) {
        a.resize(static_cast<Eigen::Index>(m.matrix.size()), static_cast<Eigen::Index>(m.matrix[0].size()));
        for (Eigen::Index r = 0; r < a.rows(); ++r) {
          for (Eigen::Index k = 0; k < a.cols(); ++k) a(r, k) = m.matrix[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
        }
      } else {
        throw ConfigError("config: linear forward needs model.matrix or model.matrix_file");
      }
      if (a.cols() != dim) {
        throw ConfigError("config: linear matrix has " + std::to_string(a.cols()) +
                          " columns but model.dim is " + std::to_string(dim));
      }
      bundle.forward = make_linear(a);
    } else if (m.forward == "blur") {
      bundle.forward = make_blur(dim, m.blur_width);
    } else if (m.forward == "constant") {
      bundle.forward = make_constant(dim, Eigen::VectorXd::Constant(dim, m.constant_value));
    } else if (m.forward == "tanh" || m.forward == "sin" || m.forward == "logistic") {
      bundle.forward = make_scalar_nonlinear(m.forward, dim);
    } else {
      throw ConfigError("config: unknown forward model '" + m.forward + "'");
    }
    bundle.box = m.box;
    bundle.grid = config.estep.grid;
    bundle.validate();
    if (!m.box.contains(m.theta_star)) throw ConfigError("config: model.theta_star lies outside the box");
    if (m.theta0 && !m.box.contains(*m.theta0)) throw ConfigError("config: model.theta0 lies outside the box");
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return bundle;
}

EMConfig build_em_config(const ExperimentConfig& config, std::size_t threads) {
  EMConfig em;
  em.eta = config.mstep.eta;
  em.inner_iters = config.mstep.inner_iters;
  em.solver = config.mstep.solver;
  em.rounds = config.run.rounds;
  em.tolerance = config.run.tolerance;
  em.backend = config.estep.backend;
  em.samples_per_observation = config.estep.samples_per_observation;
  em.flow = config.estep.flow;
  em.flow_refresh_steps = config.estep.refresh_steps;
  em.metropolis = config.estep.metropolis;
  em.threads = threads;
  return em;
}

Theta theta_star(const ExperimentConfig& config) {
  return Theta::from_vector(config.model.theta_star);
}

Theta theta_initial(const ExperimentConfig& config) {
  return Theta::from_vector(config.model.theta0 ? *config.model.theta0 : config.model.box.midpoint());
}

}  // namespace mixem
