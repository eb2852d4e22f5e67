#pragma once

#include "mixem/em.hpp"
#include "mixem/model.hpp"
#include "mixem/observations.hpp"
#include "mixem/theory.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mixem {

inline constexpr const char* kVersion = "mixem 0.1.0";

/// Flat "section.key" -> value view of a sectioned key = value file.
using ConfigEntries = std::map<std::string, std::string>;

/// Parses `[section]` headers and `key = value` lines. Lines starting with
/// `#` or `;` are comments, and ` #` starts a trailing comment. Throws ConfigError with the line number on malformed input.
ConfigEntries parse_entries(const std::string& text);

struct ModelSection {
  std::string forward = "identity";  ///< identity|linear|blur|constant|tanh|sin|logistic
  long dim = 1;
  std::vector<std::vector<double>> matrix;  ///< linear forward, rows
  std::string matrix_file;                  ///< linear forward from CSV instead
  double blur_width = 1.0;
  double constant_value = 1.0;
  double prior_mean = 0.0;
  double prior_std = 1.0;
  ThetaBox box{};
  Eigen::Vector2d theta_star{0.01, 0.09};
  std::optional<Eigen::Vector2d> theta0;

  bool operator==(const ModelSection&) const = default;
};

struct DataSection {
  long observations = 1024;
  std::uint64_t seed = 1;
  ObservationDesign design = ObservationDesign::simulated;
  int quadrature_nodes = 64;

  bool operator==(const DataSection&) const = default;
};

struct EStepSection {
  EStepBackend backend = EStepBackend::grid;
  long samples_per_observation = 32;
  GridSpec grid{};
  FlowConfig flow{};
  long refresh_steps = 1000;
  MetropolisConfig metropolis{};
  std::string checkpoint;

  bool operator==(const EStepSection&) const = default;
};

struct MStepSection {
  MStepSolver solver = MStepSolver::gradient;
  double eta = 1e-4;
  long inner_iters = 100;

  bool operator==(const MStepSection&) const = default;
};

struct RunSection {
  long rounds = 50;
  double tolerance = 1e-6;
  std::string output_dir = "out";

  bool operator==(const RunSection&) const = default;
};

struct TheorySection {
  double epsilon = 0.005;
  int directions = 16;
  int radii = 4;
  double tau = 0.0;  ///< 0 selects 2 / (mu_hat + lambda_hat)
  long contraction_rounds = 20;
  bool fos = false;
  /// "fixed_point" centres the diagnostics at the data set's EM fixed point,
  /// "theta_star" at the generating parameter.
  std::string center = "fixed_point";
  std::optional<double> lambda;
  std::optional<double> mu;
  std::optional<double> gamma;

  bool operator==(const TheorySection&) const = default;
};

struct ExperimentConfig {
  ModelSection model;
  DataSection data;
  EStepSection estep;
  MStepSection mstep;
  RunSection run;
  TheorySection theory;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Builds a typed config; unknown keys and bad values raise ConfigError.
ExperimentConfig config_from_entries(const ConfigEntries& entries);
ExperimentConfig parse_config(const std::string& text);
/// Reads and parses a file; a missing file raises ConfigError naming the path.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
/// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);
/// Applies "section.key=value" overrides to parsed entries.
void apply_overrides(ConfigEntries& entries, const std::vector<std::string>& overrides);

/// Model pieces described by the config. Raises ConfigError on inconsistent dimensions.
ModelBundle build_model(const ExperimentConfig& config);
EMConfig build_em_config(const ExperimentConfig& config, std::size_t threads = 0);
Theta theta_star(const ExperimentConfig& config);
Theta theta_initial(const ExperimentConfig& config);

}  // namespace mixem
