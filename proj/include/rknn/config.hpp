#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rknn/evaluation.hpp"
#include "rknn/fields.hpp"
#include "rknn/training.hpp"

namespace rknn {

/// Malformed or invalid experiment configuration. The message names the line
/// (for syntax errors) or the dotted field path (for schema and range errors).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  /// Explicit step sizes; when empty, h_count values log-spaced in [h_min, h_max].
  std::vector<double> h;
  double h_min = 0.01;
  double h_max = 0.1;
  std::size_t h_count = 10;
  double horizon = 1.0;
  std::size_t tasks = 50;
  TruthSpec truth;
  std::string reference = "rk3";
  std::size_t threads = 1;
  std::vector<FamilyVariant> variants;

  EvalGrid grid() const;
  bool operator==(const EvalSettings&) const = default;
};

struct ScalingSettings {
  FieldKind kind = FieldKind::linear_nd;
  std::vector<std::size_t> dims{1, 2, 4, 8, 16, 32};
  bool operator==(const ScalingSettings&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  TaskFamily family;
  TrainConfig train;  // train.seed mirrors the top-level seed
  EvalSettings eval;
  ScalingSettings scaling;

  /// Checks every module invariant; throws ConfigError naming the field.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses the JSON document. Defaults fill absent keys; unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Canonical JSON with every field written out; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace rknn
