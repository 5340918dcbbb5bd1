#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mqgrad/cluster.hpp"
#include "mqgrad/controller.hpp"
#include "mqgrad/model.hpp"

namespace mqgrad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  int n = 4000;
  int dim = 16;
  int classes = 4;
};

enum class PolicyKind { fixed, adaptive, mqgrad, passthrough };

std::string to_string(PolicyKind k);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::fixed;
  int bits = 8;  // fixed policy
  // adaptive policy: 6 strictly ascending RMS cut points, or auto-calibrated
  // from a fixed-8 warmup run when thresholds_auto is set.
  bool thresholds_auto = true;
  std::vector<double> thresholds;
};

// INI-style, one nesting level: top-level keys (eval_every, output_dir,
// seed) plus sections [cluster] [data] [mdp] [model] [policy] [train].
// Parsing is strict — unknown sections/keys and duplicates are errors — and
// materializes every default so the parsed result is fully explicit.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  long long eval_every = 100;
  ClusterConfig cluster;
  ModelSpec model;
  TrainConfig train;
  DataConfig data;
  PolicyConfig policy;
  MdpHyper mdp;  // mdp.T mirrors cluster.T (a single cadence knob)

  void validate() const;  // throws ConfigError with the offending field path
};

ExperimentConfig default_config();
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical form: sorted keys, shortest round-trip number formatting;
// parse(serialize(cfg)) == cfg and serialization is a fixed point.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace mqgrad
