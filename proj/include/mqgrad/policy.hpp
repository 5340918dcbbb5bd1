#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mqgrad/controller.hpp"

namespace mqgrad {

// What the simulator knows at a consultation (every T-th iteration).
struct PolicyInput {
  long long iter = 0;               // m
  int t = 0;                        // m / T
  std::vector<double> losses;       // global losses since the last consult
  double window_cost_ms = 0.0;      // simulated time those iterations took
  double grad_rms = 0.0;            // RMS of the current mean gradient
};

struct PolicyDecision {
  int bits = 0;
  bool has_mdp = false;  // fills mdp_t/action (and maybe reward) in the trace
  int mdp_t = 0;
  int action = 0;
  bool has_reward = false;
  double reward = 0.0;
};

class BitPolicy {
 public:
  virtual ~BitPolicy() = default;
  virtual PolicyDecision consult(const PolicyInput& in) = 0;
  virtual std::string name() const = 0;
  // The simulator only computes the exact mean-gradient RMS when asked.
  virtual bool wants_grad_rms() const { return false; }
  // Whether consultations are charged the per-step controller cost.
  virtual bool charges_mdp_cost() const { return false; }
};

class FixedPolicy : public BitPolicy {
 public:
  explicit FixedPolicy(int bits);
  PolicyDecision consult(const PolicyInput&) override;
  std::string name() const override;

 private:
  int bits_;
};

// K = 2 + (number of thresholds below the gradient RMS), clamped to [2,8].
// Bits may rise and fall.
class AdaptiveNormPolicy : public BitPolicy {
 public:
  explicit AdaptiveNormPolicy(std::vector<double> thresholds);  // 6, ascending
  PolicyDecision consult(const PolicyInput& in) override;
  std::string name() const override { return "adaptive"; }
  bool wants_grad_rms() const override { return true; }

  static int bits_for_rms(double rms, const std::vector<double>& thresholds);

 private:
  std::vector<double> thresholds_;
};

class MqgradPolicy : public BitPolicy {
 public:
  MqgradPolicy(const MdpHyper& hyper, std::uint64_t seed);
  PolicyDecision consult(const PolicyInput& in) override;
  std::string name() const override { return "mqgrad"; }
  bool charges_mdp_cost() const override { return true; }

  const BitController& controller() const { return ctrl_; }

 private:
  BitController ctrl_;
};

}  // namespace mqgrad
