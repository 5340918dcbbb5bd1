#include "mqgrad/policy.hpp"

#include <algorithm>
#include <stdexcept>

namespace mqgrad {

FixedPolicy::FixedPolicy(int bits) : bits_(bits) {
  if (bits < 2 || bits > 8)
    throw std::invalid_argument("policy: fixed bits must be in [2,8]");
}

PolicyDecision FixedPolicy::consult(const PolicyInput&) {
  PolicyDecision d;
  d.bits = bits_;
  return d;
}

std::string FixedPolicy::name() const {
  return "fixed-" + std::to_string(bits_);
}

AdaptiveNormPolicy::AdaptiveNormPolicy(std::vector<double> thresholds)
    : thresholds_(std::move(thresholds)) {
  if (thresholds_.size() != 6)
    throw std::invalid_argument("policy: adaptive needs exactly 6 thresholds");
  for (std::size_t i = 1; i < thresholds_.size(); ++i)
    if (!(thresholds_[i] > thresholds_[i - 1]))
      throw std::invalid_argument(
          "policy: adaptive thresholds must be strictly ascending");
}

int AdaptiveNormPolicy::bits_for_rms(double rms,
                                     const std::vector<double>& thresholds) {
  int below = 0;
  for (double th : thresholds)
    if (th < rms) ++below;
  return std::clamp(2 + below, 2, 8);
}

PolicyDecision AdaptiveNormPolicy::consult(const PolicyInput& in) {
  PolicyDecision d;
  d.bits = bits_for_rms(in.grad_rms, thresholds_);
  return d;
}

MqgradPolicy::MqgradPolicy(const MdpHyper& hyper, std::uint64_t seed)
    : ctrl_(hyper, seed) {}

PolicyDecision MqgradPolicy::consult(const PolicyInput& in) {
  if (in.t != ctrl_.steps_taken())
    throw std::runtime_error("policy: controller consulted off its cadence");
  const auto step = ctrl_.step(in.losses, in.window_cost_ms);
  PolicyDecision d;
  d.bits = step.bits;
  d.has_mdp = true;
  d.mdp_t = step.t;
  d.action = step.action;
  d.has_reward = step.has_reward;
  d.reward = step.reward;
  return d;
}

}  // namespace mqgrad
