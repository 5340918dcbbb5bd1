#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mqgrad/rng.hpp"

namespace mqgrad {

struct MdpHyper {
  int T = 5;                    // training iterations per controller step
  double alpha = 0.01;          // moving-average weight
  double epsilon = 0.1;         // exploration probability
  double eta = 0.1;             // SARSA learning rate
  double gamma_scale = 300.0;   // reward scaling
  double gamma_discount = 0.9;  // SARSA discount
  int bit_min = 2;
  int bit_max = 8;
  int q_hidden = 10;
  int q_outputs = 2;  // only the 2-action MDP is implemented

  void validate() const;  // throws std::invalid_argument
};

// s_t: current bit width plus the window of T smoothed losses.
struct MdpState {
  int n = 0;
  std::vector<double> smoothed;
};

// Exponential moving average pass over one loss window:
// out[0] = alpha*raw[0] + (1-alpha)*prev_last, then the recursion continues
// along the window.
std::vector<double> smooth_losses(const std::vector<double>& raw, double alpha,
                                  double prev_last);

// Ordinary least squares of values on indices 1..T.
struct SlopeFit {
  double beta = 0.0;  // slope
  double b = 0.0;     // intercept
};
SlopeFit fit_slope(const std::vector<double>& smoothed);  // throws if size < 2

// -beta * gamma_scale / cost_ms: positive when the loss is falling, larger
// when the window finished quickly. Throws if cost_ms <= 0.
double reward_value(double beta, double cost_ms, double gamma_scale);

// Greedy pick with probability 1-epsilon (ties keep action 0), otherwise the
// non-greedy action.
int select_action(float q0, float q1, double epsilon, Rng& rng);

// TD error r + gamma*q_next - q_prev; throws if non-finite.
double td_error(double r, double gamma_discount, double q_next, double q_prev);

// v += eta*delta * grad, in 32-bit arithmetic with eta*delta rounded once.
void apply_td_update(std::vector<float>& v, const std::vector<float>& grad,
                     double eta, double delta);

// Two-layer Q network: q_outputs linear heads over q_hidden rectified units.
// Parameters are a flat float vector [W1 (in x h), b1, W2 (h x out), b2].
class QNet {
 public:
  QNet(int inputs, int hidden, int outputs);

  void init_uniform(Rng& rng, float lo, float hi);
  std::vector<float> forward(const std::vector<double>& x) const;
  // dQ(x, head)/dv, same layout as params.
  std::vector<float> grad(const std::vector<double>& x, int head) const;

  std::vector<float>& params() { return v_; }
  const std::vector<float>& params() const { return v_; }
  int inputs() const { return in_; }
  int hidden() const { return hid_; }
  int outputs() const { return out_; }

  std::string to_json() const;
  static QNet from_json(const std::string& text);

 private:
  int in_, hid_, out_;
  std::vector<float> v_;
};

// One SARSA update on normalized state inputs: delta scales the gradient of
// the a_prev head at x_prev.
void sarsa_update(QNet& net, const std::vector<double>& x_prev, int a_prev,
                  double r, const std::vector<double>& x_next, int a_next,
                  double eta, double gamma_discount);

// n grows by the greedy action at the previous state (ties keep), clamped.
MdpState transition(const MdpState& prev, std::vector<double> new_smoothed,
                    const QNet& net, double norm_base, int bit_max);

// The full controller: owns the Q network, the MDP state, and the
// exploration RNG. One step() per T training iterations.
class BitController {
 public:
  BitController(const MdpHyper& hyper, std::uint64_t seed);

  struct StepResult {
    int bits = 0;
    int t = 0;
    int action = 0;
    bool has_reward = false;
    double reward = 0.0;
  };

  // raw_window: global losses observed since the previous consultation
  // (a single loss at t=0, exactly T losses afterwards). cost_ms: simulated
  // time those iterations took (ignored at t=0).
  StepResult step(const std::vector<double>& raw_window, double cost_ms);

  int steps_taken() const { return t_next_; }
  const QNet& qnet() const { return net_; }
  QNet& qnet() { return net_; }
  const MdpState& state() const { return state_; }
  const MdpHyper& hyper() const { return hyper_; }

 private:
  std::vector<double> normalized(const std::vector<double>& smoothed) const;

  MdpHyper hyper_;
  Rng rng_;
  QNet net_;
  MdpState state_;
  int action_ = 0;
  int t_next_ = 0;
  int emitted_bits_ = 0;  // monotone floor on the emitted K
  double norm_base_ = 1.0;
};

}  // namespace mqgrad
