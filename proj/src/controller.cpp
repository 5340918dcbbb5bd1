#include "mqgrad/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace mqgrad {

void MdpHyper::validate() const {
  if (T < 1) throw std::invalid_argument("mdp: T must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("mdp: alpha must be in (0,1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("mdp: epsilon must be in [0,1]");
  if (!(eta > 0.0)) throw std::invalid_argument("mdp: eta must be positive");
  if (!(gamma_scale > 0.0))
    throw std::invalid_argument("mdp: gamma_scale must be positive");
  if (!(gamma_discount >= 0.0 && gamma_discount <= 1.0))
    throw std::invalid_argument("mdp: gamma_discount must be in [0,1]");
  if (bit_min < 2 || bit_max > 8 || bit_min > bit_max)
    throw std::invalid_argument("mdp: bit range must satisfy 2 <= bit_min <= bit_max <= 8");
  if (q_hidden < 1) throw std::invalid_argument("mdp: q_hidden must be >= 1");
  if (q_outputs != 2)
    throw std::invalid_argument(
        "mdp: q_outputs must be 2; only the two-action MDP (keep/increase) is implemented");
}

std::vector<double> smooth_losses(const std::vector<double>& raw, double alpha,
                                  double prev_last) {
  if (!std::isfinite(prev_last))
    throw std::invalid_argument("smooth_losses: prev_last must be finite");
  std::vector<double> out(raw.size());
  double last = prev_last;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i]))
      throw std::invalid_argument("smooth_losses: raw loss must be finite");
    last = alpha * raw[i] + (1.0 - alpha) * last;
    out[i] = last;
  }
  return out;
}

SlopeFit fit_slope(const std::vector<double>& smoothed) {
  const int t = static_cast<int>(smoothed.size());
  if (t < 2) throw std::invalid_argument("fit_slope: need at least 2 points");
  const double i_mean = (t + 1) / 2.0;  // indices run 1..T
  double v_mean = 0.0;
  for (double v : smoothed) v_mean += v;
  v_mean /= t;
  double num = 0.0, den = 0.0;
  for (int i = 1; i <= t; ++i) {
    const double di = i - i_mean;
    num += di * (smoothed[i - 1] - v_mean);
    den += di * di;
  }
  SlopeFit fit;
  fit.beta = num / den;
  fit.b = v_mean - fit.beta * i_mean;
  return fit;
}

double reward_value(double beta, double cost_ms, double gamma_scale) {
  if (!(cost_ms > 0.0))
    throw std::invalid_argument("reward: cost_ms must be positive");
  return -beta * gamma_scale / cost_ms;
}

int select_action(float q0, float q1, double epsilon, Rng& rng) {
  const int greedy = q1 > q0 ? 1 : 0;  // tie keeps action 0
  if (epsilon > 0.0 && rng.uniform01() < epsilon) return 1 - greedy;
  return greedy;
}

double td_error(double r, double gamma_discount, double q_next, double q_prev) {
  const double delta = r + gamma_discount * q_next - q_prev;
  if (!std::isfinite(delta))
    throw std::runtime_error("sarsa: non-finite TD error");
  return delta;
}

void apply_td_update(std::vector<float>& v, const std::vector<float>& grad,
                     double eta, double delta) {
  if (v.size() != grad.size())
    throw std::invalid_argument("sarsa: params/grad length mismatch");
  if (!std::isfinite(delta))
    throw std::runtime_error("sarsa: non-finite TD error");
  const float scale = static_cast<float>(eta * delta);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += scale * grad[i];
}

QNet::QNet(int inputs, int hidden, int outputs)
    : in_(inputs), hid_(hidden), out_(outputs) {
  if (inputs < 1 || hidden < 1 || outputs < 1)
    throw std::invalid_argument("qnet: widths must be positive");
  v_.assign(static_cast<std::size_t>(in_) * hid_ + hid_ +
                static_cast<std::size_t>(hid_) * out_ + out_,
            0.0f);
}

void QNet::init_uniform(Rng& rng, float lo, float hi) {
  for (float& w : v_) w = static_cast<float>(rng.uniform(lo, hi));
}

std::vector<float> QNet::forward(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != in_)
    throw std::invalid_argument("qnet: input width mismatch");
  const float* w1 = v_.data();
  const float* b1 = w1 + static_cast<std::size_t>(in_) * hid_;
  const float* w2 = b1 + hid_;
  const float* b2 = w2 + static_cast<std::size_t>(hid_) * out_;

  std::vector<float> h(hid_);
  for (int j = 0; j < hid_; ++j) {
    float acc = b1[j];
    for (int i = 0; i < in_; ++i)
      acc += static_cast<float>(x[i]) * w1[i * hid_ + j];
    h[j] = acc > 0.0f ? acc : 0.0f;
  }
  std::vector<float> q(out_);
  for (int k = 0; k < out_; ++k) {
    float acc = b2[k];
    for (int j = 0; j < hid_; ++j) acc += h[j] * w2[j * out_ + k];
    if (!std::isfinite(acc)) throw std::runtime_error("qnet: non-finite output");
    q[k] = acc;
  }
  return q;
}

std::vector<float> QNet::grad(const std::vector<double>& x, int head) const {
  if (static_cast<int>(x.size()) != in_)
    throw std::invalid_argument("qnet: input width mismatch");
  if (head < 0 || head >= out_)
    throw std::invalid_argument("qnet: bad action head");
  const float* w1 = v_.data();
  const float* b1 = w1 + static_cast<std::size_t>(in_) * hid_;
  const float* w2 = b1 + hid_;

  std::vector<float> z(hid_), h(hid_);
  for (int j = 0; j < hid_; ++j) {
    float acc = b1[j];
    for (int i = 0; i < in_; ++i)
      acc += static_cast<float>(x[i]) * w1[i * hid_ + j];
    z[j] = acc;
    h[j] = acc > 0.0f ? acc : 0.0f;
  }

  std::vector<float> g(v_.size(), 0.0f);
  float* gw1 = g.data();
  float* gb1 = gw1 + static_cast<std::size_t>(in_) * hid_;
  float* gw2 = gb1 + hid_;
  float* gb2 = gw2 + static_cast<std::size_t>(hid_) * out_;

  gb2[head] = 1.0f;
  for (int j = 0; j < hid_; ++j) {
    gw2[j * out_ + head] = h[j];
    if (z[j] > 0.0f) {
      const float dh = w2[j * out_ + head];
      gb1[j] = dh;
      for (int i = 0; i < in_; ++i)
        gw1[i * hid_ + j] = dh * static_cast<float>(x[i]);
    }
  }
  return g;
}

std::string QNet::to_json() const {
  nlohmann::json j;
  j["inputs"] = in_;
  j["hidden"] = hid_;
  j["outputs"] = out_;
  j["params"] = v_;
  return j.dump(2);
}

QNet QNet::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  QNet net(j.at("inputs").get<int>(), j.at("hidden").get<int>(),
           j.at("outputs").get<int>());
  auto p = j.at("params").get<std::vector<float>>();
  if (p.size() != net.v_.size())
    throw std::invalid_argument("qnet: checkpoint param count mismatch");
  net.v_ = std::move(p);
  return net;
}

void sarsa_update(QNet& net, const std::vector<double>& x_prev, int a_prev,
                  double r, const std::vector<double>& x_next, int a_next,
                  double eta, double gamma_discount) {
  const auto q_prev = net.forward(x_prev);
  const auto q_next = net.forward(x_next);
  const double delta =
      td_error(r, gamma_discount, q_next[a_next], q_prev[a_prev]);
  const auto g = net.grad(x_prev, a_prev);
  apply_td_update(net.params(), g, eta, delta);
}

MdpState transition(const MdpState& prev, std::vector<double> new_smoothed,
                    const QNet& net, double norm_base, int bit_max) {
  std::vector<double> x(prev.smoothed.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = prev.smoothed[i] / norm_base;
  const auto q = net.forward(x);
  const int grow = q[1] > q[0] ? 1 : 0;  // non-strict inequality keeps
  MdpState next;
  next.n = std::min(prev.n + grow, bit_max);
  next.smoothed = std::move(new_smoothed);
  return next;
}

BitController::BitController(const MdpHyper& hyper, std::uint64_t seed)
    : hyper_(hyper),
      rng_(seed),
      net_(hyper.T, hyper.q_hidden, hyper.q_outputs) {
  hyper_.validate();
  net_.init_uniform(rng_, -0.05f, 0.05f);
}

std::vector<double> BitController::normalized(
    const std::vector<double>& smoothed) const {
  std::vector<double> x(smoothed.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = smoothed[i] / norm_base_;
  return x;
}

BitController::StepResult BitController::step(
    const std::vector<double>& raw_window, double cost_ms) {
  StepResult res;
  res.t = t_next_;

  if (t_next_ == 0) {
    if (raw_window.empty())
      throw std::invalid_argument("controller: empty loss window");
    // Bootstrap: no previous (state, action) exists yet. Seed the smoothed
    // window with the first observed loss and skip reward/update until t=1.
    const double first = raw_window.front();
    if (!std::isfinite(first))
      throw std::runtime_error("controller: non-finite loss");
    norm_base_ = first != 0.0 ? std::abs(first) : 1.0;
    state_.n = hyper_.bit_min;
    state_.smoothed.assign(hyper_.T, first);
    const auto q = net_.forward(normalized(state_.smoothed));
    action_ = select_action(q[0], q[1], hyper_.epsilon, rng_);
    emitted_bits_ = std::clamp(state_.n + action_, hyper_.bit_min, hyper_.bit_max);
  } else {
    if (static_cast<int>(raw_window.size()) != hyper_.T)
      throw std::invalid_argument("controller: loss window must hold T losses");
    const double prev_last = state_.smoothed.back();
    auto smoothed = smooth_losses(raw_window, hyper_.alpha, prev_last);

    MdpState next = transition(state_, std::move(smoothed), net_, norm_base_,
                               hyper_.bit_max);
    const double beta = fit_slope(next.smoothed).beta;
    res.reward = reward_value(beta, cost_ms, hyper_.gamma_scale);
    res.has_reward = true;

    const auto q = net_.forward(normalized(next.smoothed));
    const int a_next = select_action(q[0], q[1], hyper_.epsilon, rng_);
    sarsa_update(net_, normalized(state_.smoothed), action_, res.reward,
                 normalized(next.smoothed), a_next, hyper_.eta,
                 hyper_.gamma_discount);

    state_ = std::move(next);
    action_ = a_next;
    // The action set never decreases bits; exploration at a clamped state
    // could still emit one bit fewer than last time, so floor the emitted K
    // to keep the published bit sequence non-decreasing.
    emitted_bits_ = std::max(
        emitted_bits_,
        std::clamp(state_.n + action_, hyper_.bit_min, hyper_.bit_max));
  }

  res.bits = emitted_bits_;
  res.action = action_;
  ++t_next_;
  return res;
}

}  // namespace mqgrad
