#include "mqgrad/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mqgrad {

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::fixed: return "fixed";
    case PolicyKind::adaptive: return "adaptive";
    case PolicyKind::mqgrad: return "mqgrad";
    case PolicyKind::passthrough: return "passthrough";
  }
  throw std::logic_error("unreachable policy kind");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw ConfigError("config: " + path + " " + why);
}

long long parse_int(const std::string& path, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(path, "expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& path, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(path, "expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& path, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(path, "expected a number, got '" + v + "'");
  if (!std::isfinite(out)) fail(path, "must be finite");
  return out;
}

bool parse_bool(const std::string& path, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(path, "expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  std::stringstream ss(v);
  while (std::getline(ss, cur, ',')) parts.push_back(trim(cur));
  if (!v.empty() && v.back() == ',') parts.push_back("");
  return parts;
}

std::vector<int> parse_int_list(const std::string& path, const std::string& v) {
  std::vector<int> out;
  for (const auto& part : split_list(v))
    out.push_back(static_cast<int>(parse_int(path, part)));
  return out;
}

std::vector<double> parse_double_list(const std::string& path,
                                      const std::string& v) {
  std::vector<double> out;
  for (const auto& part : split_list(v)) out.push_back(parse_double(path, part));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

std::string fmt_float(float v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>)
      out += fmt_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.model.layer_sizes = {16, 32, 16, 4};
  cfg.model.l2_coeff = 1e-4f;
  cfg.model.quantize_mask.assign(cfg.model.num_weight_layers(), 1);
  return cfg;
}

void ExperimentConfig::validate() const {
  try {
    cluster.validate();
  } catch (const std::invalid_argument& e) {
    fail("[cluster]", e.what());
  }
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    fail("[model]", e.what());
  }
  if (model.quantize_mask.empty())
    fail("[model] quantize_mask", "must be materialized before validation");
  MdpHyper h = mdp;
  h.T = cluster.T;
  try {
    h.validate();
  } catch (const std::invalid_argument& e) {
    fail("[mdp]", e.what());
  }
  if (eval_every < 0) fail("eval_every", "must be >= 0");
  if (train.batch < 1) fail("[train] batch", "must be >= 1");
  if (!(train.lr > 0.0f)) fail("[train] lr", "must be positive");
  if (data.classes < 2) fail("[data] classes", "must be >= 2");
  if (data.dim < 1) fail("[data] dim", "must be >= 1");
  if (data.n < data.classes) fail("[data] n", "must be >= classes");
  if (data.n < 5) fail("[data] n", "must be >= 5 so the 80/20 split leaves test rows");
  if (data.n * 4 / 5 < cluster.workers)
    fail("[data] n", "too small: each of the " + std::to_string(cluster.workers) +
                         " workers needs at least one training row");
  if (data.dim != model.layer_sizes.front())
    fail("[model] layers", "input width must equal [data] dim");
  if (data.classes != model.layer_sizes.back())
    fail("[model] layers", "output width must equal [data] classes");
  if (policy.kind == PolicyKind::fixed && (policy.bits < 2 || policy.bits > 8))
    fail("[policy] bits", "must be in [2,8] (codec bit range)");
  if (policy.kind == PolicyKind::adaptive && !policy.thresholds_auto) {
    if (policy.thresholds.size() != 6)
      fail("[policy] thresholds", "needs exactly 6 values (or 'auto')");
    for (std::size_t i = 1; i < policy.thresholds.size(); ++i)
      if (!(policy.thresholds[i] > policy.thresholds[i - 1]))
        fail("[policy] thresholds", "must be strictly ascending");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg = default_config();
  bool mask_given = false;

  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: line " + std::to_string(lineno) +
                          ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      static const std::set<std::string> known = {"cluster", "data",  "mdp",
                                                  "model",   "policy", "train"};
      if (!known.count(section))
        throw ConfigError("config: unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    const std::string path = section.empty() ? key : "[" + section + "] " + key;
    if (!seen.insert(section + "\n" + key).second)
      fail(path, "set more than once");

    if (section.empty()) {
      if (key == "seed") cfg.seed = parse_u64(path, val);
      else if (key == "output_dir") cfg.output_dir = val;
      else if (key == "eval_every") cfg.eval_every = parse_int(path, val);
      else fail(path, "is not a recognized key");
    } else if (section == "cluster") {
      if (key == "workers") cfg.cluster.workers = static_cast<int>(parse_int(path, val));
      else if (key == "bandwidth") cfg.cluster.bandwidth = parse_double(path, val);
      else if (key == "latency_ms") cfg.cluster.latency_ms = parse_double(path, val);
      else if (key == "compute_ms_per_iter") cfg.cluster.compute_ms_per_iter = parse_double(path, val);
      else if (key == "quantize_ms_per_kelem") cfg.cluster.quantize_ms_per_kelem = parse_double(path, val);
      else if (key == "mdp_ms") cfg.cluster.mdp_ms = parse_double(path, val);
      else if (key == "max_iters") cfg.cluster.max_iters = parse_int(path, val);
      else if (key == "T") cfg.cluster.T = static_cast<int>(parse_int(path, val));
      else if (key == "serial_ingress") cfg.cluster.serial_ingress = parse_bool(path, val);
      else fail(path, "is not a recognized key");
    } else if (section == "data") {
      if (key == "n") cfg.data.n = static_cast<int>(parse_int(path, val));
      else if (key == "dim") cfg.data.dim = static_cast<int>(parse_int(path, val));
      else if (key == "classes") cfg.data.classes = static_cast<int>(parse_int(path, val));
      else fail(path, "is not a recognized key");
    } else if (section == "mdp") {
      if (key == "alpha") cfg.mdp.alpha = parse_double(path, val);
      else if (key == "epsilon") cfg.mdp.epsilon = parse_double(path, val);
      else if (key == "eta") cfg.mdp.eta = parse_double(path, val);
      else if (key == "gamma_scale") cfg.mdp.gamma_scale = parse_double(path, val);
      else if (key == "gamma_discount") cfg.mdp.gamma_discount = parse_double(path, val);
      else if (key == "bit_min") cfg.mdp.bit_min = static_cast<int>(parse_int(path, val));
      else if (key == "bit_max") cfg.mdp.bit_max = static_cast<int>(parse_int(path, val));
      else if (key == "q_hidden") cfg.mdp.q_hidden = static_cast<int>(parse_int(path, val));
      else if (key == "q_outputs") cfg.mdp.q_outputs = static_cast<int>(parse_int(path, val));
      else fail(path, "is not a recognized key");
    } else if (section == "model") {
      if (key == "layers") {
        cfg.model.layer_sizes = parse_int_list(path, val);
      } else if (key == "l2_coeff") {
        cfg.model.l2_coeff = static_cast<float>(parse_double(path, val));
      } else if (key == "quantize_mask") {
        cfg.model.quantize_mask = parse_int_list(path, val);
        mask_given = true;
      } else fail(path, "is not a recognized key");
    } else if (section == "policy") {
      if (key == "kind") {
        if (val == "fixed") cfg.policy.kind = PolicyKind::fixed;
        else if (val == "adaptive") cfg.policy.kind = PolicyKind::adaptive;
        else if (val == "mqgrad") cfg.policy.kind = PolicyKind::mqgrad;
        else if (val == "passthrough") cfg.policy.kind = PolicyKind::passthrough;
        else fail(path, "must be fixed, adaptive, mqgrad, or passthrough");
      } else if (key == "bits") {
        cfg.policy.bits = static_cast<int>(parse_int(path, val));
      } else if (key == "thresholds") {
        if (val == "auto") {
          cfg.policy.thresholds_auto = true;
          cfg.policy.thresholds.clear();
        } else {
          cfg.policy.thresholds_auto = false;
          cfg.policy.thresholds = parse_double_list(path, val);
        }
      } else fail(path, "is not a recognized key");
    } else if (section == "train") {
      if (key == "lr") cfg.train.lr = static_cast<float>(parse_double(path, val));
      else if (key == "batch") cfg.train.batch = static_cast<int>(parse_int(path, val));
      else fail(path, "is not a recognized key");
    }
  }

  // materialize the mask default against the (possibly overridden) layers
  if (!mask_given)
    cfg.model.quantize_mask.assign(
        std::max(cfg.model.num_weight_layers(), 0), 1);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string o;
  o += "eval_every = " + std::to_string(cfg.eval_every) + "\n";
  o += "output_dir = " + cfg.output_dir + "\n";
  o += "seed = " + std::to_string(cfg.seed) + "\n";

  o += "\n[cluster]\n";
  o += "T = " + std::to_string(cfg.cluster.T) + "\n";
  o += "bandwidth = " + fmt_double(cfg.cluster.bandwidth) + "\n";
  o += "compute_ms_per_iter = " + fmt_double(cfg.cluster.compute_ms_per_iter) + "\n";
  o += "latency_ms = " + fmt_double(cfg.cluster.latency_ms) + "\n";
  o += "max_iters = " + std::to_string(cfg.cluster.max_iters) + "\n";
  o += "mdp_ms = " + fmt_double(cfg.cluster.mdp_ms) + "\n";
  o += "quantize_ms_per_kelem = " + fmt_double(cfg.cluster.quantize_ms_per_kelem) + "\n";
  o += std::string("serial_ingress = ") +
       (cfg.cluster.serial_ingress ? "true" : "false") + "\n";
  o += "workers = " + std::to_string(cfg.cluster.workers) + "\n";

  o += "\n[data]\n";
  o += "classes = " + std::to_string(cfg.data.classes) + "\n";
  o += "dim = " + std::to_string(cfg.data.dim) + "\n";
  o += "n = " + std::to_string(cfg.data.n) + "\n";

  o += "\n[mdp]\n";
  o += "alpha = " + fmt_double(cfg.mdp.alpha) + "\n";
  o += "bit_max = " + std::to_string(cfg.mdp.bit_max) + "\n";
  o += "bit_min = " + std::to_string(cfg.mdp.bit_min) + "\n";
  o += "epsilon = " + fmt_double(cfg.mdp.epsilon) + "\n";
  o += "eta = " + fmt_double(cfg.mdp.eta) + "\n";
  o += "gamma_discount = " + fmt_double(cfg.mdp.gamma_discount) + "\n";
  o += "gamma_scale = " + fmt_double(cfg.mdp.gamma_scale) + "\n";
  o += "q_hidden = " + std::to_string(cfg.mdp.q_hidden) + "\n";
  o += "q_outputs = " + std::to_string(cfg.mdp.q_outputs) + "\n";

  o += "\n[model]\n";
  o += "l2_coeff = " + fmt_float(cfg.model.l2_coeff) + "\n";
  o += "layers = " + fmt_list(cfg.model.layer_sizes) + "\n";
  o += "quantize_mask = " + fmt_list(cfg.model.quantize_mask) + "\n";

  o += "\n[policy]\n";
  o += "bits = " + std::to_string(cfg.policy.bits) + "\n";
  o += "kind = " + to_string(cfg.policy.kind) + "\n";
  o += "thresholds = " +
       (cfg.policy.thresholds_auto ? std::string("auto")
                                   : fmt_list(cfg.policy.thresholds)) +
       "\n";

  o += "\n[train]\n";
  o += "batch = " + std::to_string(cfg.train.batch) + "\n";
  o += "lr = " + fmt_float(cfg.train.lr) + "\n";
  return o;
}

}  // namespace mqgrad
