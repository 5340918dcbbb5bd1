#include "mqgrad/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mqgrad/codec.hpp"
#include "mqgrad/rng.hpp"

namespace mqgrad {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

double parse_num(const std::string& s, const char* what) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::runtime_error(std::string("csv: bad ") + what + " '" + s + "'");
  return out;
}

long long parse_ll(const std::string& s, const char* what) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::runtime_error(std::string("csv: bad ") + what + " '" + s + "'");
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

constexpr const char* kTraceHeader =
    "iter,sim_time_ms,loss,bits,bytes,mdp_t,action,reward";
constexpr const char* kProbesHeader =
    "iter,sim_time_ms,test_accuracy,train_full_loss";

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

}  // namespace

std::string trace_to_csv(const std::vector<TraceRecord>& trace) {
  std::string o = std::string(kTraceHeader) + "\n";
  for (const auto& r : trace) {
    o += std::to_string(r.iter) + "," + fmt(r.sim_time_ms) + "," +
         fmt(r.loss) + "," + std::to_string(r.bits) + "," +
         std::to_string(r.bytes) + ",";
    if (r.has_mdp)
      o += std::to_string(r.mdp_t) + "," + std::to_string(r.action) + "," +
           (r.has_reward ? fmt(r.reward) : std::string());
    else
      o += ",,";
    o += "\n";
  }
  return o;
}

std::vector<TraceRecord> trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader)
    throw std::runtime_error("csv: unexpected trace header '" + line + "'");
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8)
      throw std::runtime_error("csv: trace row needs 8 fields, got '" + line + "'");
    TraceRecord r;
    r.iter = parse_ll(f[0], "iter");
    r.sim_time_ms = parse_num(f[1], "sim_time_ms");
    r.loss = parse_num(f[2], "loss");
    r.bits = static_cast<int>(parse_ll(f[3], "bits"));
    r.bytes = parse_ll(f[4], "bytes");
    if (!f[5].empty()) {
      r.has_mdp = true;
      r.mdp_t = static_cast<int>(parse_ll(f[5], "mdp_t"));
      r.action = static_cast<int>(parse_ll(f[6], "action"));
      if (!f[7].empty()) {
        r.has_reward = true;
        r.reward = parse_num(f[7], "reward");
      }
    }
    out.push_back(r);
  }
  return out;
}

std::string probes_to_csv(const std::vector<ProbeRecord>& probes) {
  std::string o = std::string(kProbesHeader) + "\n";
  for (const auto& p : probes)
    o += std::to_string(p.iter) + "," + fmt(p.sim_time_ms) + "," +
         fmt(p.test_accuracy) + "," + fmt(p.train_full_loss) + "\n";
  return o;
}

std::vector<ProbeRecord> probes_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kProbesHeader)
    throw std::runtime_error("csv: unexpected probes header '" + line + "'");
  std::vector<ProbeRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4)
      throw std::runtime_error("csv: probe row needs 4 fields, got '" + line + "'");
    ProbeRecord p;
    p.iter = parse_ll(f[0], "iter");
    p.sim_time_ms = parse_num(f[1], "sim_time_ms");
    p.test_accuracy = parse_num(f[2], "test_accuracy");
    p.train_full_loss = parse_num(f[3], "train_full_loss");
    out.push_back(p);
  }
  return out;
}

std::string summarize(const std::vector<TraceRecord>& trace,
                      const std::vector<ProbeRecord>* probes,
                      const ExperimentConfig* cfg) {
  nlohmann::json j;
  j["iters_completed"] = trace.size();
  if (!trace.empty()) {
    j["final_loss"] = trace.back().loss;
    double best = trace.front().loss;
    long long total_bytes = 0;
    for (const auto& r : trace) {
      best = std::min(best, r.loss);
      total_bytes += r.bytes;
    }
    j["best_loss"] = best;
    j["total_bytes"] = total_bytes;
    j["total_sim_time_ms"] = trace.back().sim_time_ms;
    j["bits_start"] = trace.front().bits;
    j["bits_end"] = trace.back().bits;
  }

  if (probes && !probes->empty()) {
    j["final_test_accuracy"] = probes->back().test_accuracy;
    auto arr = nlohmann::json::array();
    for (const auto& p : *probes)
      arr.push_back({{"iter", p.iter},
                     {"sim_time_ms", p.sim_time_ms},
                     {"test_accuracy", p.test_accuracy},
                     {"train_full_loss", p.train_full_loss}});
    j["accuracy_probes"] = arr;
  }

  // bits at each consultation: controller rows carry mdp_t; otherwise the
  // cadence from the config finds them
  auto series = nlohmann::json::array();
  bool any_mdp = false;
  for (const auto& r : trace)
    if (r.has_mdp) {
      any_mdp = true;
      series.push_back(r.bits);
    }
  if (!any_mdp && cfg && cfg->policy.kind != PolicyKind::passthrough)
    for (const auto& r : trace)
      if (r.iter % cfg->cluster.T == 0) series.push_back(r.bits);
  if (!series.empty()) j["bits_series"] = series;

  if (cfg) {
    j["seed"] = cfg->seed;
    j["policy"] = cfg->policy.kind == PolicyKind::fixed
                      ? "fixed-" + std::to_string(cfg->policy.bits)
                      : to_string(cfg->policy.kind);
    j["diverged"] =
        static_cast<long long>(trace.size()) != cfg->cluster.max_iters;

    const MaskRanges mr = mask_ranges(cfg->model);
    const bool passthrough = cfg->policy.kind == PolicyKind::passthrough;
    const long long n_params = cfg->model.param_count();
    const int P = cfg->cluster.workers;
    double codec_ms = 0.0, mdp_ms = 0.0;
    long long payload = 0;
    for (const auto& r : trace) {
      const bool consulted = !passthrough && r.iter % cfg->cluster.T == 0;
      const bool mdp_charged =
          consulted && cfg->policy.kind == PolicyKind::mqgrad;
      const IterTiming t =
          advance_clock(cfg->cluster, 0, 0,
                        passthrough ? 0 : mr.quantized_len, mdp_charged);
      codec_ms += t.codec_ms;
      mdp_ms += t.mdp_ms;
      payload += static_cast<long long>(P + 1) *
                 (passthrough ? 4 * n_params
                              : payload_bytes(mr.quantized_len, r.bits) +
                                    4 * mr.raw_len);
    }
    j["total_payload_bytes"] = payload;
    const double total = trace.empty() ? 0.0 : trace.back().sim_time_ms;
    j["quant_overhead_fraction"] =
        total > 0.0 ? (codec_ms + mdp_ms) / total : 0.0;
  }
  return j.dump(2) + "\n";
}

namespace {

// Records the gradient RMS the simulator hands to consultations while
// behaving exactly like Fix(8).
class RmsRecorder : public BitPolicy {
 public:
  explicit RmsRecorder(std::vector<double>* out) : out_(out) {}
  PolicyDecision consult(const PolicyInput& in) override {
    out_->push_back(in.grad_rms);
    PolicyDecision d;
    d.bits = 8;
    return d;
  }
  std::string name() const override { return "fixed-8"; }
  bool wants_grad_rms() const override { return true; }

 private:
  std::vector<double>* out_;
};

std::unique_ptr<BitPolicy> make_policy(const ExperimentConfig& cfg) {
  switch (cfg.policy.kind) {
    case PolicyKind::fixed:
      return std::make_unique<FixedPolicy>(cfg.policy.bits);
    case PolicyKind::adaptive:
      return std::make_unique<AdaptiveNormPolicy>(cfg.policy.thresholds);
    case PolicyKind::mqgrad: {
      MdpHyper h = cfg.mdp;
      h.T = cfg.cluster.T;
      return std::make_unique<MqgradPolicy>(h, mix_seed(cfg.seed, 2));
    }
    case PolicyKind::passthrough:
      return nullptr;
  }
  throw std::logic_error("unreachable policy kind");
}

}  // namespace

std::vector<double> calibrate_adaptive_thresholds(const ExperimentConfig& cfg,
                                                  const Dataset& data) {
  std::vector<double> samples;
  RmsRecorder recorder(&samples);
  ClusterConfig warmup = cfg.cluster;
  warmup.max_iters = std::min<long long>(cfg.cluster.max_iters, 200);
  try {
    run_training(warmup, cfg.model, cfg.train, data, &recorder, cfg.seed,
                 /*eval_every=*/0, kern::parallel_kernels());
  } catch (const DivergedError&) {
    // keep whatever consultations happened before the blow-up
  }
  if (samples.empty())
    throw ConfigError(
        "config: [policy] thresholds auto-calibration failed: the fixed-8 "
        "warmup run diverged before its first consultation");
  std::sort(samples.begin(), samples.end());
  std::vector<double> th(6);
  const double last = static_cast<double>(samples.size() - 1);
  for (int k = 1; k <= 6; ++k) {
    const double pos = last * k / 7.0;
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    th[k - 1] = samples[lo] + (pos - lo) * (samples[hi] - samples[lo]);
  }
  for (int k = 1; k < 6; ++k)  // quantiles of few samples can tie
    if (!(th[k] > th[k - 1]))
      th[k] = th[k - 1] + std::max(std::abs(th[k - 1]) * 1e-9, 1e-12);
  return th;
}

RunArtifacts run_experiment(const ExperimentConfig& cfg,
                            const std::string& out_override) {
  RunArtifacts art;
  art.resolved = cfg;
  if (!out_override.empty()) art.resolved.output_dir = out_override;
  art.resolved.validate();

  const Dataset data = gen_synthetic(art.resolved.seed, art.resolved.data.n,
                                     art.resolved.data.dim,
                                     art.resolved.data.classes);

  if (art.resolved.policy.kind == PolicyKind::adaptive &&
      art.resolved.policy.thresholds_auto) {
    art.resolved.policy.thresholds =
        calibrate_adaptive_thresholds(art.resolved, data);
    art.resolved.policy.thresholds_auto = false;
  }

  const std::filesystem::path dir(art.resolved.output_dir);
  std::filesystem::create_directories(dir);
  art.dir = dir.string();
  write_file(dir / "resolved.ini", serialize_config(art.resolved));

  auto policy = make_policy(art.resolved);
  try {
    art.result = run_training(art.resolved.cluster, art.resolved.model,
                              art.resolved.train, data, policy.get(),
                              art.resolved.seed, art.resolved.eval_every,
                              kern::parallel_kernels());
  } catch (const DivergedError& e) {
    art.result = e.partial();
  }

  write_file(dir / "trace.csv", trace_to_csv(art.result.trace));
  write_file(dir / "probes.csv", probes_to_csv(art.result.probes));
  art.summary_json =
      summarize(art.result.trace, &art.result.probes, &art.resolved);
  write_file(dir / "summary.json", art.summary_json);
  return art;
}

std::string SweepTable::to_csv() const {
  std::string o = "config,policy,budget_ms,loss,accuracy\n";
  for (const auto& row : rows)
    for (std::size_t c = 0; c < budgets_ms.size(); ++c) {
      const auto& cell = row.cells[c];
      o += row.config_name + "," + row.policy + "," + fmt(budgets_ms[c]) + "," +
           (cell.loss ? fmt(*cell.loss) : "NA") + "," +
           (cell.accuracy ? fmt(*cell.accuracy) : "NA") + "\n";
    }
  return o;
}

std::string SweepTable::to_text() const {
  const auto cell_text = [](const std::optional<double>& v) {
    if (!v) return std::string("N/A");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", *v);
    return std::string(buf);
  };
  std::string o;
  for (int table = 0; table < 2; ++table) {
    o += table == 0 ? "accuracy at simulated-time budget (ms)\n"
                    : "loss at simulated-time budget (ms)\n";
    std::size_t label_w = 8;
    for (const auto& row : rows)
      label_w = std::max(label_w, row.config_name.size() + row.policy.size() + 3);
    o += std::string(label_w, ' ');
    for (double b : budgets_ms) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%14.6g", b);
      o += buf;
    }
    o += "\n";
    for (const auto& row : rows) {
      std::string label = row.config_name + " (" + row.policy + ")";
      label.resize(label_w, ' ');
      o += label;
      for (const auto& cell : row.cells) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%14s",
                      cell_text(table == 0 ? cell.accuracy : cell.loss).c_str());
        o += buf;
      }
      o += "\n";
    }
    if (table == 0) o += "\n";
  }
  return o;
}

SweepTable run_sweep(const std::vector<std::string>& config_paths,
                     const std::vector<double>& budgets_ms,
                     const std::string& out_dir) {
  if (config_paths.empty())
    throw ConfigError("sweep: need at least one config");
  if (budgets_ms.empty()) throw ConfigError("sweep: need at least one budget");
  for (double b : budgets_ms)
    if (!(b > 0.0)) throw ConfigError("sweep: budgets must be positive");

  SweepTable table;
  table.budgets_ms = budgets_ms;
  std::set<std::string> used_names;
  for (const auto& path : config_paths) {
    const ExperimentConfig cfg = load_config(path);
    std::string stem = std::filesystem::path(path).stem().string();
    if (stem.empty()) stem = "run";
    std::string name = stem;
    for (int i = 2; used_names.count(name); ++i)
      name = stem + "_" + std::to_string(i);
    used_names.insert(name);

    const RunArtifacts art = run_experiment(
        cfg, (std::filesystem::path(out_dir) / name).string());

    SweepRow row;
    row.config_name = name;
    row.policy = nlohmann::json::parse(art.summary_json)
                     .value("policy", to_string(cfg.policy.kind));
    const auto& trace = art.result.trace;
    const auto& probes = art.result.probes;
    const double run_end =
        trace.empty() ? 0.0 : trace.back().sim_time_ms;
    for (double b : budgets_ms) {
      SweepCell cell;
      if (b <= run_end) {  // a budget past the run's end is N/A
        for (auto it = trace.rbegin(); it != trace.rend(); ++it)
          if (it->sim_time_ms <= b) {
            cell.loss = it->loss;
            break;
          }
        for (auto it = probes.rbegin(); it != probes.rend(); ++it)
          if (it->sim_time_ms <= b) {
            cell.accuracy = it->test_accuracy;
            break;
          }
      }
      row.cells.push_back(cell);
    }
    table.rows.push_back(std::move(row));
  }

  std::filesystem::create_directories(out_dir);
  write_file(std::filesystem::path(out_dir) / "sweep.csv", table.to_csv());
  return table;
}

}  // namespace mqgrad
