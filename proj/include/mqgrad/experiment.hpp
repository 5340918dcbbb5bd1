#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mqgrad/cluster.hpp"
#include "mqgrad/config.hpp"

namespace mqgrad {

// Trace/probe CSV round trip. Numbers are written in shortest round-trip
// form, so read(write(x)) recovers the exact doubles.
std::string trace_to_csv(const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> trace_from_csv(const std::string& text);
std::string probes_to_csv(const std::vector<ProbeRecord>& probes);
std::vector<ProbeRecord> probes_from_csv(const std::string& text);

// Pure post-processing of a run's artifacts into the summary JSON (returned
// as its serialized text). Probes add the accuracy fields; the config adds
// the fields that need cost-model or policy knowledge (payload bytes,
// quantization-overhead fraction, divergence, policy name). run_experiment
// and the summarize CLI call this same function, so re-summarizing emitted
// CSVs reproduces summary.json byte for byte.
std::string summarize(const std::vector<TraceRecord>& trace,
                      const std::vector<ProbeRecord>* probes,
                      const ExperimentConfig* cfg);

// Quantiles 1/7..6/7 of the mean-gradient RMS observed at consultations of a
// short fixed-8 warmup run (its simulated time is not charged anywhere).
std::vector<double> calibrate_adaptive_thresholds(const ExperimentConfig& cfg,
                                                  const Dataset& data);

struct RunArtifacts {
  std::string dir;
  ExperimentConfig resolved;
  RunResult result;
  std::string summary_json;
};

// Runs one experiment and writes trace.csv, probes.csv, summary.json, and
// resolved.ini (the fully-materialized config, with calibrated thresholds
// for an auto adaptive policy) into the output directory. A diverged run is
// reported in the summary, not thrown.
RunArtifacts run_experiment(const ExperimentConfig& cfg,
                            const std::string& out_override = "");

struct SweepCell {
  std::optional<double> loss;
  std::optional<double> accuracy;  // empty when the budget is past run end
};

struct SweepRow {
  std::string config_name;
  std::string policy;
  std::vector<SweepCell> cells;
};

struct SweepTable {
  std::vector<double> budgets_ms;
  std::vector<SweepRow> rows;

  std::string to_csv() const;
  std::string to_text() const;  // rows = policy, cols = budgets
};

// Runs every config (sequentially, in the given order) into
// out_dir/<config-stem>/ and tabulates loss/accuracy at each budget.
SweepTable run_sweep(const std::vector<std::string>& config_paths,
                     const std::vector<double>& budgets_ms,
                     const std::string& out_dir);

}  // namespace mqgrad
