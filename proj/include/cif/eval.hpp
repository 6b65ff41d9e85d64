#pragma once

// Targets, sampling, metrics and the experiment grid runner.

#include "cif/random.hpp"
#include "cif/sample_set.hpp"
#include "cif/simplex.hpp"
#include "cif/train_config.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cif {

struct IpResult;

// Uniform draw from the open simplex over 2^n cells (normalized standard exponentials).
Distribution sample_target(int n, Rng& rng);

// N i.i.d. states from d.
SampleSet draw_samples(const Distribution& d, Index count, Rng& rng);

// Mean over data rows of the minimum Hamming distance to any generated row.
Scalar hamming_eval(const SampleSet& data, const SampleSet& generated);

enum class ExperimentKind { SbmDensity, RbmDensity, CorpusHamming };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

// Trainer names: "ml", "cd1", "cdcif" (SBM); "ml", "cd1", "ip" (RBM).
struct MethodSpec {
  std::string name;   // label in the result table
  std::string model;  // "sbm" or "rbm"
  std::string method;
  TrainConfig config;
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::SbmDensity;
  int n = 10;
  int n_h = 0;
  std::vector<Index> sample_sizes;
  int n_targets = 1;
  int n_repeats = 1;
  std::vector<MethodSpec> methods;
  std::uint64_t master_seed = 0;
  std::string corpus_path;  // corpus_hamming only
  std::vector<int> hidden_sizes;  // corpus_hamming sweep; falls back to n_h

  void validate() const;
};

struct ResultRow {
  std::string kind;
  std::string method;
  int n = 0;
  int n_h = 0;
  Index sample_size = 0;
  int target_id = 0;
  int repeat = 0;
  std::string metric_name;
  Scalar metric_value = 0;
  int epochs_or_iters = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
};

struct CellSummary {
  std::string method;
  int n_h = 0;
  Index sample_size = 0;
  std::string metric_name;
  Scalar mean = 0;
  Scalar stderr_ = 0;
  int count = 0;
  int failures = 0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<CellSummary> summary() const;
  bool all_failed() const;
};

struct RunOptions {
  int jobs = 1;
  // Called after each finished trial with (done, total); may be empty.
  std::function<void(std::size_t, std::size_t)> progress;
  // Sees every finished IP run; called from worker threads.
  std::function<void(const ResultRow&, const IpResult&)> ip_observer;
};

ResultTable run_experiment(const ExperimentSpec& spec, const RunOptions& opts = {});

// Seeds shared by every method of one (target, repeat, N) cell.
std::uint64_t target_seed(std::uint64_t master, int target_id);
std::uint64_t sample_seed(std::uint64_t master, int target_id, int repeat, Index sample_size);
std::uint64_t train_seed(std::uint64_t master, int target_id, int repeat, Index sample_size);

}  // namespace cif
