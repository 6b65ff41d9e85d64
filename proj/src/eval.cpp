#include "cif/eval.hpp"

#include "cif/io.hpp"
#include "cif/rbm.hpp"
#include "cif/sbm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace cif {

Distribution sample_target(int n, Rng& rng) {
  if (n < 1 || n > kMaxVariables) throw Error(ErrorCode::CapExceeded, "target needs 1 <= n <= 20");
  Vector w(state_count(n));
  for (Index s = 0; s < w.size(); ++s) {
    // Zero has probability 2^-53 per cell; redraw to stay on the open simplex.
    do w(s) = standard_exponential(rng);
    while (!(w(s) > 0));
  }
  return Distribution::from_p(w / w.sum());
}

SampleSet draw_samples(const Distribution& d, Index count, Rng& rng) {
  std::vector<Scalar> cdf(std::size_t(d.size()));
  Scalar acc = 0;
  for (Index s = 0; s < d.size(); ++s) cdf[std::size_t(s)] = acc += d[Mask(s)];
  std::vector<Mask> states(std::size_t(std::max<Index>(count, 0)));
  for (auto& state : states) {
    const Scalar u = uniform01(rng) * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    state = Mask(std::min<std::ptrdiff_t>(it - cdf.begin(), d.size() - 1));
  }
  return make_sample_set(d.n(), std::move(states));
}

namespace {

std::vector<std::uint64_t> pack_rows(const SampleSet& s, int words) {
  std::vector<std::uint64_t> out(std::size_t(s.size()) * std::size_t(words), 0);
  for (Index r = 0; r < s.size(); ++r)
    for (int i = 0; i < s.n; ++i)
      if (s.rows(r, i)) out[std::size_t(r) * words + std::size_t(i / 64)] |= std::uint64_t{1} << (i % 64);
  return out;
}

}  // namespace

Scalar hamming_eval(const SampleSet& data, const SampleSet& generated) {
  if (data.n != generated.n) throw Error(ErrorCode::DimensionMismatch, "data and generated rows differ in length");
  if (data.size() == 0) return 0;
  if (generated.size() == 0) throw Error(ErrorCode::BadLength, "no generated rows");
  const int words = (data.n + 63) / 64;
  const auto a = pack_rows(data, words), b = pack_rows(generated, words);
  Scalar total = 0;
  for (Index r = 0; r < data.size(); ++r) {
    int best = data.n;
    const std::uint64_t* x = &a[std::size_t(r) * words];
    for (Index g = 0; g < generated.size() && best > 0; ++g) {
      const std::uint64_t* y = &b[std::size_t(g) * words];
      int dist = 0;
      for (int w = 0; w < words && dist < best; ++w) dist += __builtin_popcountll(x[w] ^ y[w]);
      best = std::min(best, dist);
    }
    total += best;
  }
  return total / Scalar(data.size());
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::SbmDensity: return "sbm_density";
    case ExperimentKind::RbmDensity: return "rbm_density";
    case ExperimentKind::CorpusHamming: return "corpus_hamming";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "sbm_density") return ExperimentKind::SbmDensity;
  if (s == "rbm_density") return ExperimentKind::RbmDensity;
  if (s == "corpus_hamming") return ExperimentKind::CorpusHamming;
  throw Error(ErrorCode::Parse, "unknown experiment kind '" + s + "'");
}

void ExperimentSpec::validate() const {
  if (n < 1) throw Error(ErrorCode::Parse, "n must be >= 1");
  if (n_targets < 1 || n_repeats < 1) throw Error(ErrorCode::Parse, "n_targets and n_repeats must be >= 1");
  if (sample_sizes.empty()) throw Error(ErrorCode::Parse, "sample_sizes is empty");
  for (Index s : sample_sizes)
    if (s < 1) throw Error(ErrorCode::Parse, "sample sizes must be >= 1");
  if (methods.empty()) throw Error(ErrorCode::Parse, "no methods");
  if (kind != ExperimentKind::CorpusHamming && n > kMaxVariables)
    throw Error(ErrorCode::CapExceeded, "synthetic targets need n <= 20");
  if (kind == ExperimentKind::CorpusHamming && corpus_path.empty()) throw Error(ErrorCode::Parse, "corpus path missing");
  for (const auto& m : methods) {
    if (m.model == "sbm") {
      if (m.method != "ml" && m.method != "cd1" && m.method != "cdcif")
        throw Error(ErrorCode::Parse, "unknown sbm method '" + m.method + "'");
    } else if (m.model == "rbm") {
      if (m.method != "ml" && m.method != "cd1" && m.method != "ip")
        throw Error(ErrorCode::Parse, "unknown rbm method '" + m.method + "'");
    } else {
      throw Error(ErrorCode::Parse, "unknown model '" + m.model + "'");
    }
    if (!(m.config.learning_rate >= 0) && !m.config.half_over_n_rate)
      throw Error(ErrorCode::Parse, "learning rate must be >= 0");
  }
}

std::uint64_t target_seed(std::uint64_t master, int target_id) { return derive_seed(master, {1, std::uint64_t(target_id)}); }

std::uint64_t sample_seed(std::uint64_t master, int target_id, int repeat, Index sample_size) {
  return derive_seed(master, {2, std::uint64_t(target_id), std::uint64_t(repeat), std::uint64_t(sample_size)});
}

std::uint64_t train_seed(std::uint64_t master, int target_id, int repeat, Index sample_size) {
  return derive_seed(master, {3, std::uint64_t(target_id), std::uint64_t(repeat), std::uint64_t(sample_size)});
}

bool ResultTable::all_failed() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.failed; });
}

std::vector<CellSummary> ResultTable::summary() const {
  std::vector<CellSummary> cells;
  std::vector<std::vector<Scalar>> values;
  for (const ResultRow& r : rows) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& c) {
      return c.method == r.method && c.n_h == r.n_h && c.sample_size == r.sample_size && c.metric_name == r.metric_name;
    });
    if (it == cells.end()) {
      cells.push_back({r.method, r.n_h, r.sample_size, r.metric_name, 0, 0, 0, 0});
      values.emplace_back();
      it = cells.end() - 1;
    }
    const std::size_t k = std::size_t(it - cells.begin());
    if (r.failed) ++it->failures;
    else values[k].push_back(r.metric_value);
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& v = values[k];
    CellSummary& c = cells[k];
    c.count = int(v.size());
    if (v.empty()) {
      c.mean = c.stderr_ = std::numeric_limits<Scalar>::quiet_NaN();
      continue;
    }
    Scalar sum = 0;
    for (Scalar x : v) sum += x;
    c.mean = sum / Scalar(v.size());
    if (v.size() > 1) {
      Scalar ss = 0;
      for (Scalar x : v) ss += (x - c.mean) * (x - c.mean);
      c.stderr_ = std::sqrt(ss / Scalar(v.size() - 1) / Scalar(v.size()));
    }
  }
  return cells;
}

namespace {

struct Trial {
  int target_id = 0;
  int repeat = 0;
  Index sample_size = 0;
  int n_h = 0;
  std::size_t method = 0;
};

SampleSet subsample(const SampleSet& corpus, Index count, Rng& rng) {
  if (count >= corpus.size()) return corpus;
  std::vector<Index> idx(std::size_t(corpus.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = Index(i);
  for (Index i = 0; i < count; ++i) std::swap(idx[std::size_t(i)], idx[std::size_t(i + Index(uniform_index(rng, std::uint64_t(corpus.size() - i))))]);
  SampleSet s;
  s.n = corpus.n;
  s.meta = corpus.meta;
  s.rows.resize(count, corpus.n);
  for (Index i = 0; i < count; ++i) s.rows.row(i) = corpus.rows.row(idx[std::size_t(i)]);
  return s;
}

std::vector<ResultRow> run_trial(const ExperimentSpec& spec, const Trial& t, const SampleSet* corpus,
                                 const RunOptions& opts) {
  const MethodSpec& m = spec.methods[t.method];
  ResultRow base;
  base.kind = to_string(spec.kind);
  base.method = m.name;
  base.n = spec.n;
  base.n_h = m.model == "rbm" ? t.n_h : 0;
  base.sample_size = t.sample_size;
  base.target_id = t.target_id;
  base.repeat = t.repeat;
  base.seed = train_seed(spec.master_seed, t.target_id, t.repeat, t.sample_size);
  const bool corpus_kind = spec.kind == ExperimentKind::CorpusHamming;
  base.metric_name = corpus_kind ? "hamming" : "kl_target_model";

  std::vector<ResultRow> out;
  try {
    std::optional<Distribution> target;
    SampleSet data;
    if (corpus_kind) {
      Rng rng(sample_seed(spec.master_seed, t.target_id, t.repeat, t.sample_size));
      data = subsample(*corpus, t.sample_size, rng);
    } else {
      Rng trng(target_seed(spec.master_seed, t.target_id));
      target = sample_target(spec.n, trng);
      Rng srng(sample_seed(spec.master_seed, t.target_id, t.repeat, t.sample_size));
      data = draw_samples(*target, t.sample_size, srng);
      data.meta = {sample_seed(spec.master_seed, t.target_id, t.repeat, t.sample_size),
                   "synthetic:" + std::to_string(t.target_id)};
    }
    TrainConfig cfg = m.config;
    cfg.seed = base.seed;
    cfg.n_h = t.n_h;
    const Distribution* tp = target ? &*target : nullptr;
    Rng gen_rng(derive_seed(base.seed, {99}));

    auto finish = [&](ResultRow row, const std::function<Distribution()>& model,
                      const std::function<SampleSet()>& generate) {
      if (corpus_kind) row.metric_value = hamming_eval(data, generate());
      else row.metric_value = kl_divergence(*target, model());
      out.push_back(row);
    };

    if (m.model == "sbm") {
      SbmResult r = m.method == "ml" ? sbm_train_ml(data, cfg, tp)
                    : m.method == "cd1" ? sbm_train_cd1(data, cfg, tp)
                                        : sbm_train_cd_cif(data, cfg, tp);
      ResultRow row = base;
      row.epochs_or_iters = r.epochs_run;
      if (r.diverged) throw Error(ErrorCode::Diverged, "training diverged");
      finish(row, [&] { return sbm_stationary(r.params); },
             [&] { return sbm_generate(r.params, data.size(), cfg.generate_burn_in, gen_rng); });
    } else if (m.method == "ip") {
      Rng init_rng(cfg.seed);
      const RbmParams p0 = rbm_initial_params(data, cfg.n_h, cfg.init_scale, init_rng);
      const IpResult r = rbm_train_ip(data, p0, cfg.ip_iterations, cfg, tp);
      ResultRow row = base;
      row.epochs_or_iters = r.iterations_run;
      finish(row, [&] { return rbm_marginal(r.params); },
             [&] { return rbm_generate(r.params, data.size(), cfg.generate_burn_in, gen_rng); });
      if (opts.ip_observer) opts.ip_observer(row, r);
      if (r.iterations_run > 0 && !std::isnan(r.trace.back().kl_marginal_to_empirical)) {
        const BestIp best = best_ip_select(r);
        ResultRow brow = base;
        brow.method = m.name + "_best";
        brow.epochs_or_iters = best.iteration;
        finish(brow, [&] { return rbm_marginal(best.params); },
               [&] { return rbm_generate(best.params, data.size(), cfg.generate_burn_in, gen_rng); });
      }
    } else {
      RbmResult r = m.method == "ml" ? rbm_train_ml(data, cfg, tp) : rbm_train_cd1(data, cfg, tp);
      ResultRow row = base;
      row.epochs_or_iters = r.epochs_run;
      if (r.diverged) throw Error(ErrorCode::Diverged, "training diverged");
      finish(row, [&] { return rbm_marginal(r.params); },
             [&] { return rbm_generate(r.params, data.size(), cfg.generate_burn_in, gen_rng); });
    }
  } catch (const std::exception& e) {
    ResultRow row = base;
    row.failed = true;
    row.metric_value = std::numeric_limits<Scalar>::quiet_NaN();
    row.error = e.what();
    out.assign(1, row);
  }
  return out;
}

}  // namespace

ResultTable run_experiment(const ExperimentSpec& spec, const RunOptions& opts) {
  spec.validate();
  std::optional<SampleSet> corpus;
  if (spec.kind == ExperimentKind::CorpusHamming) corpus = read_lines01(spec.corpus_path);

  const int targets = spec.kind == ExperimentKind::CorpusHamming ? 1 : spec.n_targets;
  std::vector<Trial> trials;
  for (int t = 0; t < targets; ++t)
    for (int r = 0; r < spec.n_repeats; ++r)
      for (Index size : spec.sample_sizes)
        for (std::size_t m = 0; m < spec.methods.size(); ++m) {
          if (spec.methods[m].model == "rbm" && !spec.hidden_sizes.empty()) {
            for (int h : spec.hidden_sizes) trials.push_back({t, r, size, h, m});
          } else {
            const int h = spec.methods[m].model == "rbm" ? (spec.n_h > 0 ? spec.n_h : spec.methods[m].config.n_h) : 0;
            trials.push_back({t, r, size, h, m});
          }
        }

  std::vector<std::vector<ResultRow>> results(trials.size());
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < trials.size(); i = next++) {
      results[i] = run_trial(spec, trials[i], corpus ? &*corpus : nullptr, opts);
      const std::size_t finished = ++done;
      if (opts.progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        opts.progress(finished, trials.size());
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, int(trials.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  ResultTable table;
  for (auto& rs : results)
    for (auto& r : rs) table.rows.push_back(std::move(r));
  return table;
}

}  // namespace cif
