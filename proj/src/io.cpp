#include "cif/io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace cif {

namespace {

void require_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw Error(ErrorCode::Parse, std::string(what) + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw Error(ErrorCode::Parse, std::string("unknown key '") + it.key() + "' in " + what);
}

template <typename T>
T get(const Json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw Error(ErrorCode::Parse, std::string("missing key '") + key + "' in " + what);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("bad value for '") + key + "' in " + what + ": " + e.what());
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const char* what) {
  return j.contains(key) ? get<T>(j, key, what) : fallback;
}

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
  return a;
}

Vector vector_from(const Json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::Parse, std::string(what) + " must be an array");
  Vector v(Index(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::Parse, std::string(what) + " must hold numbers");
    v(Index(i)) = j[i].get<Scalar>();
  }
  return v;
}

Matrix matrix_from(const Json& j, Index rows, Index cols, const char* what) {
  if (!j.is_array() || Index(j.size()) != rows) throw Error(ErrorCode::Parse, std::string(what) + " has the wrong row count");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Vector row = vector_from(j[std::size_t(r)], what);
    if (row.size() != cols) throw Error(ErrorCode::Parse, std::string(what) + " has a ragged row");
    m.row(r) = row.transpose();
  }
  return m;
}

std::string lower_trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

SampleSet from_rows(std::vector<std::vector<std::uint8_t>>&& rows, SampleMeta meta) {
  SampleSet s;
  s.n = rows.empty() ? 0 : int(rows.front().size());
  s.meta = std::move(meta);
  s.rows.resize(Index(rows.size()), s.n);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int i = 0; i < s.n; ++i) s.rows(Index(r), i) = rows[r][std::size_t(i)];
  return s;
}

}  // namespace

std::string format_double(Scalar v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Json to_json(const Distribution& d) { return Json{{"n", d.n()}, {"p", vector_json(d.p())}}; }

Distribution distribution_from_json(const Json& j) {
  require_keys(j, {"n", "p"}, "distribution");
  const int n = get<int>(j, "n", "distribution");
  const Vector p = vector_from(j.at("p"), "p");
  if (n < 1 || n > kMaxVariables || p.size() != state_count(n))
    throw Error(ErrorCode::BadLength, "p must hold 2^n entries");
  return Distribution::from_p(p);
}

Json to_json(const FisherMatrix& f) {
  Json labels = Json::array();
  for (Mask m : f.labels) labels.push_back(m);
  return Json{{"system", f.system_name()}, {"labels", labels}, {"m", matrix_json(f.m)}};
}

Json to_json(const SbmParams& p) { return Json{{"n", p.n}, {"U", matrix_json(p.U)}, {"b", vector_json(p.b)}}; }

SbmParams sbm_params_from_json(const Json& j) {
  require_keys(j, {"n", "U", "b"}, "SBM parameters");
  SbmParams p;
  p.n = get<int>(j, "n", "SBM parameters");
  p.U = matrix_from(j.at("U"), p.n, p.n, "U");
  p.b = vector_from(j.at("b"), "b");
  p.validate();
  return p;
}

Json to_json(const RbmParams& p) {
  return Json{{"n_x", p.n_x}, {"n_h", p.n_h}, {"W", matrix_json(p.W)}, {"b", vector_json(p.b)}, {"d", vector_json(p.d)}};
}

RbmParams rbm_params_from_json(const Json& j) {
  require_keys(j, {"n_x", "n_h", "W", "b", "d"}, "RBM parameters");
  RbmParams p;
  p.n_x = get<int>(j, "n_x", "RBM parameters");
  p.n_h = get<int>(j, "n_h", "RBM parameters");
  p.W = matrix_from(j.at("W"), p.n_x, p.n_h, "W");
  p.b = vector_from(j.at("b"), "b");
  p.d = vector_from(j.at("d"), "d");
  p.validate();
  return p;
}

TrainConfig train_config_from_json(const Json& j) {
  const char* what = "config";
  require_keys(j,
               {"learning_rate", "learning_rate_unit", "max_epochs", "seed", "negative_phase", "gibbs_steps",
                "gibbs_chains", "cif_r", "cif_alpha", "cif_rule", "tolerance", "divergence_patience", "trace_every",
                "n_h", "init_scale", "ip_iterations", "ip_sub_epochs", "gamma_h", "gamma_b", "gamma_b_solver",
                "gamma_b_tolerance", "generate_burn_in"},
               what);
  TrainConfig c;
  if (j.contains("learning_rate")) {
    const Json& lr = j.at("learning_rate");
    if (lr.is_string()) {
      if (lr.get<std::string>() != "paper-default")
        throw Error(ErrorCode::Parse, "learning_rate must be a number or \"paper-default\"");
      c.half_over_n_rate = true;
    } else {
      c.learning_rate = get<Scalar>(j, "learning_rate", what);
      if (!(c.learning_rate >= 0)) throw Error(ErrorCode::Parse, "learning_rate must be >= 0");
    }
  }
  const std::string unit = get_or<std::string>(j, "learning_rate_unit", "mean", what);
  if (unit == "mean") c.rate_unit = RateUnit::Mean;
  else if (unit == "per_sample") c.rate_unit = RateUnit::PerSample;
  else throw Error(ErrorCode::Parse, "learning_rate_unit must be mean or per_sample");

  c.max_epochs = get_or<int>(j, "max_epochs", c.max_epochs, what);
  if (c.max_epochs < 0) throw Error(ErrorCode::Parse, "max_epochs must be >= 0");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, what);

  const std::string phase = get_or<std::string>(j, "negative_phase", "exact", what);
  if (phase == "exact") {
    c.negative_phase = ExactPhase{};
    if (j.contains("gibbs_steps") || j.contains("gibbs_chains"))
      throw Error(ErrorCode::Parse, "gibbs_steps / gibbs_chains need negative_phase \"gibbs\"");
  } else if (phase == "gibbs") {
    GibbsPhase g;
    g.steps = get_or<int>(j, "gibbs_steps", g.steps, what);
    g.chains = get_or<int>(j, "gibbs_chains", g.chains, what);
    if (g.steps < 1 || g.chains < 1) throw Error(ErrorCode::Parse, "gibbs steps and chains must be >= 1");
    c.negative_phase = g;
  } else {
    throw Error(ErrorCode::Parse, "negative_phase must be exact or gibbs");
  }

  if (j.contains("cif_r") && j.contains("cif_alpha")) throw Error(ErrorCode::Parse, "give cif_r or cif_alpha, not both");
  if (j.contains("cif_r") || j.contains("cif_alpha") || j.contains("cif_rule")) {
    CifConfig cif;
    if (j.contains("cif_r")) {
      const Scalar r = get<Scalar>(j, "cif_r", what);
      if (!(r >= 0 && r < 1)) throw Error(ErrorCode::Parse, "cif_r must lie in [0, 1)");
      cif.r = r;
    } else {
      CifAuto a;
      a.alpha = get_or<Scalar>(j, "cif_alpha", a.alpha, what);
      if (!(a.alpha >= 0)) throw Error(ErrorCode::Parse, "cif_alpha must be >= 0");
      cif.r = a;
    }
    const std::string rule = get_or<std::string>(j, "cif_rule", "threshold", what);
    if (rule == "threshold") cif.rule = CifRule::Threshold;
    else if (rule == "cumulative") cif.rule = CifRule::CumulativeShare;
    else throw Error(ErrorCode::Parse, "cif_rule must be threshold or cumulative");
    c.cd_cif = cif;
  }

  c.tolerance = get_or<Scalar>(j, "tolerance", c.tolerance, what);
  c.divergence_patience = get_or<int>(j, "divergence_patience", c.divergence_patience, what);
  c.trace_every = get_or<int>(j, "trace_every", c.trace_every, what);
  if (c.trace_every < 1) throw Error(ErrorCode::Parse, "trace_every must be >= 1");
  c.n_h = get_or<int>(j, "n_h", c.n_h, what);
  if (c.n_h < 1) throw Error(ErrorCode::Parse, "n_h must be >= 1");
  c.init_scale = get_or<Scalar>(j, "init_scale", c.init_scale, what);
  c.ip_iterations = get_or<int>(j, "ip_iterations", c.ip_iterations, what);
  c.ip_sub_epochs = get_or<int>(j, "ip_sub_epochs", c.ip_sub_epochs, what);
  if (c.ip_iterations < 0 || c.ip_sub_epochs < 0) throw Error(ErrorCode::Parse, "IP budgets must be >= 0");

  const std::string gh = get_or<std::string>(j, "gamma_h", "exact", what);
  if (gh == "exact") c.gamma_h = GammaHMode::Exact;
  else if (gh == "sampled") c.gamma_h = GammaHMode::Sampled;
  else throw Error(ErrorCode::Parse, "gamma_h must be exact or sampled");
  const std::string gb = get_or<std::string>(j, "gamma_b", "exact", what);
  if (gb == "exact") c.gamma_b = GammaBMode::Exact;
  else if (gb == "cd") c.gamma_b = GammaBMode::Cd;
  else throw Error(ErrorCode::Parse, "gamma_b must be exact or cd");
  const std::string gs = get_or<std::string>(j, "gamma_b_solver", "gradient", what);
  if (gs == "gradient") c.gamma_b_solver = GammaBSolver::Gradient;
  else if (gs == "newton") c.gamma_b_solver = GammaBSolver::Newton;
  else throw Error(ErrorCode::Parse, "gamma_b_solver must be gradient or newton");
  c.gamma_b_tolerance = get_or<Scalar>(j, "gamma_b_tolerance", c.gamma_b_tolerance, what);
  c.generate_burn_in = get_or<int>(j, "generate_burn_in", c.generate_burn_in, what);
  return c;
}

Json to_json(const TrainConfig& c) {
  Json j;
  if (c.half_over_n_rate) j["learning_rate"] = "paper-default";
  else j["learning_rate"] = c.learning_rate;
  j["learning_rate_unit"] = c.rate_unit == RateUnit::Mean ? "mean" : "per_sample";
  j["max_epochs"] = c.max_epochs;
  j["seed"] = c.seed;
  if (const auto* g = std::get_if<GibbsPhase>(&c.negative_phase)) {
    j["negative_phase"] = "gibbs";
    j["gibbs_steps"] = g->steps;
    j["gibbs_chains"] = g->chains;
  } else {
    j["negative_phase"] = "exact";
  }
  if (c.cd_cif) {
    if (const auto* r = std::get_if<Scalar>(&c.cd_cif->r)) j["cif_r"] = *r;
    else j["cif_alpha"] = std::get<CifAuto>(c.cd_cif->r).alpha;
    j["cif_rule"] = c.cd_cif->rule == CifRule::Threshold ? "threshold" : "cumulative";
  }
  j["tolerance"] = c.tolerance;
  j["divergence_patience"] = c.divergence_patience;
  j["trace_every"] = c.trace_every;
  j["n_h"] = c.n_h;
  j["init_scale"] = c.init_scale;
  j["ip_iterations"] = c.ip_iterations;
  j["ip_sub_epochs"] = c.ip_sub_epochs;
  j["gamma_h"] = c.gamma_h == GammaHMode::Exact ? "exact" : "sampled";
  j["gamma_b"] = c.gamma_b == GammaBMode::Exact ? "exact" : "cd";
  j["gamma_b_solver"] = c.gamma_b_solver == GammaBSolver::Gradient ? "gradient" : "newton";
  j["gamma_b_tolerance"] = c.gamma_b_tolerance;
  j["generate_burn_in"] = c.generate_burn_in;
  return j;
}

ExperimentSpec experiment_spec_from_json(const Json& j, const std::string& base_dir) {
  const char* what = "experiment spec";
  require_keys(j,
               {"kind", "n", "n_h", "sample_sizes", "n_targets", "n_repeats", "methods", "master_seed", "corpus_path",
                "hidden_sizes", "description"},
               what);
  ExperimentSpec s;
  s.kind = experiment_kind_from_string(get<std::string>(j, "kind", what));
  s.n = get<int>(j, "n", what);
  s.n_h = get_or<int>(j, "n_h", 0, what);
  s.sample_sizes = get<std::vector<Index>>(j, "sample_sizes", what);
  s.n_targets = get_or<int>(j, "n_targets", 1, what);
  s.n_repeats = get_or<int>(j, "n_repeats", 1, what);
  s.master_seed = get_or<std::uint64_t>(j, "master_seed", 0, what);
  s.hidden_sizes = get_or<std::vector<int>>(j, "hidden_sizes", {}, what);
  if (j.contains("corpus_path")) {
    std::filesystem::path p = get<std::string>(j, "corpus_path", what);
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    s.corpus_path = p.lexically_normal().string();
  }
  if (!j.contains("methods") || !j.at("methods").is_array()) throw Error(ErrorCode::Parse, "methods must be an array");
  for (const Json& m : j.at("methods")) {
    require_keys(m, {"name", "model", "method", "config"}, "method");
    MethodSpec ms;
    ms.model = get<std::string>(m, "model", "method");
    ms.method = get<std::string>(m, "method", "method");
    ms.name = get_or<std::string>(m, "name", ms.model + "_" + ms.method, "method");
    ms.config = m.contains("config") ? train_config_from_json(m.at("config")) : TrainConfig{};
    if (ms.method == "cdcif" && !ms.config.cd_cif) ms.config.cd_cif = CifConfig{};
    if (s.n_h > 0 && ms.model == "rbm") ms.config.n_h = s.n_h;
    s.methods.push_back(std::move(ms));
  }
  s.validate();
  return s;
}

Json to_json(const ExperimentSpec& s) {
  Json j;
  j["kind"] = to_string(s.kind);
  j["n"] = s.n;
  j["n_h"] = s.n_h;
  j["sample_sizes"] = s.sample_sizes;
  j["n_targets"] = s.n_targets;
  j["n_repeats"] = s.n_repeats;
  j["master_seed"] = s.master_seed;
  if (!s.corpus_path.empty()) j["corpus_path"] = s.corpus_path;
  if (!s.hidden_sizes.empty()) j["hidden_sizes"] = s.hidden_sizes;
  Json methods = Json::array();
  for (const auto& m : s.methods)
    methods.push_back(Json{{"name", m.name}, {"model", m.model}, {"method", m.method}, {"config", to_json(m.config)}});
  j["methods"] = methods;
  return j;
}

SampleSet parse_lines01(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::uint8_t>> rows;
  SampleMeta meta;
  meta.source = source;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = lower_trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (lineno == 1 && line.size() > 1) {
        try {
          const Json j = Json::parse(line.substr(1));
          if (j.contains("seed")) meta.seed = j.at("seed").get<std::uint64_t>();
          if (j.contains("source")) meta.source = j.at("source").get<std::string>();
        } catch (const nlohmann::json::exception&) {
          // A plain comment.
        }
      }
      continue;
    }
    std::vector<std::uint8_t> row;
    row.reserve(line.size());
    for (char ch : line) {
      if (ch != '0' && ch != '1')
        throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": non-binary character");
      row.push_back(std::uint8_t(ch - '0'));
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::Parse, "no sample rows");
  return from_rows(std::move(rows), meta);
}

SampleSet parse_csv01(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::uint8_t>> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = lower_trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::uint8_t> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      cell = lower_trim(cell);
      if (cell != "0" && cell != "1") throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": non-binary cell");
      row.push_back(std::uint8_t(cell[0] - '0'));
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::Parse, "no sample rows");
  return from_rows(std::move(rows), SampleMeta{0, source});
}

SampleSet read_lines01(const std::string& path) { return parse_lines01(read_file(path), "file:" + path); }

std::string format_lines01(const SampleSet& s) {
  std::string out = "# " + Json{{"n", s.n}, {"N", s.size()}, {"seed", s.meta.seed}, {"source", s.meta.source}}.dump() + "\n";
  out.reserve(out.size() + std::size_t(s.size()) * std::size_t(s.n + 1));
  for (Index r = 0; r < s.size(); ++r) {
    for (int i = 0; i < s.n; ++i) out.push_back(s.rows(r, i) ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

std::string format_trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = "epoch,kl_to_empirical,kl_to_target\n";
  for (const TraceRow& r : trace)
    out += std::to_string(r.epoch) + "," + format_double(r.kl_to_empirical) + "," + format_double(r.kl_to_target) + "\n";
  return out;
}

std::string format_ip_trace_csv(const std::vector<IpTraceRow>& trace) {
  std::string out = "iteration,d_q_to_prev_p,d_q_to_new_p,kl_marginal_to_empirical,kl_marginal_to_target\n";
  for (const IpTraceRow& r : trace)
    out += std::to_string(r.iteration) + "," + format_double(r.d_q_to_prev_p) + "," + format_double(r.d_q_to_new_p) +
           "," + format_double(r.kl_marginal_to_empirical) + "," + format_double(r.kl_to_target) + "\n";
  return out;
}

std::string format_results_csv(const ResultTable& table) {
  std::string out = "kind,method,n,n_h,N,target_id,repeat,metric_name,metric_value,epochs_or_iters,seed,failed\n";
  for (const ResultRow& r : table.rows)
    out += r.kind + "," + r.method + "," + std::to_string(r.n) + "," + std::to_string(r.n_h) + "," +
           std::to_string(r.sample_size) + "," + std::to_string(r.target_id) + "," + std::to_string(r.repeat) + "," +
           r.metric_name + "," + format_double(r.metric_value) + "," + std::to_string(r.epochs_or_iters) + "," +
           std::to_string(r.seed) + "," + (r.failed ? "1" : "0") + "\n";
  return out;
}

Json summary_json(const ResultTable& table) {
  Json cells = Json::array();
  for (const CellSummary& c : table.summary()) {
    Json j{{"method", c.method}, {"n_h", c.n_h}, {"N", c.sample_size}, {"metric", c.metric_name}};
    j["mean"] = std::isnan(c.mean) ? Json(nullptr) : Json(c.mean);
    j["stderr"] = std::isnan(c.stderr_) ? Json(nullptr) : Json(c.stderr_);
    j["count"] = c.count;
    j["failures"] = c.failures;
    cells.push_back(j);
  }
  Json errors = Json::array();
  for (const ResultRow& r : table.rows)
    if (r.failed)
      errors.push_back(Json{{"method", r.method}, {"N", r.sample_size}, {"target_id", r.target_id}, {"repeat", r.repeat}, {"error", r.error}});
  return Json{{"cells", cells}, {"failed_trials", errors}};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Parse, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json_file(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, "'" + path + "': " + e.what());
  }
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Parse, "cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Parse, "write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace cif
