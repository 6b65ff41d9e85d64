// Command-line front end: coordinates, Fisher matrices, training runs,
// experiment grids and sample-file ingestion.

#include "cif/eval.hpp"
#include "cif/fisher.hpp"
#include "cif/io.hpp"
#include "cif/rbm.hpp"
#include "cif/sbm.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <unistd.h>

namespace fs = std::filesystem;
using namespace cif;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kUsage = 2, kDiverged = 3, kAllFailed = 4 };

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct Globals {
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  bool json = false;
  std::string out;
};

class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv) {
    j_["command"] = std::move(command);
    j_["argv"] = std::move(argv);
    j_["tool_version"] = kVersion;
    j_["started"] = utc_now();
    j_["outputs"] = Json::array();
  }
  Json& operator[](const char* key) { return j_[key]; }
  void output(const std::string& path) { j_["outputs"].push_back(path); }
  void write(const std::string& path) {
    j_["finished"] = utc_now();
    write_file_atomic(path, j_.dump(2) + "\n");
  }

 private:
  Json j_;
};

std::string join(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

void emit(const Json& j) { std::cout << j.dump(2) << "\n"; }

Json labeled(const std::vector<Mask>& labels, const Vector& values) {
  Json out = Json::array();
  for (std::size_t k = 0; k < labels.size(); ++k) out.push_back(Json{{"subset", labels[k]}, {"value", values(Index(k))}});
  return out;
}

int cmd_coords(const std::string& input, const std::string& system, int l, const Globals& g, Manifest& m) {
  const Distribution d = distribution_from_json(read_json_file(input));
  Json out{{"n", d.n()}, {"system", system}};
  const std::vector<Mask> all = subsets_by_order(d.n());
  if (system == "p") {
    out["p"] = to_json(d)["p"];
  } else if (system == "eta") {
    const EtaCoords e = eta_from_p(d);
    Vector v(Index(all.size()));
    for (std::size_t k = 0; k < all.size(); ++k) v(Index(k)) = e(all[k]);
    out["eta"] = labeled(all, v);
  } else if (system == "theta") {
    const ThetaCoords t = theta_from_p(d);
    Vector v(Index(all.size()));
    for (std::size_t k = 0; k < all.size(); ++k) v(Index(k)) = t(all[k]);
    out["theta"] = labeled(all, v);
    out["psi"] = t.psi;
  } else if (system == "mixed") {
    const MixedCoords mc = mixed_from_distribution(d, l);
    out["l"] = l;
    out["eta_low"] = labeled(mc.low_labels, mc.eta_low);
    out["theta_high"] = labeled(mc.high_labels, mc.theta_high);
  } else {
    throw Error(ErrorCode::Parse, "unknown system '" + system + "'");
  }
  emit(out);
  if (!g.out.empty()) {
    const std::string path = join(g.out, "coords.json");
    write_file_atomic(path, out.dump(2) + "\n");
    m.output(path);
  }
  return kOk;
}

int cmd_fisher(const std::string& input, const std::string& system, int l, bool ratios, bool oracle,
               const Globals& g, Manifest& m) {
  const Distribution d = distribution_from_json(read_json_file(input));
  const CoordSystem sys = coord_system_from_string(system);
  Json out;
  if (ratios) {
    const InformationRatios r = information_ratios(d, sys, l);
    out = Json{{"system", system}, {"l", l}, {"loss_ratio", r.loss_ratio}, {"tail_to_min_kept", r.tail_to_min_kept}};
  } else {
    out = to_json(fisher(d, sys, l));
  }
  if (oracle) {
    const FisherMatrix exact = fisher(d, sys, l);
    const FisherMatrix approx = fisher_score_oracle(d, sys, l);
    const Scalar dev = (exact.m - approx.m).cwiseAbs().maxCoeff() / exact.m.cwiseAbs().maxCoeff();
    out["oracle_max_relative_deviation"] = dev;
  }

  if (g.json || !ratios) {
    emit(out);
  } else {
    // Fixed-point percentages with the significant digits the ratios need.
    auto pct = [](Scalar v) {
      std::ostringstream os;
      const Scalar p = 100 * v;
      os << std::setprecision(p < 0.01 ? 4 : p < 1 ? 3 : 2) << std::fixed << p << "%";
      return os.str();
    };
    std::cout << pct(out["loss_ratio"].get<Scalar>()) << " " << pct(out["tail_to_min_kept"].get<Scalar>()) << "\n";
    if (oracle) std::cout << "oracle deviation " << format_double(out["oracle_max_relative_deviation"]) << "\n";
  }
  if (!g.out.empty()) {
    const std::string path = join(g.out, ratios ? "ratios.json" : "fisher.json");
    write_file_atomic(path, out.dump(2) + "\n");
    m.output(path);
  }
  return kOk;
}

SampleSet load_samples(const std::string& path) {
  if (fs::path(path).extension() == ".csv") return parse_csv01(read_file(path), "file:" + path);
  return read_lines01(path);
}

int cmd_train(const std::string& model, const std::string& method, const std::string& data_path,
              const std::string& config_path, const std::string& target_path, const Globals& g, Manifest& m) {
  if (g.out.empty()) throw Error(ErrorCode::Parse, "train needs --out");
  const SampleSet data = load_samples(data_path);
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : train_config_from_json(read_json_file(config_path));
  if (g.seed) cfg.seed = *g.seed;
  if (method == "cdcif" && !cfg.cd_cif) cfg.cd_cif = CifConfig{};
  std::optional<Distribution> target;
  if (!target_path.empty()) target = distribution_from_json(read_json_file(target_path));
  const Distribution* tp = target ? &*target : nullptr;

  m["model"] = model;
  m["method"] = method;
  m["data"] = data_path;
  m["sample_count"] = data.size();
  m["n"] = data.n;
  m["master_seed"] = cfg.seed;
  m["config"] = to_json(cfg);

  bool diverged = false;
  Json summary;
  const std::string params_path = join(g.out, "params.json");
  if (model == "sbm") {
    if (method != "ml" && method != "cd1" && method != "cdcif")
      throw Error(ErrorCode::Parse, "sbm methods are ml, cd1, cdcif");
    const SbmResult r = method == "ml"    ? sbm_train_ml(data, cfg, tp)
                        : method == "cd1" ? sbm_train_cd1(data, cfg, tp)
                                          : sbm_train_cd_cif(data, cfg, tp);
    write_file_atomic(params_path, to_json(r.params).dump(2) + "\n");
    const std::string trace = join(g.out, "trace.csv");
    write_file_atomic(trace, format_trace_csv(r.trace));
    m.output(params_path);
    m.output(trace);
    if (method == "cdcif") {
      m["resolved_r"] = r.resolved_r;
      m["kept_weights"] = cd_cif_mask(data, r.resolved_r, cfg.cd_cif->rule).kept;
    }
    diverged = r.diverged;
    summary["epochs"] = r.epochs_run;
    if (!r.trace.empty()) summary["final_kl_to_empirical"] = r.trace.back().kl_to_empirical;
    if (tp && data.n <= kMaxVariables) summary["kl_target_model"] = kl_divergence(*tp, sbm_stationary(r.params));
  } else if (model == "rbm") {
    if (method == "ip") {
      Rng init_rng(cfg.seed);
      const RbmParams p0 = rbm_initial_params(data, cfg.n_h, cfg.init_scale, init_rng);
      const IpResult r = rbm_train_ip(data, p0, cfg.ip_iterations, cfg, tp);
      write_file_atomic(params_path, to_json(r.params).dump(2) + "\n");
      const std::string trace = join(g.out, "ip_trace.csv");
      write_file_atomic(trace, format_ip_trace_csv(r.trace));
      m.output(params_path);
      m.output(trace);
      summary["iterations"] = r.iterations_run;
      if (r.iterations_run > 0 && !std::isnan(r.trace.back().kl_marginal_to_empirical)) {
        const BestIp best = best_ip_select(r);
        const std::string best_path = join(g.out, "params_best.json");
        write_file_atomic(best_path, to_json(best.params).dump(2) + "\n");
        m.output(best_path);
        summary["best_iteration"] = best.iteration;
      }
      diverged = !(r.params.W.allFinite() && r.params.b.allFinite() && r.params.d.allFinite());
    } else if (method == "ml" || method == "cd1") {
      const RbmResult r = method == "ml" ? rbm_train_ml(data, cfg, tp) : rbm_train_cd1(data, cfg, tp);
      write_file_atomic(params_path, to_json(r.params).dump(2) + "\n");
      const std::string trace = join(g.out, "trace.csv");
      write_file_atomic(trace, format_trace_csv(r.trace));
      m.output(params_path);
      m.output(trace);
      diverged = r.diverged;
      summary["epochs"] = r.epochs_run;
    } else {
      throw Error(ErrorCode::Parse, "rbm methods are ml, cd1, ip");
    }
  } else {
    throw Error(ErrorCode::Parse, "model must be sbm or rbm");
  }
  summary["diverged"] = diverged;
  m["result"] = summary;
  if (g.json) emit(summary);
  else std::cout << "wrote " << params_path << (diverged ? " (diverged)" : "") << "\n";
  return diverged ? kDiverged : kOk;
}

int cmd_experiment(const std::string& spec_path, const Globals& g, Manifest& m) {
  if (g.out.empty()) throw Error(ErrorCode::Parse, "experiment needs --out");
  ExperimentSpec spec =
      experiment_spec_from_json(read_json_file(spec_path), fs::absolute(spec_path).parent_path().string());
  if (g.seed) spec.master_seed = *g.seed;
  m["spec"] = spec_path;
  m["resolved_spec"] = to_json(spec);
  m["master_seed"] = spec.master_seed;

  RunOptions opts;
  opts.jobs = g.jobs > 0 ? g.jobs : int(std::max(1u, std::thread::hardware_concurrency()));
  m["jobs"] = opts.jobs;
  if (isatty(STDERR_FILENO)) opts.progress = [](std::size_t done, std::size_t total) {
    std::cerr << "\r" << done << "/" << total << " trials" << (done == total ? "\n" : "") << std::flush;
  };
  const ResultTable table = run_experiment(spec, opts);

  const std::string csv = join(g.out, "results.csv"), sum = join(g.out, "summary.json");
  write_file_atomic(csv, format_results_csv(table));
  const Json summary = summary_json(table);
  write_file_atomic(sum, summary.dump(2) + "\n");
  m.output(csv);
  m.output(sum);

  if (g.json) {
    emit(summary);
  } else {
    std::cout << std::left << std::setw(16) << "method" << std::setw(6) << "n_h" << std::setw(8) << "N" << std::setw(24)
              << "mean" << std::setw(24) << "stderr" << "count/failed\n";
    for (const CellSummary& c : table.summary())
      std::cout << std::left << std::setw(16) << c.method << std::setw(6) << c.n_h << std::setw(8) << c.sample_size
                << std::setw(24) << format_double(c.mean) << std::setw(24) << format_double(c.stderr_) << c.count << "/"
                << c.failures << "\n";
  }
  return table.all_failed() ? kAllFailed : kOk;
}

int cmd_ingest(const std::string& input, const std::string& format, const std::string& output, const Globals& g,
               Manifest& m) {
  const std::string text = read_file(input);
  SampleSet s;
  if (format == "lines01") s = parse_lines01(text, "file:" + input);
  else if (format == "csv") s = parse_csv01(text, "file:" + input);
  else throw Error(ErrorCode::Parse, "format must be lines01 or csv");
  s.meta.source = "file:" + input;
  const std::string path = !output.empty() ? output : g.out.empty() ? "" : join(g.out, "samples.txt");
  if (path.empty()) throw Error(ErrorCode::Parse, "ingest needs an output path");
  write_file_atomic(path, format_lines01(s));
  m.output(path);
  m["n"] = s.n;
  m["sample_count"] = s.size();
  const Json info{{"n", s.n}, {"N", s.size()}, {"output", path}};
  if (g.json) emit(info);
  else std::cout << "ingested " << s.size() << " rows of " << s.n << " variables into " << path << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Information geometry of binary distributions and Boltzmann machine training"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for training runs or experiment grids")->group("Global");
  app.add_option("--jobs", g.jobs, "Parallel trials (default: hardware threads)")->group("Global");
  app.add_flag("--json", g.json, "Machine-readable JSON on stdout")->group("Global");
  app.add_option("--out", g.out, "Output directory")->group("Global");

  std::string input, system = "theta";
  int order = 1;
  auto* coords = app.add_subcommand("coords", "Print coordinates of a distribution file");
  coords->add_option("input", input, "Distribution JSON")->required();
  coords->add_option("--system", system, "p | eta | theta | mixed")->check(CLI::IsMember({"p", "eta", "theta", "mixed"}));
  coords->add_option("--l", order, "Order threshold for mixed coordinates");

  bool ratios = false, oracle = false;
  auto* fisher_cmd = app.add_subcommand("fisher", "Fisher information matrix or confidence ratios");
  fisher_cmd->add_option("input", input, "Distribution JSON")->required();
  fisher_cmd->add_option("--system", system, "theta | eta | mixed")->check(CLI::IsMember({"eta", "theta", "mixed"}));
  fisher_cmd->add_option("--l", order, "Order threshold");
  fisher_cmd->add_flag("--ratios", ratios, "Print the tailored loss ratio and tail-to-min-kept ratio");
  fisher_cmd->add_flag("--oracle", oracle, "Also compare against the finite-difference score oracle");

  std::string model, method, data, config, target;
  auto* train = app.add_subcommand("train", "Train one model on a sample file");
  train->add_option("--model", model, "sbm | rbm")->required()->check(CLI::IsMember({"sbm", "rbm"}));
  train->add_option("--method", method, "ml | cd1 | cdcif | ip")->required()->check(
      CLI::IsMember({"ml", "cd1", "cdcif", "ip"}));
  train->add_option("--data", data, "Sample rows (0/1 lines, or .csv)")->required();
  train->add_option("--config", config, "Flat JSON training config");
  train->add_option("--target", target, "Distribution JSON for KL-to-target tracing");

  std::string spec;
  auto* experiment = app.add_subcommand("experiment", "Run an experiment grid");
  experiment->add_option("--spec", spec, "Experiment spec JSON")->required();

  std::string format = "lines01", output;
  auto* ingest = app.add_subcommand("ingest", "Normalize a binary matrix into a sample file");
  ingest->add_option("--input", input, "Binary matrix file")->required();
  ingest->add_option("--format", format, "lines01 | csv")->check(CLI::IsMember({"lines01", "csv"}));
  ingest->add_option("--output", output, "Sample file to write (default: <out>/samples.txt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (seed_opt->count()) g.seed = seed;

  const std::string name = app.get_subcommands().front()->get_name();
  Manifest manifest(name, std::vector<std::string>(argv, argv + argc));
  if (g.seed) manifest["master_seed"] = *g.seed;
  int code = kOk;
  try {
    if (name == "coords") code = cmd_coords(input, system, order, g, manifest);
    else if (name == "fisher") code = cmd_fisher(input, system, order, ratios, oracle, g, manifest);
    else if (name == "train") code = cmd_train(model, method, data, config, target, g, manifest);
    else if (name == "experiment") code = cmd_experiment(spec, g, manifest);
    else code = cmd_ingest(input, format, output, g, manifest);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  try {
    if (!g.out.empty()) manifest.write(join(g.out, "manifest.json"));
    else if (name == "ingest" && !output.empty())
      manifest.write((fs::path(output).parent_path() / (fs::path(output).filename().string() + ".manifest.json")).string());
  } catch (const std::exception& e) {
    std::cerr << "error writing manifest: " << e.what() << "\n";
    return kUsage;
  }
  return code;
}
