// sdflyer: train, convert, evaluate and compare free-flyer controllers.
//
//   sdflyer train   --config cfg.json [--seed N] [--out DIR]
//   sdflyer convert --weights policy.json [--threshold T[,T,T]] [--mode float|quantized] [--out DIR]
//   sdflyer eval    --controller ann|sdnn|null --weights FILE [--task undock|random|all] [--seeds N|a,b,c]
//   sdflyer compare REPORT REPORT... [--out DIR]
//   sdflyer verify  [--weights FILE]
//
// Outputs go to --out, else $SDFLYER_OUT/<command>, else ./runs/<command>.
// Exit codes: 0 ok, 2 config, 3 divergence, 4 conversion, 5 integrity, 6 incompatible.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdflyer/io.hpp"
#include "sdflyer/plot.hpp"
#include "sdflyer/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace sdflyer;

namespace {

struct Common {
  std::string config;
  std::string out;
};

fs::path output_dir(const Common& c, const std::string& command) {
  if (!c.out.empty()) return c.out;
  if (const char* root = std::getenv("SDFLYER_OUT"); root && *root) return fs::path(root) / command;
  return fs::path("runs") / command;
}

RunConfig resolve_config(const Common& c) {
  return c.config.empty() ? RunConfig{} : load_config(c.config);
}

void write_config(const fs::path& dir, RunConfig cfg) {
  cfg.out_dir = dir.string();
  write_atomic(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(',', start);
    out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

// "10" means seeds 0..9; "3,5,8" is an explicit list.
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  require(!s.empty(), ErrorKind::Config, "--seeds: empty seed list");
  if (s.find(',') == std::string::npos) {
    const std::uint64_t n = parse_u64(s);
    require(n > 0, ErrorKind::Config, "--seeds: empty seed list");
    std::vector<std::uint64_t> out(n);
    for (std::uint64_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  std::vector<std::uint64_t> out;
  for (const auto& part : split_list(s)) {
    require(!part.empty(), ErrorKind::Config, "--seeds: empty entry in '" + s + "'");
    out.push_back(parse_u64(part));
  }
  return out;
}

std::vector<double> parse_thresholds(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : split_list(s)) {
    const double t = parse_double(part);
    require(t >= 0.0, ErrorKind::Config, "--threshold must be >= 0");
    out.push_back(t);
  }
  return out;
}

std::vector<Task> parse_tasks(const std::string& s) {
  if (s == "all") return {Task::Undock, Task::Random};
  std::vector<Task> out;
  for (const auto& part : split_list(s)) out.push_back(task_from_string(part));
  return out;
}

std::string read_weights(const std::string& path) {
  require(!path.empty(), ErrorKind::Config, "--weights is required");
  require(fs::exists(path), ErrorKind::Config, "weights file not found: " + path);
  return read_file(path);
}

// ---------------------------------------------------------------- train

int cmd_train(const Common& common, std::optional<std::uint64_t> seed) {
  RunConfig cfg = resolve_config(common);
  if (seed) cfg.ppo.seed = *seed;
  const fs::path dir = output_dir(common, "train");
  const int total = cfg.ppo.iterations;
  const TrainResult res = train(cfg.ppo, [total](const TrainLogRow& r) {
    if (r.iteration % 10 == 0 || r.iteration + 1 == total)
      std::fprintf(stderr, "iter %4d/%d  return %9.3f  greedy undock %.4f m %.3f deg  std %.3f\n", r.iteration + 1,
                   total, r.mean_return, r.greedy_undock_pos_err, r.greedy_undock_ang_err, r.mean_std);
  });
  write_atomic(dir / "policy.json", policy_to_string(res.policy, &res.critic));
  write_atomic(dir / "train_log.csv", train_log_csv(res.log));
  write_config(dir, cfg);
  if (!res.log.empty()) {
    const auto& last = res.log.back();
    std::printf("greedy undock: final position error %.4f m, final orientation error %.3f deg\n",
                last.greedy_undock_pos_err, last.greedy_undock_ang_err);
  }
  std::printf("wrote %s\n", (dir / "policy.json").string().c_str());
  return 0;
}

// ---------------------------------------------------------------- convert

json conversion_report(const SdnnNet& net, const DenseNet& actor, const CheckResult& eq) {
  json r;
  r["format"] = "sdflyer-conversion-report";
  r["schema_version"] = kSchemaVersion;
  r["layer_dims"] = net.dims();
  r["thresholds"] = net.thresholds();
  r["integer_thresholds"] = net.integer_thresholds();
  json specs = json::array();
  for (const auto& s : net.act_specs()) specs.push_back({{"scale", s.scale}, {"real_max", s.real_max()}});
  r["activation_specs"] = specs;
  json layers = json::array();
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& ly = net.layers()[l];
    double err = 0.0;
    for (std::size_t i = 0; i < ly.weight.size(); ++i)
      err = std::max(err, std::abs(dequantize(ly.weight_q[i], ly.weight_spec) - actor.weight(l)[i]));
    layers.push_back({{"weight_scale", ly.weight_spec.scale},
                      {"max_weight_error", err},
                      {"half_lsb", 0.5 / ly.weight_spec.scale},
                      {"requant_multiplier", ly.requant.multiplier},
                      {"requant_shift", ly.requant.shift}});
  }
  r["layers"] = layers;
  r["equivalence_check"] = {{"name", eq.name}, {"passed", eq.passed}, {"max_abs_error", eq.worst}, {"limit", eq.limit}};
  return r;
}

int cmd_convert(const Common& common, const std::string& weights, const std::string& threshold,
                const std::string& mode) {
  RunConfig cfg = resolve_config(common);
  if (!threshold.empty()) cfg.thresholds = parse_thresholds(threshold);
  const PolicyCheckpoint ck = policy_from_string(read_weights(weights), weights);
  const SdnnMode m = mode.empty() ? SdnnMode::Quantized : sdnn_mode_from_string(mode);
  const auto calib = calibration_observations(ck.policy.actor, cfg.tasks, cfg.calibration_seeds, cfg.ppo.flyer);
  const SdnnNet net = convert(ck.policy.actor, cfg.thresholds, cfg.quant, calib, m);
  const CheckResult eq = check_sdnn_equivalence(net, ck.policy.actor, 7);

  const fs::path dir = output_dir(common, "convert");
  write_atomic(dir / "sdnn.json", sdnn_to_string(net));
  write_atomic(dir / "conversion_report.json", conversion_report(net, ck.policy.actor, eq).dump(2) + "\n");
  write_config(dir, cfg);
  std::printf("thresholds:");
  for (double t : net.thresholds()) std::printf(" %s", format_double(t).c_str());
  std::printf("\nthreshold-0 equivalence: %s (max abs error %.3g)\n", eq.passed ? "pass" : "FAIL", eq.worst);
  std::printf("wrote %s\n", (dir / "sdnn.json").string().c_str());
  return 0;
}

// ---------------------------------------------------------------- eval

std::unique_ptr<Controller> make_controller(const std::string& kind, const std::string& weights,
                                            const std::string& threshold, const std::string& mode,
                                            const std::string& schedule, const std::string& name,
                                            const RunConfig& cfg) {
  if (kind == "null") return std::make_unique<NullController>();
  const std::string text = read_weights(weights);
  const std::string file_kind = weights_kind(text, weights);
  if (kind == "ann") {
    require(file_kind == "dense-policy", ErrorKind::Config, "--controller ann needs a dense policy file");
    return std::make_unique<AnnController>(policy_from_string(text, weights).policy.actor, name.empty() ? "ann" : name);
  }
  require(kind == "sdnn", ErrorKind::Config, "--controller must be ann, sdnn or null");
  SdnnNet net;
  if (file_kind == "sdnn") {
    net = sdnn_from_string(text, weights);
    if (!threshold.empty()) {
      auto t = parse_thresholds(threshold);
      if (t.size() == 1) t.assign(net.thresholds().size(), t.front());
      net.set_thresholds(t);
    }
    if (!mode.empty()) net.set_mode(sdnn_mode_from_string(mode));
  } else {
    // Convert on the fly from a dense policy.
    const DenseNet actor = policy_from_string(text, weights).policy.actor;
    const auto calib = calibration_observations(actor, cfg.tasks, cfg.calibration_seeds, cfg.ppo.flyer);
    const auto t = threshold.empty() ? cfg.thresholds : parse_thresholds(threshold);
    net = convert(actor, t, cfg.quant, calib, mode.empty() ? SdnnMode::Quantized : sdnn_mode_from_string(mode));
  }
  if (schedule == "pipelined") net.set_schedule(SdnnSchedule::Pipelined);
  else require(schedule.empty() || schedule == "flush", ErrorKind::Config, "--schedule must be flush or pipelined");
  return std::make_unique<SdnnController>(std::move(net), name.empty() ? "sdnn" : name);
}

int cmd_eval(const Common& common, const std::string& controller, const std::string& weights,
             const std::string& task, const std::optional<std::string>& seeds, const std::string& threshold,
             const std::string& mode, const std::string& schedule, const std::string& name) {
  RunConfig cfg = resolve_config(common);
  if (seeds) cfg.seeds = parse_seeds(*seeds);
  if (!task.empty()) cfg.tasks = parse_tasks(task);
  require(!cfg.seeds.empty(), ErrorKind::Config, "eval: empty seed list");
  if (!threshold.empty()) cfg.thresholds = parse_thresholds(threshold);
  auto ctrl = make_controller(controller, weights, threshold, mode, schedule, name, cfg);

  Controller* cs[] = {ctrl.get()};
  const auto traces = run_protocol(cs, cfg.tasks, cfg.seeds, cfg.ppo.flyer);
  const EvalReport report = aggregate(traces);

  const fs::path dir = output_dir(common, "eval");
  for (const auto& tr : traces) write_atomic(dir / "traces" / trace_filename(tr), trace_to_csv(tr));
  write_atomic(dir / "report.json", report_to_json(report).dump(1) + "\n");
  write_atomic(dir / "report.csv", report_to_csv(report));
  write_atomic(dir / "report.txt", report_table(report));
  for (auto metric : {TraceMetric::Position, TraceMetric::Orientation}) {
    const PlotResult p = plot_timeseries(traces, metric);
    for (const auto& w : p.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    write_atomic(dir / (metric == TraceMetric::Position ? "position.svg" : "orientation.svg"), p.svg);
  }
  write_config(dir, cfg);
  std::fputs(report_table(report).c_str(), stdout);
  for (const auto& e : report.entries)
    if (e.overflows > 0)
      std::fprintf(stderr, "warning: %s %s saturated %llu times\n", e.controller.c_str(), to_string(e.task).c_str(),
                   static_cast<unsigned long long>(e.overflows));
  return 0;
}

// ---------------------------------------------------------------- compare

int cmd_compare(const Common& common, const std::vector<std::string>& paths) {
  require(paths.size() >= 2, ErrorKind::Incompatible, "compare: need at least two reports");
  std::vector<EvalReport> reports;
  for (const auto& p : paths) {
    require(fs::exists(p), ErrorKind::Config, "report not found: " + p);
    reports.push_back(report_from_json(parse_json(read_file(p), p), p));
  }
  std::string csv, text, scatter = "report,controller,task,synops_per_inference,dense_macs_per_inference,"
                                   "inferences_per_mega_synop,latency_hops\n";
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const Comparison c = compare(reports[0], reports[i]);
    const std::string body = comparison_to_csv(c);
    csv += i == 1 ? body : body.substr(body.find('\n') + 1);
    text += c.controller_a + " vs " + c.controller_b + " (" + paths[i] + ")\n" + comparison_table(c) + "\n";
  }
  // Throughput proxy against synops: one point per (report, controller, task).
  for (std::size_t i = 0; i < reports.size(); ++i)
    for (const auto& e : reports[i].entries) {
      const double syn = e.summary.at("synops_per_inference").mean;
      scatter += std::to_string(i) + "," + e.controller + "," + to_string(e.task) + "," + format_double(syn) + "," +
                 format_double(e.summary.at("dense_macs_per_inference").mean) + "," +
                 format_double(syn > 0 ? 1e6 / syn : 0.0) + "," + std::to_string(e.latency_hops) + "\n";
    }
  const fs::path dir = output_dir(common, "compare");
  write_atomic(dir / "comparison.csv", csv);
  write_atomic(dir / "comparison.txt", text);
  write_atomic(dir / "scatter.csv", scatter);
  write_config(dir, resolve_config(common));
  std::fputs(text.c_str(), stdout);
  return 0;
}

// ---------------------------------------------------------------- verify

int cmd_verify(const Common& common, const std::string& weights, std::uint64_t seed) {
  std::vector<CheckResult> results = run_invariant_suite(seed);
  if (!weights.empty()) {
    const std::string text = read_weights(weights);  // checksum verified while loading
    if (weights_kind(text, weights) == "sdnn") {
      const SdnnNet net = sdnn_from_string(text, weights);
      results.push_back(check_sdnn_equivalence(net, dense_reference(net), seed + 10));
      results.back().name = "weight file: threshold-0 equivalence";
    } else {
      const PolicyCheckpoint ck = policy_from_string(text, weights);
      const bool finite = ck.policy.actor.finite();
      results.push_back({"weight file: finite parameters", finite, 0.0, 0.0, weights});
    }
  }
  bool ok = true;
  json doc = json::array();
  for (const auto& r : results) {
    std::printf("%-4s %-44s worst %-12.4g limit %-10.4g %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.worst,
                r.limit, r.detail.c_str());
    doc.push_back({{"name", r.name}, {"passed", r.passed}, {"worst", r.worst}, {"limit", r.limit}});
    ok = ok && r.passed;
  }
  if (!common.out.empty() || std::getenv("SDFLYER_OUT")) {
    const fs::path dir = output_dir(common, "verify");
    write_atomic(dir / "verify.json", doc.dump(1) + "\n");
    write_config(dir, resolve_config(common));
  }
  return ok ? 0 : static_cast<int>(ErrorKind::Integrity);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, convert, evaluate and compare free-flyer controllers"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run configuration (JSON)");
    sub->add_option("--out", common.out, "Output directory");
  };

  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "Train a ReLU actor with PPO");
  add_common(train_cmd);
  train_cmd->add_option("--seed", train_seed, "Training seed (overrides the config)");

  std::string weights, threshold, mode, task, controller = "ann", schedule, name;
  std::optional<std::string> seeds;
  auto* convert_cmd = app.add_subcommand("convert", "Convert a dense actor into a sigma-delta network");
  add_common(convert_cmd);
  convert_cmd->add_option("--weights", weights, "Dense policy file")->required();
  convert_cmd->add_option("--threshold", threshold, "Delta threshold(s) in real units: one value or one per stage");
  convert_cmd->add_option("--mode", mode, "float or quantized");

  auto* eval_cmd = app.add_subcommand("eval", "Closed-loop evaluation over tasks and seeds");
  add_common(eval_cmd);
  eval_cmd->add_option("--controller", controller, "ann, sdnn or null");
  eval_cmd->add_option("--weights", weights, "Policy or sdnn file");
  eval_cmd->add_option("--task", task, "undock, random, all, or a comma list");
  eval_cmd->add_option("--seeds,--seed", seeds, "Seed count N (0..N-1) or a comma list");
  eval_cmd->add_option("--threshold", threshold, "Override delta threshold(s)");
  eval_cmd->add_option("--mode", mode, "float or quantized");
  eval_cmd->add_option("--schedule", schedule, "flush or pipelined");
  eval_cmd->add_option("--name", name, "Controller label used in traces and reports");

  std::vector<std::string> reports;
  auto* compare_cmd = app.add_subcommand("compare", "Compare eval reports against the first one");
  add_common(compare_cmd);
  compare_cmd->add_option("reports", reports, "report.json files");

  std::uint64_t verify_seed = 1;
  auto* verify_cmd = app.add_subcommand("verify", "Run the invariant suite");
  add_common(verify_cmd);
  verify_cmd->add_option("--weights", weights, "Optional weight file to check");
  verify_cmd->add_option("--seed", verify_seed, "Seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::Config);
  }

  try {
    if (*train_cmd) return cmd_train(common, train_seed);
    if (*convert_cmd) return cmd_convert(common, weights, threshold, mode);
    if (*eval_cmd) return cmd_eval(common, controller, weights, task, seeds, threshold, mode, schedule, name);
    if (*compare_cmd) return cmd_compare(common, reports);
    if (*verify_cmd) return cmd_verify(common, weights, verify_seed);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
