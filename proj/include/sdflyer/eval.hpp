#pragma once

// Closed-loop evaluation of ANN and SDNN controllers on the free-flyer tasks,
// Table-I style accuracy aggregates and operation-count efficiency proxies.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dense_net.hpp"
#include "errors.hpp"
#include "freeflyer.hpp"
#include "sdnn.hpp"
#include "stats.hpp"

namespace sdflyer {

// Maps an observation to the raw (pre-squash) 6-vector the actor would emit.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual void reset() {}
  virtual std::vector<double> act(const Observation& obs) = 0;

  // Per-step operation accounting, filled by act().
  struct StepOps {
    std::uint64_t synops = 0;
    std::uint64_t dense_macs = 0;
    std::uint64_t messages = 0;
    std::uint64_t message_slots = 0;
    std::uint64_t overflows = 0;
  };
  const StepOps& last_ops() const { return ops_; }
  virtual std::size_t latency_hops() const { return 1; }

 protected:
  StepOps ops_;
};

// Dense actor, deterministic mean action. Every MAC is spent and every
// activation is communicated each step.
class AnnController : public Controller {
 public:
  explicit AnnController(DenseNet actor, std::string name = "ann") : actor_(std::move(actor)), name_(std::move(name)) {
    for (std::size_t l = 0; l < actor_.num_layers(); ++l) {
      macs_ += actor_.dims()[l] * actor_.dims()[l + 1];
      slots_ += actor_.dims()[l];
    }
  }
  std::string name() const override { return name_; }
  std::vector<double> act(const Observation& obs) override {
    const auto out = forward(actor_, obs, cache_);
    ops_ = {macs_, macs_, slots_, slots_, 0};
    return {out.begin(), out.end()};
  }

 private:
  DenseNet actor_;
  std::string name_;
  ForwardCache cache_;
  std::uint64_t macs_ = 0, slots_ = 0;
};

class SdnnController : public Controller {
 public:
  explicit SdnnController(SdnnNet net, std::string name = "sdnn") : net_(std::move(net)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  void reset() override { net_.reset_states(); }
  std::vector<double> act(const Observation& obs) override {
    OpCounters c;
    auto out = net_.step(obs, c);
    ops_ = {c.synops, c.dense_macs, c.total_messages(), c.message_slots, c.overflows};
    return out;
  }
  std::size_t latency_hops() const override { return net_.pipeline_latency(); }
  const SdnnNet& net() const { return net_; }

 private:
  SdnnNet net_;
  std::string name_;
};

// Outputs zeros: the flyer never moves.
class NullController : public Controller {
 public:
  std::string name() const override { return "null"; }
  std::vector<double> act(const Observation&) override { return std::vector<double>(kActDim, 0.0); }
};

struct TraceStep {
  int step = 0;                  // 1-based; errors are measured after the step
  double pos_err = 0.0;          // m, Euclidean
  double ang_err = 0.0;          // deg, total rotation angle
  std::array<double, 3> pos_err_axis{};  // m, goal - position
  std::array<double, 3> ang_err_axis{};  // deg, rotation-vector components
  std::array<double, 6> action{};        // applied force (N) and torque (N m)
  std::uint64_t synops = 0;
  std::uint64_t dense_macs = 0;
  std::uint64_t messages = 0;
  std::uint64_t message_slots = 0;
  std::uint64_t overflows = 0;

  bool operator==(const TraceStep&) const = default;
};

struct EpisodeTrace {
  std::string controller;
  Task task = Task::Undock;
  std::uint64_t seed = 0;
  std::size_t latency_hops = 1;
  std::vector<TraceStep> steps;

  bool operator==(const EpisodeTrace&) const = default;
};

inline EpisodeTrace run_episode(Controller& controller, Task task, std::uint64_t seed,
                                const FlyerParams& params = {}) {
  params.validate();
  SeededRng rng(seed);
  Episode ep = reset(rng, task);
  controller.reset();
  EpisodeTrace trace{controller.name(), task, seed, controller.latency_hops(), {}};
  trace.steps.reserve(static_cast<std::size_t>(params.episode_len));
  constexpr double deg = 180.0 / std::numbers::pi;
  for (int t = 1; t <= params.episode_len; ++t) {
    const Observation obs = observe(ep.state, ep.goal);
    const auto raw = controller.act(obs);
    const Action cmd = clamp_action(squash_action(raw, params), params);
    try {
      ep.state = step(ep.state, cmd, params);
    } catch (const Error& e) {
      fail(e.kind(), std::string(e.what()) + " (episode step " + std::to_string(t) + ")");
    }
    TraceStep s;
    s.step = t;
    const Vec3 dp = ep.goal.position - ep.state.position;
    const Vec3 dq = quat_error_rotvec(ep.state.orientation, ep.goal.orientation);
    s.pos_err = dp.norm();
    s.ang_err = quat_angle_deg(ep.state.orientation, ep.goal.orientation);
    s.pos_err_axis = {dp.x, dp.y, dp.z};
    s.ang_err_axis = {dq.x * deg, dq.y * deg, dq.z * deg};
    s.action = {cmd.force.x, cmd.force.y, cmd.force.z, cmd.torque.x, cmd.torque.y, cmd.torque.z};
    const auto& ops = controller.last_ops();
    s.synops = ops.synops;
    s.dense_macs = ops.dense_macs;
    s.messages = ops.messages;
    s.message_slots = ops.message_slots;
    s.overflows = ops.overflows;
    trace.steps.push_back(s);
  }
  return trace;
}

inline double rms(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

inline double rmse_position(const EpisodeTrace& tr) {
  std::vector<double> v;
  for (const auto& s : tr.steps) v.push_back(s.pos_err);
  return rms(v);
}

inline double rmse_orientation(const EpisodeTrace& tr) {
  std::vector<double> v;
  for (const auto& s : tr.steps) v.push_back(s.ang_err);
  return rms(v);
}

// Per-axis RMSE averaged over x, y, z.
inline double rmse_position_axis_mean(const EpisodeTrace& tr) {
  double acc = 0.0;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> v;
    for (const auto& s : tr.steps) v.push_back(s.pos_err_axis[a]);
    acc += rms(v);
  }
  return acc / 3.0;
}

inline double rmse_orientation_axis_mean(const EpisodeTrace& tr) {
  double acc = 0.0;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> v;
    for (const auto& s : tr.steps) v.push_back(s.ang_err_axis[a]);
    acc += rms(v);
  }
  return acc / 3.0;
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;

  bool operator==(const MeanSd&) const = default;
};

inline MeanSd mean_sd(std::span<const double> v) { return {sdflyer::mean(v), stddev(v)}; }

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "rmse_position_m",        "final_position_m",        "rmse_orientation_deg",  "final_orientation_deg",
      "rmse_position_axis_m",   "final_position_axis_m",   "rmse_orientation_axis_deg", "final_orientation_axis_deg",
      "synops_per_inference",   "dense_macs_per_inference", "message_density",      "edp_proxy"};
  return names;
}

// One (controller, task) cell of the report.
struct ReportEntry {
  std::string controller;
  Task task = Task::Undock;
  std::vector<std::uint64_t> seeds;
  std::size_t latency_hops = 1;
  std::map<std::string, std::vector<double>> per_seed;  // metric -> value per seed
  std::map<std::string, MeanSd> summary;
  std::uint64_t overflows = 0;

  bool operator==(const ReportEntry&) const = default;
};

struct EvalReport {
  std::vector<ReportEntry> entries;  // sorted by (controller, task)

  const ReportEntry* find(const std::string& controller, Task task) const {
    for (const auto& e : entries)
      if (e.controller == controller && e.task == task) return &e;
    return nullptr;
  }
  bool operator==(const EvalReport&) const = default;
};

inline std::map<std::string, double> episode_metrics(const EpisodeTrace& tr) {
  require(!tr.steps.empty(), ErrorKind::Config, "metrics: empty trace");
  const auto& last = tr.steps.back();
  std::map<std::string, double> m;
  m["rmse_position_m"] = rmse_position(tr);
  m["final_position_m"] = last.pos_err;
  m["rmse_orientation_deg"] = rmse_orientation(tr);
  m["final_orientation_deg"] = last.ang_err;
  m["rmse_position_axis_m"] = rmse_position_axis_mean(tr);
  m["final_position_axis_m"] =
      (std::abs(last.pos_err_axis[0]) + std::abs(last.pos_err_axis[1]) + std::abs(last.pos_err_axis[2])) / 3.0;
  m["rmse_orientation_axis_deg"] = rmse_orientation_axis_mean(tr);
  m["final_orientation_axis_deg"] =
      (std::abs(last.ang_err_axis[0]) + std::abs(last.ang_err_axis[1]) + std::abs(last.ang_err_axis[2])) / 3.0;
  double synops = 0, macs = 0, msgs = 0, slots = 0;
  for (const auto& s : tr.steps) {
    synops += static_cast<double>(s.synops);
    macs += static_cast<double>(s.dense_macs);
    msgs += static_cast<double>(s.messages);
    slots += static_cast<double>(s.message_slots);
  }
  const double n = static_cast<double>(tr.steps.size());
  m["synops_per_inference"] = synops / n;
  m["dense_macs_per_inference"] = macs / n;
  m["message_density"] = slots > 0 ? msgs / slots : 0.0;
  // Dimensionless stand-in for energy-delay product: operations x layer hops.
  m["edp_proxy"] = synops / n * static_cast<double>(tr.latency_hops);
  return m;
}

// Aggregates are a pure function of the traces.
inline EvalReport aggregate(std::vector<EpisodeTrace> traces) {
  std::sort(traces.begin(), traces.end(), [](const EpisodeTrace& a, const EpisodeTrace& b) {
    return std::tie(a.controller, a.task, a.seed) < std::tie(b.controller, b.task, b.seed);
  });
  EvalReport report;
  for (const auto& tr : traces) {
    if (report.entries.empty() || report.entries.back().controller != tr.controller ||
        report.entries.back().task != tr.task) {
      report.entries.push_back({tr.controller, tr.task, {}, tr.latency_hops, {}, {}, 0});
    }
    auto& e = report.entries.back();
    e.seeds.push_back(tr.seed);
    for (const auto& [k, v] : episode_metrics(tr)) e.per_seed[k].push_back(v);
    for (const auto& s : tr.steps) e.overflows += s.overflows;
  }
  for (auto& e : report.entries)
    for (const auto& [k, v] : e.per_seed) e.summary[k] = mean_sd(v);
  return report;
}

// Every controller sees the same seed list on every task.
inline std::vector<EpisodeTrace> run_protocol(std::span<Controller* const> controllers, std::span<const Task> tasks,
                                              std::span<const std::uint64_t> seeds, const FlyerParams& params = {}) {
  require(!seeds.empty(), ErrorKind::Config, "eval: empty seed list");
  require(!tasks.empty(), ErrorKind::Config, "eval: empty task list");
  std::vector<EpisodeTrace> traces;
  for (Controller* c : controllers)
    for (Task task : tasks)
      for (std::uint64_t seed : seeds) traces.push_back(run_episode(*c, task, seed, params));
  return traces;
}

struct ComparisonRow {
  Task task = Task::Undock;
  std::string metric;
  MeanSd a, b;
  double delta = 0.0;  // b - a (means)
  double ratio = 0.0;  // a / b (means); > 1 means b is smaller
};

struct Comparison {
  std::string controller_a, controller_b;
  std::vector<ComparisonRow> rows;
};

// Side-by-side view of controller b against baseline a. Both must cover the
// same tasks with the same seeds.
inline Comparison compare(const EvalReport& a, const std::string& controller_a, const EvalReport& b,
                          const std::string& controller_b) {
  Comparison cmp{controller_a, controller_b, {}};
  std::vector<Task> tasks_a, tasks_b;
  for (const auto& e : a.entries)
    if (e.controller == controller_a) tasks_a.push_back(e.task);
  for (const auto& e : b.entries)
    if (e.controller == controller_b) tasks_b.push_back(e.task);
  require(!tasks_a.empty() && !tasks_b.empty(), ErrorKind::Incompatible, "compare: controller missing from report");
  require(tasks_a == tasks_b, ErrorKind::Incompatible, "compare: reports cover different tasks");
  for (Task t : tasks_a) {
    const ReportEntry* ea = a.find(controller_a, t);
    const ReportEntry* eb = b.find(controller_b, t);
    require(ea->seeds == eb->seeds, ErrorKind::Incompatible,
            "compare: seed sets differ for task " + to_string(t));
    for (const auto& name : metric_names()) {
      const auto ia = ea->summary.find(name), ib = eb->summary.find(name);
      if (ia == ea->summary.end() || ib == eb->summary.end()) continue;
      ComparisonRow row{t, name, ia->second, ib->second, ib->second.mean - ia->second.mean, 0.0};
      row.ratio = ib->second.mean != 0.0 ? ia->second.mean / ib->second.mean
                                         : (ia->second.mean == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
      cmp.rows.push_back(row);
    }
  }
  return cmp;
}

// Compares the first controller of each report.
inline Comparison compare(const EvalReport& a, const EvalReport& b) {
  require(!a.entries.empty() && !b.entries.empty(), ErrorKind::Incompatible, "compare: empty report");
  return compare(a, a.entries.front().controller, b, b.entries.front().controller);
}


// Observations visited by the dense actor in closed loop; used to calibrate
// quantization scales. Seeds are offset so they never coincide with the
// evaluation seed list.
inline std::vector<std::vector<double>> calibration_observations(const DenseNet& actor, std::span<const Task> tasks,
                                                                 int episodes_per_task, const FlyerParams& params = {}) {
  std::vector<std::vector<double>> obs;
  ForwardCache cache;
  for (Task task : tasks) {
    for (int k = 0; k < episodes_per_task; ++k) {
      SeededRng rng(0xCA11B000ULL + static_cast<std::uint64_t>(k));
      Episode ep = reset(rng, task);
      for (int t = 0; t < params.episode_len; ++t) {
        const Observation o = observe(ep.state, ep.goal);
        obs.emplace_back(o.begin(), o.end());
        const auto out = forward(actor, o, cache);
        ep.state = step(ep.state, squash_action(out, params), params);
      }
    }
  }
  return obs;
}

}  // namespace sdflyer
