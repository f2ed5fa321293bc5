#pragma once

// Persistence: checksummed JSON weight files, run configuration, CSV traces
// and logs, JSON/CSV reports. All writes go through write_atomic().

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dense_net.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "ppo.hpp"
#include "sdnn.hpp"

namespace sdflyer {

using json = nlohmann::json;

inline constexpr const char* kWeightsFormat = "sdflyer-weights";
inline constexpr const char* kReportFormat = "sdflyer-report";
inline constexpr const char* kConfigFormat = "sdflyer-config";
inline constexpr int kSchemaMajor = 1;
inline constexpr const char* kSchemaVersion = "1.0";

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string payload_checksum(const json& payload) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(payload.dump())));
  return std::string("fnv1a64:") + buf;
}

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  require(r.ec == std::errc() && r.ptr == s.data() + s.size(), ErrorKind::Config,
          "csv: cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  require(r.ec == std::errc() && r.ptr == s.data() + s.size(), ErrorKind::Config,
          "csv: cannot parse integer '" + std::string(s) + "'");
  return v;
}

// Write to a sibling temp file, then rename over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorKind::Config, "cannot write " + tmp);
    f << content;
    f.flush();
    require(static_cast<bool>(f), ErrorKind::Config, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Config, "cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, what + ": invalid JSON (" + e.what() + ")");
  }
}

inline void check_schema_version(const json& doc, const std::string& what) {
  require(doc.contains("schema_version") && doc["schema_version"].is_string(), ErrorKind::Config,
          what + ": missing schema_version");
  const std::string v = doc["schema_version"];
  int major = -1;
  std::from_chars(v.data(), v.data() + v.size(), major);
  require(major == kSchemaMajor, ErrorKind::Config,
          what + ": unsupported schema version " + v + " (this build reads " + std::to_string(kSchemaMajor) + ".x)");
}

// ---------------------------------------------------------------- weights

inline json dense_to_json(const DenseNet& net) {
  json j;
  j["layer_dims"] = net.dims();
  json acts = json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l)
    acts.push_back(to_string(l + 1 == net.num_layers() ? Activation::Identity : net.hidden_activation()));
  j["activations"] = acts;
  json layers = json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto w = net.weight(l);
    const auto b = net.bias(l);
    layers.push_back({{"weight", std::vector<double>(w.begin(), w.end())}, {"bias", std::vector<double>(b.begin(), b.end())}});
  }
  j["layers"] = layers;
  return j;
}

inline DenseNet dense_from_json(const json& j) {
  try {
    const auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    const auto acts = j.at("activations").get<std::vector<std::string>>();
    require(dims.size() >= 2 && acts.size() == dims.size() - 1, ErrorKind::Config,
            "weights: activation list does not match layer_dims");
    require(activation_from_string(acts.back()) == Activation::Identity, ErrorKind::Config,
            "weights: output layer must be identity");
    const Activation hidden = acts.size() > 1 ? activation_from_string(acts.front()) : Activation::ReLU;
    for (std::size_t l = 0; l + 1 < acts.size(); ++l)
      require(activation_from_string(acts[l]) == hidden, ErrorKind::Config, "weights: mixed hidden activations");
    DenseNet net(dims, hidden);
    const auto& layers = j.at("layers");
    require(layers.size() == net.num_layers(), ErrorKind::Config, "weights: layer count does not match layer_dims");
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto w = layers[l].at("weight").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      require(w.size() == net.weight(l).size() && b.size() == net.bias(l).size(), ErrorKind::Config,
              "weights: layer " + std::to_string(l) + " array sizes do not match layer_dims");
      std::copy(w.begin(), w.end(), net.weight(l).begin());
      std::copy(b.begin(), b.end(), net.bias(l).begin());
    }
    return net;
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("weights: malformed network (") + e.what() + ")");
  }
}

inline std::string wrap_document(const char* format, const std::string& kind, const json& payload) {
  json doc;
  doc["format"] = format;
  doc["schema_version"] = kSchemaVersion;
  doc["kind"] = kind;
  doc["payload"] = payload;
  doc["checksum"] = payload_checksum(payload);
  return doc.dump(1) + "\n";
}

// Parses, checks format / version / checksum, returns {kind, payload}.
inline std::pair<std::string, json> unwrap_weights(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  require(doc.is_object() && doc.value("format", "") == kWeightsFormat, ErrorKind::Config,
          origin + ": not an sdflyer weight file");
  check_schema_version(doc, origin);
  require(doc.contains("payload") && doc.contains("checksum"), ErrorKind::Config, origin + ": missing payload");
  require(doc["checksum"] == payload_checksum(doc["payload"]), ErrorKind::Integrity,
          origin + ": checksum mismatch (file corrupted or edited)");
  return {doc.value("kind", ""), doc["payload"]};
}

struct PolicyCheckpoint {
  Policy policy;
  DenseNet critic;  // empty dims when absent
};

inline std::string policy_to_string(const Policy& p, const DenseNet* critic = nullptr) {
  json payload = dense_to_json(p.actor);
  payload["log_std"] = p.head.log_std;
  if (critic) payload["critic"] = dense_to_json(*critic);
  return wrap_document(kWeightsFormat, "dense-policy", payload);
}

inline PolicyCheckpoint policy_from_string(const std::string& text, const std::string& origin = "weights") {
  auto [kind, payload] = unwrap_weights(text, origin);
  require(kind == "dense-policy", ErrorKind::Config, origin + ": expected a dense-policy file, found '" + kind + "'");
  PolicyCheckpoint ck;
  ck.policy.actor = dense_from_json(payload);
  ck.policy.head.log_std = payload.value("log_std", std::vector<double>(ck.policy.actor.out_dim(), 0.0));
  require(ck.policy.head.log_std.size() == ck.policy.actor.out_dim(), ErrorKind::Config,
          origin + ": log_std length does not match output layer");
  if (payload.contains("critic")) ck.critic = dense_from_json(payload["critic"]);
  return ck;
}

inline std::string sdnn_to_string(const SdnnNet& net) {
  json payload;
  payload["layer_dims"] = net.dims();
  payload["mode"] = to_string(net.mode());
  payload["thresholds"] = net.thresholds();
  payload["integer_thresholds"] = net.integer_thresholds();
  payload["spike_bits"] = kSpikeBits;
  payload["weight_bits"] = net.quant_config().weight_bits;
  payload["activation_bits"] = net.quant_config().activation_bits;
  payload["headroom"] = net.quant_config().headroom;
  json specs = json::array();
  for (const auto& s : net.act_specs()) specs.push_back({{"scale", s.scale}, {"magnitude_bits", s.magnitude_bits}});
  payload["activation_specs"] = specs;
  json layers = json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"weight", l.weight},
                      {"bias", l.bias},
                      {"weight_scale", l.weight_spec.scale},
                      {"weight_q", l.weight_q},
                      {"bias_q", l.bias_q},
                      {"requant_multiplier", l.requant.multiplier},
                      {"requant_shift", l.requant.shift}});
  }
  payload["layers"] = layers;
  return wrap_document(kWeightsFormat, "sdnn", payload);
}

inline SdnnNet sdnn_from_string(const std::string& text, const std::string& origin = "sdnn weights") {
  auto [kind, payload] = unwrap_weights(text, origin);
  require(kind == "sdnn", ErrorKind::Config, origin + ": expected an sdnn file, found '" + kind + "'");
  try {
    const auto dims = payload.at("layer_dims").get<std::vector<std::size_t>>();
    QuantConfig q;
    q.weight_bits = payload.at("weight_bits");
    q.activation_bits = payload.at("activation_bits");
    q.headroom = payload.at("headroom");
    std::vector<QuantSpec> specs;
    for (const auto& s : payload.at("activation_specs")) specs.emplace_back(s.at("scale").get<double>(), s.at("magnitude_bits").get<int>());
    std::vector<SdnnLayer> layers;
    require(dims.size() >= 2 && payload.at("layers").size() == dims.size() - 1, ErrorKind::Config,
            origin + ": layer count does not match layer_dims");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const auto& jl = payload["layers"][l];
      SdnnLayer ly;
      ly.in = dims[l];
      ly.out = dims[l + 1];
      ly.weight = jl.at("weight").get<std::vector<double>>();
      ly.bias = jl.at("bias").get<std::vector<double>>();
      ly.weight_spec = QuantSpec(jl.at("weight_scale").get<double>(), std::min(q.weight_bits, 24));
      ly.weight_q = jl.at("weight_q").get<std::vector<std::int32_t>>();
      ly.bias_q = jl.at("bias_q").get<std::vector<std::int32_t>>();
      ly.requant.multiplier = jl.at("requant_multiplier");
      ly.requant.shift = jl.at("requant_shift");
      layers.push_back(std::move(ly));
    }
    return SdnnNet(dims, std::move(layers), std::move(specs), payload.at("thresholds").get<std::vector<double>>(), q,
                   sdnn_mode_from_string(payload.at("mode")));
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, origin + ": malformed sdnn payload (" + e.what() + ")");
  }
}

// Which kind of weight file is this? ("dense-policy" or "sdnn")
inline std::string weights_kind(const std::string& text, const std::string& origin) {
  return unwrap_weights(text, origin).first;
}

// ---------------------------------------------------------------- config

struct RunConfig {
  PpoConfig ppo;  // includes flyer params, reward weights and the training seed
  QuantConfig quant;
  std::vector<double> thresholds{0.1};
  std::vector<Task> tasks{Task::Undock, Task::Random};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int calibration_seeds = 4;  // episodes per task used to collect calibration observations
  std::string out_dir = "";
};

namespace detail {

template <class T>
void read_field(const json& obj, const char* key, T& out, std::vector<std::string>& seen) {
  seen.emplace_back(key);
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config: field '") + key + "' has the wrong type");
  }
}

inline void reject_unknown(const json& obj, const std::vector<std::string>& known, const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const auto& s : known) ok = ok || s == k;
    require(ok, ErrorKind::Config, "config: unknown field '" + k + "' in " + where);
  }
}

}  // namespace detail

inline json config_to_json(const RunConfig& c) {
  const auto& p = c.ppo;
  json j;
  j["format"] = kConfigFormat;
  j["schema_version"] = kSchemaVersion;
  j["flyer"] = {{"mass", p.flyer.mass},
                {"inertia_diag", {p.flyer.inertia_diag.x, p.flyer.inertia_diag.y, p.flyer.inertia_diag.z}},
                {"force_limit", p.flyer.force_limit},
                {"torque_limit", p.flyer.torque_limit},
                {"dt", p.flyer.dt},
                {"episode_len", p.flyer.episode_len}};
  j["reward"] = {{"position", p.reward.position},
                 {"orientation", p.reward.orientation},
                 {"lin_vel", p.reward.lin_vel},
                 {"ang_vel", p.reward.ang_vel},
                 {"action", p.reward.action}};
  j["ppo"] = {{"gamma", p.gamma},
              {"lambda", p.lambda},
              {"clip_eps", p.clip_eps},
              {"epochs", p.epochs},
              {"minibatch", p.minibatch},
              {"value_coef", p.value_coef},
              {"entropy_coef", p.entropy_coef},
              {"n_envs", p.n_envs},
              {"n_steps", p.n_steps},
              {"iterations", p.iterations},
              {"lr", p.lr},
              {"anneal_lr", p.anneal_lr},
              {"max_grad_norm", p.max_grad_norm},
              {"init_log_std", p.init_log_std},
              {"reward_scale", p.reward_scale},
              {"undock_fraction", p.undock_fraction},
              {"perturb_initial_orientation", p.perturb_initial_orientation},
              {"seed", p.seed}};
  j["quant"] = {{"weight_bits", c.quant.weight_bits},
                {"activation_bits", c.quant.activation_bits},
                {"headroom", c.quant.headroom}};
  j["thresholds"] = c.thresholds;
  json tasks = json::array();
  for (Task t : c.tasks) tasks.push_back(to_string(t));
  j["tasks"] = tasks;
  j["seeds"] = c.seeds;
  j["calibration_seeds"] = c.calibration_seeds;
  j["out_dir"] = c.out_dir;
  return j;
}

// Missing fields keep their defaults; unknown fields are rejected.
inline RunConfig config_from_json(const json& j) {
  require(j.is_object(), ErrorKind::Config, "config: top level must be an object");
  if (j.contains("schema_version")) check_schema_version(j, "config");
  RunConfig c;
  auto& p = c.ppo;
  std::vector<std::string> top{"format", "schema_version"};
  if (j.contains("flyer")) {
    const auto& f = j["flyer"];
    std::vector<std::string> seen;
    detail::read_field(f, "mass", p.flyer.mass, seen);
    std::vector<double> inertia{p.flyer.inertia_diag.x, p.flyer.inertia_diag.y, p.flyer.inertia_diag.z};
    detail::read_field(f, "inertia_diag", inertia, seen);
    require(inertia.size() == 3, ErrorKind::Config, "config: flyer.inertia_diag needs 3 entries");
    p.flyer.inertia_diag = {inertia[0], inertia[1], inertia[2]};
    detail::read_field(f, "force_limit", p.flyer.force_limit, seen);
    detail::read_field(f, "torque_limit", p.flyer.torque_limit, seen);
    detail::read_field(f, "dt", p.flyer.dt, seen);
    detail::read_field(f, "episode_len", p.flyer.episode_len, seen);
    detail::reject_unknown(f, seen, "flyer");
  }
  top.emplace_back("flyer");
  if (j.contains("reward")) {
    const auto& r = j["reward"];
    std::vector<std::string> seen;
    detail::read_field(r, "position", p.reward.position, seen);
    detail::read_field(r, "orientation", p.reward.orientation, seen);
    detail::read_field(r, "lin_vel", p.reward.lin_vel, seen);
    detail::read_field(r, "ang_vel", p.reward.ang_vel, seen);
    detail::read_field(r, "action", p.reward.action, seen);
    detail::reject_unknown(r, seen, "reward");
  }
  top.emplace_back("reward");
  if (j.contains("ppo")) {
    const auto& o = j["ppo"];
    std::vector<std::string> seen;
    detail::read_field(o, "gamma", p.gamma, seen);
    detail::read_field(o, "lambda", p.lambda, seen);
    detail::read_field(o, "clip_eps", p.clip_eps, seen);
    detail::read_field(o, "epochs", p.epochs, seen);
    detail::read_field(o, "minibatch", p.minibatch, seen);
    detail::read_field(o, "value_coef", p.value_coef, seen);
    detail::read_field(o, "entropy_coef", p.entropy_coef, seen);
    detail::read_field(o, "n_envs", p.n_envs, seen);
    detail::read_field(o, "n_steps", p.n_steps, seen);
    detail::read_field(o, "iterations", p.iterations, seen);
    detail::read_field(o, "lr", p.lr, seen);
    detail::read_field(o, "anneal_lr", p.anneal_lr, seen);
    detail::read_field(o, "max_grad_norm", p.max_grad_norm, seen);
    detail::read_field(o, "init_log_std", p.init_log_std, seen);
    detail::read_field(o, "reward_scale", p.reward_scale, seen);
    detail::read_field(o, "undock_fraction", p.undock_fraction, seen);
    detail::read_field(o, "perturb_initial_orientation", p.perturb_initial_orientation, seen);
    detail::read_field(o, "seed", p.seed, seen);
    detail::reject_unknown(o, seen, "ppo");
  }
  top.emplace_back("ppo");
  if (j.contains("quant")) {
    const auto& q = j["quant"];
    std::vector<std::string> seen;
    detail::read_field(q, "weight_bits", c.quant.weight_bits, seen);
    detail::read_field(q, "activation_bits", c.quant.activation_bits, seen);
    detail::read_field(q, "headroom", c.quant.headroom, seen);
    detail::reject_unknown(q, seen, "quant");
  }
  top.emplace_back("quant");
  detail::read_field(j, "thresholds", c.thresholds, top);
  std::vector<std::string> tasks;
  for (Task t : c.tasks) tasks.push_back(to_string(t));
  detail::read_field(j, "tasks", tasks, top);
  c.tasks.clear();
  for (const auto& t : tasks) c.tasks.push_back(task_from_string(t));
  detail::read_field(j, "seeds", c.seeds, top);
  detail::read_field(j, "calibration_seeds", c.calibration_seeds, top);
  detail::read_field(j, "out_dir", c.out_dir, top);
  detail::reject_unknown(j, top, "config");

  p.validate();
  c.quant.validate();
  require(!c.thresholds.empty(), ErrorKind::Config, "config: thresholds must not be empty");
  for (double t : c.thresholds) require(t >= 0.0, ErrorKind::Config, "config: thresholds must be >= 0");
  require(c.calibration_seeds > 0, ErrorKind::Config, "config: calibration_seeds must be positive");
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::Config, "config file not found: " + path.string());
  return config_from_json(parse_json(read_file(path), path.string()));
}

// ---------------------------------------------------------------- CSV

inline std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::string s =
      "iteration,mean_return,mean_final_pos_err_m,mean_final_ang_err_deg,episodes,greedy_undock_pos_err_m,"
      "greedy_undock_ang_err_deg,policy_loss,value_loss,approx_kl,clip_fraction,mean_std\n";
  for (const auto& r : log) {
    s += std::to_string(r.iteration) + "," + format_double(r.mean_return) + "," + format_double(r.mean_final_pos_err) +
         "," + format_double(r.mean_final_ang_err) + "," + std::to_string(r.episodes) + "," +
         format_double(r.greedy_undock_pos_err) + "," + format_double(r.greedy_undock_ang_err) + "," +
         format_double(r.policy_loss) + "," + format_double(r.value_loss) + "," + format_double(r.approx_kl) + "," +
         format_double(r.clip_fraction) + "," + format_double(r.mean_std) + "\n";
  }
  return s;
}

inline constexpr const char* kTraceHeader =
    "controller,task,seed,latency_hops,step,pos_err_m,ang_err_deg,pos_err_x_m,pos_err_y_m,pos_err_z_m,"
    "ang_err_x_deg,ang_err_y_deg,ang_err_z_deg,force_x,force_y,force_z,torque_x,torque_y,torque_z,"
    "synops,dense_macs,messages,message_slots,overflows";

inline std::string trace_to_csv(const EpisodeTrace& tr) {
  std::string s = std::string(kTraceHeader) + "\n";
  const std::string prefix =
      tr.controller + "," + to_string(tr.task) + "," + std::to_string(tr.seed) + "," + std::to_string(tr.latency_hops) + ",";
  for (const auto& st : tr.steps) {
    s += prefix + std::to_string(st.step) + "," + format_double(st.pos_err) + "," + format_double(st.ang_err);
    for (double v : st.pos_err_axis) s += "," + format_double(v);
    for (double v : st.ang_err_axis) s += "," + format_double(v);
    for (double v : st.action) s += "," + format_double(v);
    s += "," + std::to_string(st.synops) + "," + std::to_string(st.dense_macs) + "," + std::to_string(st.messages) +
         "," + std::to_string(st.message_slots) + "," + std::to_string(st.overflows) + "\n";
  }
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline EpisodeTrace trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(std::getline(in, line) && line == kTraceHeader, ErrorKind::Config, "trace csv: unexpected header");
  EpisodeTrace tr;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    require(f.size() == 24, ErrorKind::Config, "trace csv: expected 24 columns");
    if (first) {
      tr.controller = std::string(f[0]);
      tr.task = task_from_string(std::string(f[1]));
      tr.seed = parse_u64(f[2]);
      tr.latency_hops = parse_u64(f[3]);
      first = false;
    }
    TraceStep s;
    s.step = static_cast<int>(parse_u64(f[4]));
    s.pos_err = parse_double(f[5]);
    s.ang_err = parse_double(f[6]);
    for (int a = 0; a < 3; ++a) s.pos_err_axis[a] = parse_double(f[7 + a]);
    for (int a = 0; a < 3; ++a) s.ang_err_axis[a] = parse_double(f[10 + a]);
    for (int a = 0; a < 6; ++a) s.action[a] = parse_double(f[13 + a]);
    s.synops = parse_u64(f[19]);
    s.dense_macs = parse_u64(f[20]);
    s.messages = parse_u64(f[21]);
    s.message_slots = parse_u64(f[22]);
    s.overflows = parse_u64(f[23]);
    tr.steps.push_back(s);
  }
  return tr;
}

inline std::string trace_filename(const EpisodeTrace& tr) {
  return tr.controller + "_" + to_string(tr.task) + "_" + std::to_string(tr.seed) + ".csv";
}

// ---------------------------------------------------------------- reports

inline json report_to_json(const EvalReport& r) {
  json doc;
  doc["format"] = kReportFormat;
  doc["schema_version"] = kSchemaVersion;
  json entries = json::array();
  for (const auto& e : r.entries) {
    json metrics = json::object();
    for (const auto& [k, v] : e.summary)
      metrics[k] = {{"mean", v.mean}, {"sd", v.sd}, {"per_seed", e.per_seed.at(k)}};
    entries.push_back({{"controller", e.controller},
                       {"task", to_string(e.task)},
                       {"seeds", e.seeds},
                       {"latency_hops", e.latency_hops},
                       {"overflows", e.overflows},
                       {"metrics", metrics}});
  }
  doc["entries"] = entries;
  return doc;
}

inline EvalReport report_from_json(const json& doc, const std::string& origin = "report") {
  require(doc.is_object() && doc.value("format", "") == kReportFormat, ErrorKind::Config,
          origin + ": not an sdflyer report");
  check_schema_version(doc, origin);
  EvalReport r;
  try {
    for (const auto& je : doc.at("entries")) {
      ReportEntry e;
      e.controller = je.at("controller");
      e.task = task_from_string(je.at("task"));
      e.seeds = je.at("seeds").get<std::vector<std::uint64_t>>();
      e.latency_hops = je.at("latency_hops");
      e.overflows = je.at("overflows");
      for (const auto& [k, v] : je.at("metrics").items()) {
        e.summary[k] = {v.at("mean").get<double>(), v.at("sd").get<double>()};
        e.per_seed[k] = v.at("per_seed").get<std::vector<double>>();
      }
      r.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    fail(ErrorKind::Config, origin + ": malformed report (" + ex.what() + ")");
  }
  return r;
}

inline std::string report_to_csv(const EvalReport& r) {
  std::string s = "controller,task,n_seeds,latency_hops,overflows";
  for (const auto& m : metric_names()) s += "," + m + "_mean," + m + "_sd";
  s += "\n";
  for (const auto& e : r.entries) {
    s += e.controller + "," + to_string(e.task) + "," + std::to_string(e.seeds.size()) + "," +
         std::to_string(e.latency_hops) + "," + std::to_string(e.overflows);
    for (const auto& m : metric_names()) {
      const auto it = e.summary.find(m);
      const MeanSd v = it == e.summary.end() ? MeanSd{} : it->second;
      s += "," + format_double(v.mean) + "," + format_double(v.sd);
    }
    s += "\n";
  }
  return s;
}

// Accuracy table: mean +/- SD per cell, one row per controller and task.
inline std::string report_table(const EvalReport& r) {
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %-8s %18s %18s %22s %22s\n", "Controller", "Task", "RMSE Position [m]",
                "Final Position [m]", "RMSE Orientation [deg]", "Final Orientation [deg]");
  s += buf;
  auto cell = [](const MeanSd& v, int prec) {
    char b[64];
    std::snprintf(b, sizeof b, "%.*f ± %.*f", prec, v.mean, prec, v.sd);
    return std::string(b);
  };
  for (const auto& e : r.entries) {
    std::snprintf(buf, sizeof buf, "%-12s %-8s %18s %18s %22s %22s\n", e.controller.c_str(), to_string(e.task).c_str(),
                  cell(e.summary.at("rmse_position_m"), 3).c_str(), cell(e.summary.at("final_position_m"), 3).c_str(),
                  cell(e.summary.at("rmse_orientation_deg"), 3).c_str(),
                  cell(e.summary.at("final_orientation_deg"), 3).c_str());
    s += buf;
  }
  return s;
}

inline std::string comparison_to_csv(const Comparison& c) {
  std::string s = "task,metric," + c.controller_a + "_mean," + c.controller_a + "_sd," + c.controller_b + "_mean," +
                  c.controller_b + "_sd,delta,ratio\n";
  for (const auto& r : c.rows)
    s += to_string(r.task) + "," + r.metric + "," + format_double(r.a.mean) + "," + format_double(r.a.sd) + "," +
         format_double(r.b.mean) + "," + format_double(r.b.sd) + "," + format_double(r.delta) + "," +
         format_double(r.ratio) + "\n";
  return s;
}

inline std::string comparison_table(const Comparison& c) {
  std::string s;
  char buf[320];
  std::snprintf(buf, sizeof buf, "%-8s %-28s %24s %24s %12s %10s\n", "Task", "Metric", c.controller_a.c_str(),
                c.controller_b.c_str(), "Delta", "Ratio");
  s += buf;
  for (const auto& r : c.rows) {
    char a[64], b[64];
    std::snprintf(a, sizeof a, "%.4g ± %.4g", r.a.mean, r.a.sd);
    std::snprintf(b, sizeof b, "%.4g ± %.4g", r.b.mean, r.b.sd);
    std::snprintf(buf, sizeof buf, "%-8s %-28s %24s %24s %12.4g %10.4g\n", to_string(r.task).c_str(), r.metric.c_str(),
                  a, b, r.delta, r.ratio);
    s += buf;
  }
  return s;
}

}  // namespace sdflyer
