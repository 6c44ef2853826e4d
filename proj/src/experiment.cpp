#include "eesng/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <tuple>

#include "eesng/error.hpp"
#include "eesng/format.hpp"

namespace eesng {

namespace fs = std::filesystem;

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      const auto b = cur.find_first_not_of(" \t");
      const auto e = cur.find_last_not_of(" \t");
      if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

std::uint64_t get_u64(const KeyValueConfig& kv, const std::string& section,
                      const std::string& key, std::uint64_t fallback) {
  const long long v = kv.get_int(section, key, static_cast<long long>(fallback));
  if (v < 0) fail(ErrorCode::kConfig, kv.origin() + ": field '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

int get_positive(const KeyValueConfig& kv, const std::string& section,
                 const std::string& key, int fallback) {
  const long long v = kv.get_int(section, key, fallback);
  if (v < 1 || v > 1'000'000'000) {
    fail(ErrorCode::kConfig, kv.origin() + ": field '" +
                                 (section.empty() ? key : section + "." + key) +
                                 "' must be a positive integer");
  }
  return static_cast<int>(v);
}

// Prefixes whole-section validation errors with the origin and section.
template <typename Fn>
void in_section(const KeyValueConfig& kv, const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, kv.origin() + ": [" + section + "] " + e.what());
  }
}

// Rewrites parse errors of enum-valued fields so they name the field.
template <typename Fn>
auto named(const KeyValueConfig& kv, const std::string& section, const std::string& key,
           Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig,
         kv.origin() + ": field '" + section + "." + key + "': " + e.what());
  }
}

SearchSpace parse_space(const KeyValueConfig& kv) {
  const std::string s = "space";
  kv.require_known(s, {"preset", "max_depth", "depth", "heads", "intermediate"});
  if (kv.has(s, "preset")) {
    if (kv.has(s, "depth") || kv.has(s, "heads") || kv.has(s, "intermediate")) {
      fail(ErrorCode::kConfig, kv.origin() + ": [space] takes either preset or option lists");
    }
    return named(kv, s, "preset", [&] { return SearchSpace::preset(kv.get_string(s, "preset")); });
  }
  const auto depth = kv.get_int_list(s, "depth");
  const auto heads = kv.get_int_list(s, "heads");
  const auto inter = kv.get_int_list(s, "intermediate");
  const int max_depth = static_cast<int>(
      kv.get_int(s, "max_depth", depth.empty() ? 0 : *std::max_element(depth.begin(), depth.end())));
  return named(kv, s, "depth", [&] { return SearchSpace(max_depth, depth, heads, inter); });
}

BackendSettings parse_backend(const KeyValueConfig& kv, std::uint64_t seed,
                              std::int64_t train_steps) {
  BackendSettings b;
  b.net.space = parse_space(kv);
  const std::string s = "backend";
  kv.require_known(s, {"kind", "vocab_size", "embed_dim", "seq_len", "num_classes",
                       "landscape", "landscape_seed", "noise", "target", "basin_floor",
                       "basin_slope", "task", "batch_size", "learning_rate", "beta1",
                       "beta2", "epsilon", "total_steps", "validation_batches",
                       "validation_size", "validation_seed", "threads", "init_seed"});
  const std::string kind = kv.get_string(s, "kind");
  if (kind == "tabular") {
    b.kind = BackendKind::kTabular;
  } else if (kind == "neural") {
    b.kind = BackendKind::kNeural;
  } else {
    fail(ErrorCode::kConfig, kv.origin() + ": field 'backend.kind' expects tabular|neural, got '" +
                                 kind + "'");
  }
  b.net.vocab_size = get_positive(kv, s, "vocab_size", 8);
  b.net.embed_dim = get_positive(kv, s, "embed_dim", 32);
  b.net.seq_len = get_positive(kv, s, "seq_len", 16);
  b.net.num_classes = get_positive(kv, s, "num_classes", 2);
  in_section(kv, s, [&] { validate(b.net); });

  b.landscape.kind = named(kv, s, "landscape", [&] {
    return parse_landscape(kv.get_string(s, "landscape", "planted_optimum"));
  });
  b.landscape.seed = get_u64(kv, s, "landscape_seed", seed);
  b.landscape.noise_sigma = kv.get_double(s, "noise", 0.0);
  if (!(b.landscape.noise_sigma >= 0.0)) {
    fail(ErrorCode::kConfig, kv.origin() + ": field 'backend.noise' must be >= 0");
  }
  if (kv.has(s, "target")) {
    b.landscape.target = named(kv, s, "target", [&] {
      auto a = parse_architecture(kv.get_string(s, "target"));
      validate(a, b.net.space);
      return canonicalize(a, b.net.space);
    });
  }
  b.landscape.basin_floor = kv.get_double(s, "basin_floor", 0.3);
  b.landscape.basin_slope = kv.get_double(s, "basin_slope", 0.1);

  b.task.kind = named(kv, s, "task", [&] { return parse_task(kv.get_string(s, "task", "t1")); });
  b.task.vocab_size = b.net.vocab_size;
  b.task.seq_len = b.net.seq_len;
  b.batch_size = get_positive(kv, s, "batch_size", 32);
  b.adam.learning_rate = kv.get_double(s, "learning_rate", 3e-3);
  b.adam.beta1 = kv.get_double(s, "beta1", 0.9);
  b.adam.beta2 = kv.get_double(s, "beta2", 0.999);
  b.adam.epsilon = kv.get_double(s, "epsilon", 1e-8);
  b.adam.total_steps = kv.get_int(s, "total_steps", train_steps);
  b.validation_batches = get_positive(kv, s, "validation_batches", 4);
  b.validation_size = get_positive(kv, s, "validation_size", 100);
  b.validation_seed = get_u64(kv, s, "validation_seed", seed + 1);
  b.threads = get_positive(kv, s, "threads", 1);
  b.init_seed = get_u64(kv, s, "init_seed", seed);
  if (b.kind == BackendKind::kNeural) {
    if (b.net.num_classes != 2) {
      fail(ErrorCode::kConfig, kv.origin() + ": field 'backend.num_classes' must be 2 for the "
                                             "synthetic tasks");
    }
    in_section(kv, s, [&] { validate(b.task); });
  }
  return b;
}

TrainConfig parse_train(const KeyValueConfig& kv) {
  const std::string s = "train";
  kv.require_known(s, {"epochs", "steps_per_epoch", "lambda", "update_interval", "theta_lr",
                       "probability_floor", "utility", "gate", "importance_weighting",
                       "progressive", "expansion_spacing"});
  TrainConfig t;
  t.epochs = static_cast<int>(kv.get_int(s, "epochs"));
  t.steps_per_epoch = static_cast<int>(kv.get_int(s, "steps_per_epoch"));
  t.lambda = static_cast<int>(kv.get_int(s, "lambda", t.lambda));
  t.update_interval = static_cast<int>(kv.get_int(s, "update_interval", 1));
  if (kv.has(s, "theta_lr")) t.theta_lr = kv.get_double(s, "theta_lr");
  t.probability_floor = kv.get_double(s, "probability_floor", kDefaultProbabilityFloor);
  t.utility = named(kv, s, "utility",
                    [&] { return parse_utility_mode(kv.get_string(s, "utility", "ranking")); });
  t.gate = named(kv, s, "gate", [&] { return parse_gate_mode(kv.get_string(s, "gate", "ee")); });
  t.importance_weighting = kv.get_bool(s, "importance_weighting", false);
  t.progressive = kv.get_bool(s, "progressive", true);
  if (kv.has(s, "expansion_spacing")) t.expansion_spacing = kv.get_double(s, "expansion_spacing");
  in_section(kv, s, [&] { validate(t); });
  return t;
}

SearchJob parse_search_job(const KeyValueConfig& kv, const std::string& section) {
  kv.require_known(section, {"method", "omega", "omega_fraction", "metric", "penalty", "alpha",
                             "steps", "samples_per_step", "lr", "probability_floor",
                             "utility", "population", "generations", "mutation_rate",
                             "budget", "warm_start", "seed"});
  SearchJob j;
  j.name = section.substr(std::string("search.").size());
  if (j.name.empty() || j.name.find_first_of("/\\ ") != std::string::npos) {
    fail(ErrorCode::kConfig, kv.origin() + ": bad search job name '[" + section + "]'");
  }
  j.method = kv.get_string(section, "method", "distribution");
  if (j.method != "distribution" && j.method != "random" && j.method != "evolutionary") {
    fail(ErrorCode::kConfig, kv.origin() + ": field '" + section +
                                 ".method' expects distribution|random|evolutionary");
  }
  const bool abs = kv.has(section, "omega"), frac = kv.has(section, "omega_fraction");
  if (abs == frac) {
    fail(ErrorCode::kConfig, kv.origin() + ": [" + section +
                                 "] needs exactly one of 'omega' and 'omega_fraction'");
  }
  if (abs) j.omega = kv.get_double(section, "omega");
  if (frac) j.omega_fraction = kv.get_double(section, "omega_fraction");
  j.metric = named(kv, section, "metric",
                   [&] { return parse_metric(kv.get_string(section, "metric", "params")); });
  j.penalty = named(kv, section, "penalty", [&] {
    return parse_penalty_form(kv.get_string(section, "penalty", "as_written"));
  });
  j.alpha = kv.get_double(section, "alpha", 2.0);
  j.distribution.steps = get_positive(kv, section, "steps", 200);
  j.distribution.samples_per_step = get_positive(kv, section, "samples_per_step", 8);
  if (kv.has(section, "lr")) j.distribution.learning_rate = kv.get_double(section, "lr");
  j.distribution.probability_floor =
      kv.get_double(section, "probability_floor", kDefaultProbabilityFloor);
  j.distribution.utility = named(kv, section, "utility", [&] {
    return parse_utility_mode(kv.get_string(section, "utility", "ranking"));
  });
  j.evolution.population = get_positive(kv, section, "population", 16);
  j.evolution.generations = static_cast<int>(kv.get_int(section, "generations", 100));
  j.evolution.mutation_rate = kv.get_double(section, "mutation_rate", 0.1);
  j.budget = kv.get_int(section, "budget", 0);
  j.warm_start = kv.get_bool(section, "warm_start", false);
  j.seed = get_u64(kv, section, "seed", 1);
  return j;
}

BenchmarkConfig parse_benchmark(const KeyValueConfig& kv) {
  const std::string s = "benchmark";
  kv.require_known(s, {"seeds", "seed_base", "methods", "gate_modes", "omega_fraction",
                       "metric", "penalty", "search_steps", "samples_per_step", "population",
                       "mutation_rate", "search_landscape", "train_landscape"});
  BenchmarkConfig b;
  b.seeds = get_positive(kv, s, "seeds", 20);
  b.seed_base = get_u64(kv, s, "seed_base", 1000);
  if (kv.has(s, "methods")) {
    b.methods = split_list(kv.get_string(s, "methods"));
    for (const auto& m : b.methods) {
      if (m != "distribution" && m != "random" && m != "evolutionary") {
        fail(ErrorCode::kConfig, kv.origin() + ": field 'benchmark.methods' has unknown method '" +
                                     m + "'");
      }
    }
  }
  if (kv.has(s, "gate_modes")) {
    b.gate_modes.clear();
    for (const auto& m : split_list(kv.get_string(s, "gate_modes"))) {
      b.gate_modes.push_back(named(kv, s, "gate_modes", [&] { return parse_gate_mode(m); }));
    }
  }
  b.omega_fraction = kv.get_double(s, "omega_fraction", 0.5);
  if (!(b.omega_fraction > 0.0 && b.omega_fraction < 1.0)) {
    fail(ErrorCode::kConfig, kv.origin() + ": field 'benchmark.omega_fraction' must lie in (0, 1)");
  }
  b.metric = named(kv, s, "metric", [&] { return parse_metric(kv.get_string(s, "metric", "params")); });
  b.penalty = named(kv, s, "penalty", [&] {
    return parse_penalty_form(kv.get_string(s, "penalty", "as_written"));
  });
  b.search_steps = get_positive(kv, s, "search_steps", 200);
  b.samples_per_step = get_positive(kv, s, "samples_per_step", 8);
  b.population = get_positive(kv, s, "population", 16);
  b.mutation_rate = kv.get_double(s, "mutation_rate", 0.1);
  b.search_landscape = named(kv, s, "search_landscape", [&] {
    return parse_landscape(kv.get_string(s, "search_landscape", "planted_optimum"));
  });
  b.train_landscape = named(kv, s, "train_landscape", [&] {
    return parse_landscape(kv.get_string(s, "train_landscape", "deceptive"));
  });
  return b;
}

}  // namespace

ArchitectureSpec parse_user_architecture(const std::string& text, const SearchSpace& space) {
  ArchitectureSpec a = parse_architecture(text);
  const auto n = static_cast<std::size_t>(space.max_depth());
  if (a.heads.size() < n && a.heads.size() == static_cast<std::size_t>(a.depth)) {
    a.heads.resize(n, space.largest(Dimension::kHeads));
  }
  if (a.intermediates.size() < n && a.intermediates.size() == static_cast<std::size_t>(a.depth)) {
    a.intermediates.resize(n, space.largest(Dimension::kIntermediate));
  }
  validate(a, space);
  return canonicalize(a, space);
}

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Timestamps live only here, never in the deterministic outputs.
void log_line(const std::string& dir, const std::string& text) {
  std::ofstream out(fs::path(dir) / "run.log", std::ios::app);
  out << timestamp() << " " << text << "\n";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    fail(ErrorCode::kIo, "cannot create output directory '" + dir + "'");
  }
}

std::string join_path(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

Checkpoint snapshot(const BackendSettings& settings, const Backend& backend,
                    const TrainState& state) {
  Checkpoint c;
  c.settings = backend_settings_text(settings);
  c.net = settings.net;
  c.state = state;
  if (const auto* nb = dynamic_cast<const NeuralBackend*>(&backend)) {
    c.weights = nb->weights();
    c.adam = nb->adam_state();
  }
  return c;
}

struct LoadedModel {
  Checkpoint checkpoint;
  BackendSettings settings;
  std::unique_ptr<Backend> backend;
};

LoadedModel load_model(const std::string& path) {
  LoadedModel m;
  m.checkpoint = load_checkpoint(path);
  m.settings = parse_backend_settings(m.checkpoint.settings);
  m.backend = restore_backend(m.checkpoint);
  return m;
}

}  // namespace

ExperimentConfig parse_experiment(const KeyValueConfig& kv) {
  for (const auto& sec : kv.sections()) {
    if (sec.empty() || sec == "space" || sec == "backend" || sec == "train" ||
        sec == "output" || sec == "benchmark" || sec.rfind("search.", 0) == 0) {
      continue;
    }
    fail(ErrorCode::kConfig, kv.origin() + ": unknown section [" + sec + "]");
  }
  kv.require_known("", {"seed"});
  ExperimentConfig c;
  if (!kv.has("", "seed")) kv.get_int("", "seed");  // raises the missing-field error
  c.seed = get_u64(kv, "", "seed", 0);
  c.train = parse_train(kv);
  c.backend = parse_backend(
      kv, c.seed, static_cast<std::int64_t>(c.train.epochs) * c.train.steps_per_epoch);
  for (const auto& sec : kv.sections()) {
    if (sec.rfind("search.", 0) == 0) c.searches.push_back(parse_search_job(kv, sec));
  }
  kv.require_known("output", {"dir"});
  c.output_dir = kv.get_string("output", "dir");
  c.benchmark = parse_benchmark(kv);
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  return parse_experiment(KeyValueConfig::load(path));
}

std::string backend_settings_text(const BackendSettings& b) {
  const SearchSpace& sp = b.net.space;
  std::string t = "[space]\n";
  t += "max_depth = " + std::to_string(sp.max_depth()) + "\n";
  t += "depth = " + join_ints(sp.options(Dimension::kDepth)) + "\n";
  t += "heads = " + join_ints(sp.options(Dimension::kHeads)) + "\n";
  t += "intermediate = " + join_ints(sp.options(Dimension::kIntermediate)) + "\n";
  t += "\n[backend]\n";
  const auto kv = [&t](const std::string& k, const std::string& v) { t += k + " = " + v + "\n"; };
  kv("kind", b.kind == BackendKind::kTabular ? "tabular" : "neural");
  kv("vocab_size", std::to_string(b.net.vocab_size));
  kv("embed_dim", std::to_string(b.net.embed_dim));
  kv("seq_len", std::to_string(b.net.seq_len));
  kv("num_classes", std::to_string(b.net.num_classes));
  if (b.kind == BackendKind::kTabular) {
    kv("landscape", landscape_name(b.landscape.kind));
    kv("landscape_seed", std::to_string(b.landscape.seed));
    kv("noise", format_double(b.landscape.noise_sigma));
    if (b.landscape.target) kv("target", to_string(*b.landscape.target));
    kv("basin_floor", format_double(b.landscape.basin_floor));
    kv("basin_slope", format_double(b.landscape.basin_slope));
  } else {
    kv("task", task_name(b.task.kind));
    kv("batch_size", std::to_string(b.batch_size));
    kv("learning_rate", format_double(b.adam.learning_rate));
    kv("beta1", format_double(b.adam.beta1));
    kv("beta2", format_double(b.adam.beta2));
    kv("epsilon", format_double(b.adam.epsilon));
    kv("total_steps", std::to_string(b.adam.total_steps));
    kv("validation_batches", std::to_string(b.validation_batches));
    kv("validation_size", std::to_string(b.validation_size));
    kv("validation_seed", std::to_string(b.validation_seed));
    kv("threads", std::to_string(b.threads));
    kv("init_seed", std::to_string(b.init_seed));
  }
  return t;
}

BackendSettings parse_backend_settings(const std::string& text) {
  const auto kv = KeyValueConfig::parse(text, "<checkpoint settings>");
  return parse_backend(kv, 0, 0);
}

std::unique_ptr<Backend> make_backend(const BackendSettings& b) {
  if (b.kind == BackendKind::kTabular) {
    return std::make_unique<TabularBackend>(TabularLandscape(b.net.space, b.landscape), b.net);
  }
  NeuralTrainOptions opts;
  opts.task = b.task;
  opts.batch_size = b.batch_size;
  opts.adam = b.adam;
  opts.threads = b.threads;
  Rng init(b.init_seed);
  return std::make_unique<NeuralBackend>(
      b.net, opts, init_weights(b.net, init),
      make_validation_set(b.task, b.validation_batches, b.validation_size, b.validation_seed));
}

std::unique_ptr<Backend> restore_backend(const Checkpoint& c) {
  const BackendSettings b = parse_backend_settings(c.settings);
  auto backend = make_backend(b);
  if (auto* nb = dynamic_cast<NeuralBackend*>(backend.get())) {
    if (!c.weights || !c.adam) {
      fail(ErrorCode::kCorruptCheckpoint, "corrupt checkpoint: neural backend without weights");
    }
    nb->mutable_weights() = *c.weights;
    nb->mutable_adam_state() = *c.adam;
  }
  return backend;
}

SupernetConfig resolve_network(const std::string& source) {
  if (source == "desk") return SupernetConfig::desk();
  if (source == "bert") return SupernetConfig::bert();
  if (!fs::exists(source)) {
    fail(ErrorCode::kConfig, "'" + source + "' is neither a preset (desk, bert) nor a file");
  }
  const std::string bytes = read_file(source);
  if (bytes.rfind("EESN", 0) == 0) return decode_checkpoint(bytes).net;
  return parse_experiment(KeyValueConfig::parse(bytes, source)).backend.net;
}

OutputLock::OutputLock(const std::string& dir) : path_(join_path(dir, ".lock")) {
  ensure_dir(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    fail(ErrorCode::kIo, "output directory '" + dir + "' is locked by another run (remove " +
                             path_ + " if stale)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

TrainOutputs cmd_train(const std::string& config_path, bool resume) {
  const ExperimentConfig cfg = load_experiment(config_path);
  OutputLock lock(cfg.output_dir);
  TrainOutputs out;
  out.checkpoint_path = join_path(cfg.output_dir, "checkpoint.eesn");
  out.history_path = join_path(cfg.output_dir, "history.csv");
  out.progress_path = join_path(cfg.output_dir, "progress.csv");

  std::unique_ptr<Backend> backend;
  TrainState state;
  if (resume && fs::exists(out.checkpoint_path)) {
    Checkpoint ck = load_checkpoint(out.checkpoint_path);
    if (ck.settings != backend_settings_text(cfg.backend)) {
      fail(ErrorCode::kConfig, "checkpoint " + out.checkpoint_path +
                                   " was written with different [space]/[backend] settings");
    }
    backend = restore_backend(ck);
    state = std::move(ck.state);
    log_line(cfg.output_dir, "train resume epoch " + std::to_string(state.epoch));
  } else {
    backend = make_backend(cfg.backend);
    state = initial_state(cfg.backend.net.space, cfg.train, cfg.seed);
    log_line(cfg.output_dir, "train start " + config_path);
  }
  train(*backend, cfg.train, state, [&](const TrainState& st) {
    save_checkpoint(out.checkpoint_path, snapshot(cfg.backend, *backend, st));
    log_line(cfg.output_dir, "epoch " + std::to_string(st.epoch) + " done");
  });
  if (!fs::exists(out.checkpoint_path)) {
    save_checkpoint(out.checkpoint_path, snapshot(cfg.backend, *backend, state));
  }
  write_file_atomic(out.history_path, history_csv(state.history));
  write_file_atomic(out.progress_path, progress_csv(progress_report(state.history)));
  out.best_loss = state.history.best_loss();
  log_line(cfg.output_dir, "train done");
  return out;
}

std::string cmd_search(const SearchRequest& req) {
  const LoadedModel model = load_model(req.checkpoint_path);
  const SupernetConfig& net = model.checkpoint.net;
  const SearchJob& job = req.job;

  RewardConfig rc;
  rc.metric = job.metric;
  rc.alpha = job.alpha;
  rc.form = job.penalty;
  rc.t_max = static_cast<double>(supernet_cost(net, job.metric));
  rc.omega = job.omega ? *job.omega : *job.omega_fraction * rc.t_max;
  const auto min_cost = minimum_cost(net, job.metric);
  if (!(rc.omega > static_cast<double>(min_cost))) {
    fail(ErrorCode::kInfeasible,
         "omega " + format_double(rc.omega) + " " +
             metric_name(job.metric) + " is not above the minimum architecture cost " +
             std::to_string(min_cost) + " (" + to_string(min_architecture(net.space)) + ")");
  }
  validate(rc);

  const Evaluator eval = backend_evaluator(*model.backend, job.metric);
  Rng rng(job.seed);
  SearchResult result;
  if (job.method == "distribution") {
    std::optional<CategoricalParams> init;
    if (job.warm_start) init = model.checkpoint.state.theta;
    result = distribution_search(eval, net.space, rc, job.distribution, rng, init);
  } else if (job.method == "random") {
    const std::int64_t budget =
        job.budget > 0 ? job.budget
                       : static_cast<std::int64_t>(job.distribution.steps) *
                             job.distribution.samples_per_step;
    result = random_search(eval, net.space, rc, budget, rng);
  } else if (job.method == "evolutionary") {
    result = evolutionary_search(eval, net.space, rc, job.evolution, rng);
  } else {
    fail(ErrorCode::kConfig, "unknown search method '" + job.method + "'");
  }

  const std::string dir =
      req.output_dir.empty() ? fs::path(req.checkpoint_path).parent_path().string()
                             : req.output_dir;
  ensure_dir(dir.empty() ? "." : dir);
  const std::string trace_name = "search_" + job.name + "_trace.csv";
  const std::string json = search_json(result, rc, trace_name);
  write_file_atomic(join_path(dir, "search_" + job.name + ".json"), json);
  write_file_atomic(join_path(dir, trace_name), search_trace_csv(result));
  if (!result.best || !result.best->feasible) {
    fail(ErrorCode::kInfeasible, "no feasible architecture found under omega " +
                                     format_double(rc.omega) + " " + metric_name(job.metric) +
                                     " in " + std::to_string(result.evaluations) +
                                     " evaluations");
  }
  return json;
}

std::string cmd_search_all(const std::string& checkpoint_path, const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment(config_path);
  if (cfg.searches.empty()) {
    fail(ErrorCode::kConfig, config_path + ": no [search.NAME] sections");
  }
  std::string out = "[\n";
  for (std::size_t i = 0; i < cfg.searches.size(); ++i) {
    SearchRequest req{checkpoint_path, cfg.searches[i], {}};
    std::string j = cmd_search(req);
    while (!j.empty() && j.back() == '\n') j.pop_back();
    out += j + (i + 1 < cfg.searches.size() ? ",\n" : "\n");
  }
  return out + "]\n";
}

Quartiles quartiles(std::vector<double> v) {
  if (v.empty()) fail(ErrorCode::kInvalidArgument, "quartiles of an empty sample");
  std::sort(v.begin(), v.end());
  const auto at = [&v](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

BenchmarkOutputs cmd_benchmark(const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment(config_path);
  const BenchmarkConfig& bc = cfg.benchmark;
  OutputLock lock(cfg.output_dir);
  log_line(cfg.output_dir, "benchmark start " + config_path);
  const SupernetConfig& net = cfg.backend.net;

  std::string search_csv = "method,seed,step,evaluations,mean_reward,best_reward,optimum_reward";
  for (int i = 1; i <= 10; ++i) search_csv += ",top" + std::to_string(i);
  search_csv += "\n";
  std::string outcomes = "section,method,seed,statistic,value\n";
  // (section, method, statistic) -> per-seed values, in insertion order
  std::vector<std::tuple<std::string, std::string, std::string, std::vector<double>>> stats;
  const auto record = [&](const std::string& section, const std::string& method,
                          std::uint64_t seed, const std::string& stat, double value) {
    outcomes += section + "," + method + "," + std::to_string(seed) + "," + stat + "," +
                format_double(value) + "\n";
    for (auto& [s, m, st, vals] : stats) {
      if (s == section && m == method && st == stat) {
        vals.push_back(value);
        return;
      }
    }
    stats.emplace_back(section, method, stat, std::vector<double>{value});
  };

  RewardConfig rc;
  rc.metric = bc.metric;
  rc.form = bc.penalty;
  rc.t_max = static_cast<double>(supernet_cost(net, bc.metric));
  rc.omega = bc.omega_fraction * rc.t_max;
  const std::int64_t budget = static_cast<std::int64_t>(bc.search_steps) * bc.samples_per_step;

  for (int i = 0; i < bc.seeds && !bc.methods.empty(); ++i) {
    const std::uint64_t seed = bc.seed_base + static_cast<std::uint64_t>(i);
    LandscapeConfig lc = cfg.backend.landscape;
    lc.kind = bc.search_landscape;
    lc.seed = seed;
    lc.target.reset();
    const TabularBackend be(TabularLandscape(net.space, lc), net);
    const Evaluator eval = backend_evaluator(be, bc.metric);
    const ConstrainedOptimum opt = enumerate_optimum(eval, net.space, rc);
    Rng streams(seed);
    for (const auto& method : bc.methods) {
      Rng rng = streams.split();
      SearchResult r;
      if (method == "distribution") {
        DistributionSearchConfig dc;
        dc.steps = bc.search_steps;
        dc.samples_per_step = bc.samples_per_step;
        r = distribution_search(eval, net.space, rc, dc, rng);
      } else if (method == "random") {
        r = random_search(eval, net.space, rc, budget, rng);
      } else {
        EvolutionConfig ec;
        ec.population = bc.population;
        ec.generations = static_cast<int>(std::max<std::int64_t>(0, budget / bc.population - 1));
        ec.mutation_rate = bc.mutation_rate;
        r = evolutionary_search(eval, net.space, rc, ec, rng);
      }
      for (const auto& t : r.trace) {
        search_csv += method + "," + std::to_string(seed) + "," + std::to_string(t.step) + "," +
                      std::to_string(t.evaluations) + "," + format_double(t.mean_reward) + "," +
                      format_double(t.best_reward) + "," + format_double(opt.reward);
        for (std::size_t k = 0; k < 10; ++k) {
          search_csv += ",";
          if (k < t.top10.size()) search_csv += format_double(t.top10[k]);
        }
        search_csv += "\n";
      }
      const bool found = r.best && r.best->feasible && r.best->reward == opt.reward;
      record("search", method, seed, "found_optimum", found ? 1.0 : 0.0);
      // Censored at budget + 1 when the optimum was never sampled.
      record("search", method, seed, "evaluations_to_optimum",
             found ? static_cast<double>(r.evaluations_to_best)
                   : static_cast<double>(r.evaluations + 1));
      record("search", method, seed, "best_reward", r.best ? r.best->reward : 0.0);
    }
  }

  std::string train_csv =
      "mode,seed,epoch,mean_loss,min_loss,best_so_far,entropy,K,explore_fraction\n";
  for (const GateMode mode : bc.gate_modes) {
    for (int i = 0; i < bc.seeds; ++i) {
      const std::uint64_t seed = bc.seed_base + static_cast<std::uint64_t>(i);
      LandscapeConfig lc = cfg.backend.landscape;
      lc.kind = bc.train_landscape;
      lc.seed = seed;
      lc.target.reset();
      TabularBackend be(TabularLandscape(net.space, lc), net);
      TrainConfig tc = cfg.train;
      tc.gate = mode;
      TrainState st = initial_state(net.space, tc, seed);
      train(be, tc, st);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& row : progress_report(st.history)) {
        best = std::min(best, row.min_loss);
        train_csv += std::string(gate_mode_name(mode)) + "," + std::to_string(seed) + "," +
                     std::to_string(row.epoch) + "," + format_double(row.mean_loss) + "," +
                     format_double(row.min_loss) + "," + format_double(best) + "," +
                     format_double(row.entropy) + "," + format_double(row.exploit_probability) +
                     "," + format_double(row.explore_fraction) + "\n";
      }
      // Noise-free loss of the best architecture visited; the minimum noisy
      // loss would mostly measure the noise.
      double visited = std::numeric_limits<double>::infinity();
      for (const auto& step : st.history.steps) {
        for (const auto& a : step.archs) visited = std::min(visited, be.landscape().loss(a));
      }
      record("train", gate_mode_name(mode), seed, "final_best_loss", visited);
    }
  }

  std::string summary = "section,method,statistic,n,mean,median,q1,q3,min,max\n";
  for (const auto& [section, method, stat, vals] : stats) {
    double mean = 0.0;
    for (double v : vals) mean += v / static_cast<double>(vals.size());
    const auto q = quartiles(vals);
    summary += section + "," + method + "," + stat + "," + std::to_string(vals.size()) + "," +
               format_double(mean) + "," + format_double(q.median) + "," + format_double(q.q1) +
               "," + format_double(q.q3) + "," +
               format_double(*std::min_element(vals.begin(), vals.end())) + "," +
               format_double(*std::max_element(vals.begin(), vals.end())) + "\n";
  }

  BenchmarkOutputs out{join_path(cfg.output_dir, "benchmark_search.csv"),
                       join_path(cfg.output_dir, "benchmark_train.csv"),
                       join_path(cfg.output_dir, "benchmark_summary.csv")};
  write_file_atomic(out.search_csv, search_csv);
  write_file_atomic(out.train_csv, train_csv);
  write_file_atomic(out.summary_csv, summary);
  write_file_atomic(join_path(cfg.output_dir, "benchmark_outcomes.csv"), outcomes);
  log_line(cfg.output_dir, "benchmark done");
  return out;
}

std::string cmd_enumerate(const std::string& source) {
  std::optional<LoadedModel> model;
  if (fs::exists(source) && read_file(source).rfind("EESN", 0) == 0) model = load_model(source);
  const SupernetConfig net = model ? model->checkpoint.net : resolve_network(source);
  std::string out = std::string("arch,depth,params,flops") + (model ? ",accuracy" : "") + "\n";
  for_each_architecture(net.space.full(), 10'000'000, [&](const ArchitectureSpec& a) {
    out += to_string(a) + "," + std::to_string(a.depth) + "," +
           std::to_string(param_count(a, net)) + "," +
           std::to_string(flops(a, net, net.seq_len));
    if (model) out += "," + format_double(model->backend->accuracy(a));
    out += "\n";
  });
  return out;
}

std::string cmd_cost(const std::string& source, const std::string& arch_text) {
  const SupernetConfig net = resolve_network(source);
  const ArchitectureSpec arch = parse_user_architecture(arch_text, net.space);
  return to_json(cost_breakdown(arch, net, net.seq_len), arch) + "\n";
}

std::string cmd_eval(const std::string& checkpoint_path, const std::string& arch_text) {
  const LoadedModel model = load_model(checkpoint_path);
  const SupernetConfig& net = model.checkpoint.net;
  const ArchitectureSpec arch = parse_user_architecture(arch_text, net.space);
  nlohmann::ordered_json j;
  j["architecture"] = to_string(arch);
  j["accuracy"] = model.backend->accuracy(arch);
  j["params"] = param_count(arch, net);
  j["flops"] = flops(arch, net, net.seq_len);
  j["backend"] = model.settings.kind == BackendKind::kTabular ? "tabular" : "neural";
  return j.dump(2) + "\n";
}

}  // namespace eesng
