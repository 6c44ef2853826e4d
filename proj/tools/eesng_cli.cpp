// Command-line front end. Talks to the toolkit only through the C API.
#include <malloc.h>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "eesng/eesng.h"

namespace {

struct Session {
  eesng_session* s = eesng_session_new();
  ~Session() { eesng_session_free(s); }
};

// Prints the output (or the error) and returns the process exit code.
int finish(const Session& session, eesng_status status, char* output,
           const std::string& out_path = {}) {
  if (status != EESNG_OK) {
    std::fprintf(stderr, "error (%s): %s\n", eesng_status_name(status),
                 eesng_last_error(session.s));
  }
  if (output) {
    if (out_path.empty()) {
      std::fputs(output, stdout);
    } else {
      std::ofstream f(out_path, std::ios::binary);
      f << output;
      if (!f) {
        std::fprintf(stderr, "error: cannot write %s\n", out_path.c_str());
        eesng_string_free(output);
        return 1;
      }
    }
    eesng_string_free(output);
  }
  return eesng_exit_code(status);
}

}  // namespace

int main(int argc, char** argv) {
  // Batch activations are a few hundred KB; keep them on the heap instead of
  // a fresh mmap per forward pass.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  CLI::App app{"Exploit-explore stochastic natural gradient NAS toolkit"};
  app.set_version_flag("--version", eesng_version());
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 2 config error, 3 infeasible constraint,\n"
      "4 corrupt checkpoint, 1 other failures.");

  std::string config, checkpoint, source, arch, out_path;
  bool resume = false;

  auto* train = app.add_subcommand("train", "Stage I: train the supernet and distribution");
  train->add_option("-c,--config", config, "Experiment config file")->required();
  train->add_flag("--resume", resume, "Continue from the output directory's checkpoint");

  eesng_search_options so;
  eesng_search_options_init(&so);
  std::string name = "search", method = "distribution", metric = "params",
              penalty = "as_written", out_dir;
  auto* search = app.add_subcommand("search", "Stage II: constrained search, weights frozen");
  search->add_option("-k,--checkpoint", checkpoint, "Checkpoint from train")->required();
  auto* omega = search->add_option("--omega", so.omega, "Budget in metric units");
  auto* frac = search->add_option("--omega-fraction", so.omega_fraction,
                                  "Budget as a fraction of the supernet cost");
  auto* jobs = search->add_option("-c,--config", config, "Run every [search.NAME] job");
  omega->excludes(frac);
  jobs->excludes(omega)->excludes(frac);
  search->add_option("--metric", metric, "params | flops")->capture_default_str();
  search->add_option("--penalty", penalty, "as_written | violation_proportional")
      ->capture_default_str();
  search->add_option("--alpha", so.alpha, "Penalty exponent")->capture_default_str();
  search->add_option("--method", method, "distribution | random | evolutionary")
      ->capture_default_str();
  search->add_option("--steps", so.steps)->capture_default_str();
  search->add_option("--samples", so.samples_per_step, "Samples per step")->capture_default_str();
  search->add_option("--lr", so.learning_rate, "Distribution learning rate (default 0.5/samples)");
  search->add_option("--population", so.population)->capture_default_str();
  search->add_option("--generations", so.generations)->capture_default_str();
  search->add_option("--mutation-rate", so.mutation_rate)->capture_default_str();
  search->add_option("--budget", so.budget, "Random search evaluations (default steps*samples)");
  search->add_flag("--warm-start", so.warm_start, "Start from the trained distribution");
  search->add_option("--seed", so.seed)->capture_default_str();
  search->add_option("--name", name, "Output name: search_<name>.json")->capture_default_str();
  search->add_option("-o,--out", out_dir, "Output directory (default: checkpoint's)");

  auto* bench = app.add_subcommand("benchmark", "Seeded searcher and gate-mode comparisons");
  bench->add_option("-c,--config", config, "Experiment config file")->required();

  auto* enumerate = app.add_subcommand("enumerate", "CSV of every architecture and its cost");
  enumerate->add_option("-s,--source", source, "Preset (desk, bert), config or checkpoint")
      ->required();
  enumerate->add_option("-o,--out", out_path, "Write to a file instead of stdout");

  auto* cost = app.add_subcommand("cost", "Cost breakdown of one architecture (JSON)");
  cost->add_option("-s,--source", source, "Preset (desk, bert), config or checkpoint")
      ->required();
  cost->add_option("-a,--arch", arch, "e.g. d2|h4,2|k64,32")->required();

  auto* eval = app.add_subcommand("eval", "Inherited-weight accuracy of one architecture");
  eval->add_option("-k,--checkpoint", checkpoint)->required();
  eval->add_option("-a,--arch", arch, "e.g. d2|h4,2|k64,32")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Session session;
  if (!session.s) return 1;
  char* output = nullptr;
  eesng_status status = EESNG_OK;
  if (*train) {
    status = eesng_train(session.s, config.c_str(), resume ? 1 : 0, &output);
  } else if (*search) {
    if (!config.empty()) {
      status = eesng_search_config(session.s, checkpoint.c_str(), config.c_str(), &output);
    } else {
      so.checkpoint_path = checkpoint.c_str();
      so.output_dir = out_dir.empty() ? nullptr : out_dir.c_str();
      so.name = name.c_str();
      so.method = method.c_str();
      so.metric = metric.c_str();
      so.penalty = penalty.c_str();
      if (*omega) so.omega_fraction = 0.0;
      status = eesng_search(session.s, &so, &output);
    }
  } else if (*bench) {
    status = eesng_benchmark(session.s, config.c_str(), &output);
  } else if (*enumerate) {
    status = eesng_enumerate(session.s, source.c_str(), &output);
    return finish(session, status, output, out_path);
  } else if (*cost) {
    status = eesng_cost(session.s, source.c_str(), arch.c_str(), &output);
  } else if (*eval) {
    status = eesng_eval(session.s, checkpoint.c_str(), arch.c_str(), &output);
  }
  return finish(session, status, output);
}
