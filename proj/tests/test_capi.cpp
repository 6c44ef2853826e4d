// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "eesng/eesng.h"

namespace fs = std::filesystem;

namespace {

struct Session {
  eesng_session* s = eesng_session_new();
  ~Session() { eesng_session_free(s); }
};

std::string take(char* p) {
  std::string out = p ? p : "";
  eesng_string_free(p);
  return out;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("status names and exit codes") {
  CHECK(eesng_exit_code(EESNG_OK) == 0);
  CHECK(eesng_exit_code(EESNG_CONFIG) == 2);
  CHECK(eesng_exit_code(EESNG_INFEASIBLE) == 3);
  CHECK(eesng_exit_code(EESNG_CORRUPT_CHECKPOINT) == 4);
  for (auto s : {EESNG_INVALID_ARGUMENT, EESNG_INVALID_ARCHITECTURE, EESNG_SPACE_TOO_LARGE,
                 EESNG_NON_FINITE, EESNG_IO, EESNG_INTERNAL}) {
    CHECK(eesng_exit_code(s) == 1);
  }
  CHECK(std::string(eesng_status_name(EESNG_INFEASIBLE)) == "infeasible constraint");
  CHECK(std::string(eesng_version()) == "1.0.0");
}

TEST_CASE("null arguments are reported, not dereferenced") {
  char* out = nullptr;
  CHECK(eesng_cost(nullptr, "desk", "d2|h4,4|k64,64", &out) == EESNG_INVALID_ARGUMENT);
  Session session;
  CHECK(eesng_cost(session.s, nullptr, "d2", &out) == EESNG_INVALID_ARGUMENT);
  CHECK(contains(eesng_last_error(session.s), "source is NULL"));
  CHECK(eesng_search(session.s, nullptr, &out) == EESNG_INVALID_ARGUMENT);
  CHECK(out == nullptr);
  CHECK(eesng_model_open(session.s, "x", nullptr) == EESNG_INVALID_ARGUMENT);
  eesng_model_close(nullptr);
  eesng_string_free(nullptr);
}

TEST_CASE("cost and enumerate; last_error clears on success") {
  Session session;
  char* out = nullptr;
  CHECK(eesng_cost(session.s, "desk", "d2|h3,1|k64,64", &out) == EESNG_INVALID_ARCHITECTURE);
  CHECK(std::string(eesng_last_error(session.s)).size() > 0);
  REQUIRE(eesng_cost(session.s, "desk", "d4|h4,4,4,4|k64,64,64,64", &out) == EESNG_OK);
  CHECK(std::string(eesng_last_error(session.s)).empty());
  CHECK(contains(take(out), "\"params_without_embedding\": 34242"));
  REQUIRE(eesng_enumerate(session.s, "desk", &out) == EESNG_OK);
  const auto csv = take(out);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7372);
  CHECK(eesng_cost(session.s, "no-such-source", "d2", &out) != EESNG_OK);
}

TEST_CASE("train, model handle, search and errors through the C API") {
  const fs::path dir = fs::temp_directory_path() / "eesng_capi";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cfg = (dir / "run.ini").string();
  std::ofstream(cfg) << "seed = 9\n[space]\npreset = desk\n[backend]\nkind = tabular\n"
                        "[train]\nepochs = 3\nsteps_per_epoch = 20\n[output]\ndir = "
                     << (dir / "out").string() << "\n";
  Session session;
  char* out = nullptr;
  REQUIRE(eesng_train(session.s, cfg.c_str(), 0, &out) == EESNG_OK);
  const auto summary = take(out);
  CHECK(contains(summary, "checkpoint.eesn"));
  const std::string ck = (dir / "out" / "checkpoint.eesn").string();

  eesng_model* model = nullptr;
  REQUIRE(eesng_model_open(session.s, ck.c_str(), &model) == EESNG_OK);
  double acc = -1.0;
  REQUIRE(eesng_model_accuracy(session.s, model, "d2|h4,4|k64,64", &acc) == EESNG_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  int64_t params = 0;
  REQUIRE(eesng_model_cost(session.s, model, "d2|h1,1|k16,16", "params", &params) == EESNG_OK);
  int64_t flops = 0;
  REQUIRE(eesng_model_cost(session.s, model, "d2|h1,1|k16,16", "flops", &flops) == EESNG_OK);
  CHECK(params > 0);
  CHECK(flops > params);
  CHECK(eesng_model_cost(session.s, model, "d2|h1,1|k16,16", "joules", &params) ==
        EESNG_CONFIG);
  uint64_t sum = 1;
  REQUIRE(eesng_model_weights_checksum(session.s, model, &sum) == EESNG_OK);
  CHECK(sum == 0);  // tabular
  eesng_model_close(model);

  eesng_search_options so;
  eesng_search_options_init(&so);
  so.checkpoint_path = ck.c_str();
  so.name = "c";
  so.steps = 30;
  REQUIRE(eesng_search(session.s, &so, &out) == EESNG_OK);
  const auto first = take(out);
  CHECK(contains(first, "\"feasible\": true"));
  REQUIRE(eesng_search(session.s, &so, &out) == EESNG_OK);
  CHECK(take(out) == first);

  so.omega = 100.0;
  CHECK(eesng_search(session.s, &so, &out) == EESNG_INFEASIBLE);
  CHECK(contains(eesng_last_error(session.s), "minimum architecture cost"));
  so.omega = 0.0;
  so.method = "annealing";
  CHECK(eesng_search(session.s, &so, &out) != EESNG_OK);

  const std::string garbage = (dir / "bad.eesn").string();
  std::ofstream(garbage) << "EESN but not really";
  CHECK(eesng_model_open(session.s, garbage.c_str(), &model) == EESNG_CORRUPT_CHECKPOINT);
  CHECK(eesng_eval(session.s, garbage.c_str(), "d2", &out) == EESNG_CORRUPT_CHECKPOINT);

  const std::string bad_cfg = (dir / "bad.ini").string();
  std::ofstream(bad_cfg) << "seed = 9\n[train]\nepochs = 1\n";
  CHECK(eesng_train(session.s, bad_cfg.c_str(), 0, &out) == EESNG_CONFIG);
  CHECK(eesng_train(session.s, (dir / "missing.ini").string().c_str(), 0, &out) != EESNG_OK);
  fs::remove_all(dir);
}
