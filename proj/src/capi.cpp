#include "eesng/eesng.h"

#include <cstdlib>
#include <cstring>
#include <json.hpp>
#include <memory>
#include <new>
#include <string>

#include "eesng/error.hpp"
#include "eesng/experiment.hpp"

struct eesng_session {
  std::string last_error;
};

struct eesng_model {
  eesng::Checkpoint checkpoint;
  std::unique_ptr<eesng::Backend> backend;
};

namespace {

eesng_status to_status(eesng::ErrorCode code) {
  switch (code) {
    case eesng::ErrorCode::kInvalidArgument: return EESNG_INVALID_ARGUMENT;
    case eesng::ErrorCode::kConfig: return EESNG_CONFIG;
    case eesng::ErrorCode::kInfeasible: return EESNG_INFEASIBLE;
    case eesng::ErrorCode::kCorruptCheckpoint: return EESNG_CORRUPT_CHECKPOINT;
    case eesng::ErrorCode::kInvalidArchitecture: return EESNG_INVALID_ARCHITECTURE;
    case eesng::ErrorCode::kSpaceTooLarge: return EESNG_SPACE_TOO_LARGE;
    case eesng::ErrorCode::kNonFinite: return EESNG_NON_FINITE;
    case eesng::ErrorCode::kIo: return EESNG_IO;
  }
  return EESNG_INTERNAL;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

// Runs fn, translating exceptions into a status and the session's message.
template <typename Fn>
eesng_status guarded(eesng_session* session, Fn&& fn) {
  if (!session) return EESNG_INVALID_ARGUMENT;
  session->last_error.clear();
  try {
    fn();
    return EESNG_OK;
  } catch (const eesng::Error& e) {
    session->last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    session->last_error = "out of memory";
  } catch (const std::exception& e) {
    session->last_error = e.what();
  } catch (...) {
    session->last_error = "unknown failure";
  }
  return EESNG_INTERNAL;
}

std::string need(const char* s, const char* what) {
  if (!s) eesng::fail(eesng::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
  return s;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

}  // namespace

extern "C" {

const char* eesng_version(void) { return "1.0.0"; }

const char* eesng_status_name(eesng_status status) {
  switch (status) {
    case EESNG_OK: return "ok";
    case EESNG_INVALID_ARGUMENT: return "invalid argument";
    case EESNG_CONFIG: return "config error";
    case EESNG_INFEASIBLE: return "infeasible constraint";
    case EESNG_CORRUPT_CHECKPOINT: return "corrupt checkpoint";
    case EESNG_INVALID_ARCHITECTURE: return "invalid architecture";
    case EESNG_SPACE_TOO_LARGE: return "space too large";
    case EESNG_NON_FINITE: return "non-finite loss";
    case EESNG_IO: return "i/o error";
    case EESNG_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int eesng_exit_code(eesng_status status) {
  switch (status) {
    case EESNG_OK: return 0;
    case EESNG_CONFIG: return 2;
    case EESNG_INFEASIBLE: return 3;
    case EESNG_CORRUPT_CHECKPOINT: return 4;
    default: return 1;
  }
}

eesng_session* eesng_session_new(void) { return new (std::nothrow) eesng_session(); }

void eesng_session_free(eesng_session* session) { delete session; }

const char* eesng_last_error(const eesng_session* session) {
  return session ? session->last_error.c_str() : "no session";
}

void eesng_string_free(char* str) { std::free(str); }

eesng_status eesng_train(eesng_session* session, const char* config_path, int resume,
                         char** summary_json) {
  return guarded(session, [&] {
    const auto out = eesng::cmd_train(need(config_path, "config_path"), resume != 0);
    nlohmann::ordered_json j;
    j["checkpoint"] = out.checkpoint_path;
    j["history"] = out.history_path;
    j["progress"] = out.progress_path;
    j["best_loss"] = out.best_loss;
    put(summary_json, j.dump(2) + "\n");
  });
}

void eesng_search_options_init(eesng_search_options* o) {
  if (!o) return;
  *o = eesng_search_options{};
  o->omega_fraction = 0.5;
  o->alpha = 2.0;
  o->steps = 200;
  o->samples_per_step = 8;
  o->population = 16;
  o->generations = 100;
  o->mutation_rate = 0.1;
  o->seed = 1;
}

eesng_status eesng_search(eesng_session* session, const eesng_search_options* o,
                          char** result_json) {
  return guarded(session, [&] {
    if (!o) eesng::fail(eesng::ErrorCode::kInvalidArgument, "options is NULL");
    eesng::SearchRequest req;
    req.checkpoint_path = need(o->checkpoint_path, "checkpoint_path");
    if (o->output_dir) req.output_dir = o->output_dir;
    eesng::SearchJob& job = req.job;
    job.name = o->name ? o->name : "search";
    job.method = o->method ? o->method : "distribution";
    job.metric = eesng::parse_metric(o->metric ? o->metric : "params");
    job.penalty = eesng::parse_penalty_form(o->penalty ? o->penalty : "as_written");
    if (o->omega > 0.0) {
      job.omega = o->omega;
    } else {
      job.omega_fraction = o->omega_fraction;
    }
    job.alpha = o->alpha;
    job.distribution.steps = o->steps;
    job.distribution.samples_per_step = o->samples_per_step;
    if (o->learning_rate > 0.0) job.distribution.learning_rate = o->learning_rate;
    job.evolution.population = o->population;
    job.evolution.generations = o->generations;
    job.evolution.mutation_rate = o->mutation_rate;
    job.budget = o->budget;
    job.warm_start = o->warm_start != 0;
    job.seed = o->seed;
    put(result_json, eesng::cmd_search(req));
  });
}

eesng_status eesng_search_config(eesng_session* session, const char* checkpoint_path,
                                 const char* config_path, char** result_json) {
  return guarded(session, [&] {
    put(result_json, eesng::cmd_search_all(need(checkpoint_path, "checkpoint_path"),
                                           need(config_path, "config_path")));
  });
}

eesng_status eesng_benchmark(eesng_session* session, const char* config_path,
                             char** summary_csv) {
  return guarded(session, [&] {
    const auto out = eesng::cmd_benchmark(need(config_path, "config_path"));
    put(summary_csv, eesng::read_file(out.summary_csv));
  });
}

eesng_status eesng_enumerate(eesng_session* session, const char* source, char** csv) {
  return guarded(session, [&] { put(csv, eesng::cmd_enumerate(need(source, "source"))); });
}

eesng_status eesng_cost(eesng_session* session, const char* source, const char* arch,
                        char** json) {
  return guarded(session, [&] {
    put(json, eesng::cmd_cost(need(source, "source"), need(arch, "arch")));
  });
}

eesng_status eesng_eval(eesng_session* session, const char* checkpoint_path, const char* arch,
                        char** json) {
  return guarded(session, [&] {
    put(json, eesng::cmd_eval(need(checkpoint_path, "checkpoint_path"), need(arch, "arch")));
  });
}

eesng_status eesng_model_open(eesng_session* session, const char* checkpoint_path,
                              eesng_model** model) {
  return guarded(session, [&] {
    if (!model) eesng::fail(eesng::ErrorCode::kInvalidArgument, "model is NULL");
    auto m = std::make_unique<eesng_model>();
    m->checkpoint = eesng::load_checkpoint(need(checkpoint_path, "checkpoint_path"));
    m->backend = eesng::restore_backend(m->checkpoint);
    *model = m.release();
  });
}

void eesng_model_close(eesng_model* model) { delete model; }

eesng_status eesng_model_accuracy(eesng_session* session, const eesng_model* model,
                                  const char* arch, double* accuracy) {
  return guarded(session, [&] {
    if (!model || !accuracy) eesng::fail(eesng::ErrorCode::kInvalidArgument, "NULL argument");
    const auto a =
        eesng::parse_user_architecture(need(arch, "arch"), model->checkpoint.net.space);
    *accuracy = model->backend->accuracy(a);
  });
}

eesng_status eesng_model_cost(eesng_session* session, const eesng_model* model,
                              const char* arch, const char* metric, int64_t* cost) {
  return guarded(session, [&] {
    if (!model || !cost) eesng::fail(eesng::ErrorCode::kInvalidArgument, "NULL argument");
    const auto& net = model->checkpoint.net;
    const auto a = eesng::parse_user_architecture(need(arch, "arch"), net.space);
    *cost = eesng::arch_cost(a, net, eesng::parse_metric(metric ? metric : "params"));
  });
}

eesng_status eesng_model_weights_checksum(eesng_session* session, const eesng_model* model,
                                          uint64_t* checksum) {
  return guarded(session, [&] {
    if (!model || !checksum) eesng::fail(eesng::ErrorCode::kInvalidArgument, "NULL argument");
    const auto* nb = dynamic_cast<const eesng::NeuralBackend*>(model->backend.get());
    *checksum = nb ? eesng::checksum(nb->weights()) : 0;
  });
}

}  // extern "C"
