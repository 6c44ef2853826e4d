/* C interface to the EE-SNG toolkit. Every call that can fail returns an
 * eesng_status and records a message retrievable with eesng_last_error on
 * the session it was given. Strings returned through char** out-parameters
 * are owned by the caller and released with eesng_string_free. */
#ifndef EESNG_H
#define EESNG_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define EESNG_API __declspec(dllexport)
#else
#define EESNG_API __attribute__((visibility("default")))
#endif

typedef enum eesng_status {
  EESNG_OK = 0,
  EESNG_INVALID_ARGUMENT = 1,
  EESNG_CONFIG = 2,
  EESNG_INFEASIBLE = 3,
  EESNG_CORRUPT_CHECKPOINT = 4,
  EESNG_INVALID_ARCHITECTURE = 5,
  EESNG_SPACE_TOO_LARGE = 6,
  EESNG_NON_FINITE = 7,
  EESNG_IO = 8,
  EESNG_INTERNAL = 9
} eesng_status;

typedef struct eesng_session eesng_session;
/* A loaded checkpoint: frozen weights plus the backend it was trained on. */
typedef struct eesng_model eesng_model;

EESNG_API const char* eesng_version(void);
EESNG_API const char* eesng_status_name(eesng_status status);
/* Process exit code: 0 ok, 2 config, 3 infeasible, 4 corrupt checkpoint,
 * 1 anything else. */
EESNG_API int eesng_exit_code(eesng_status status);

EESNG_API eesng_session* eesng_session_new(void);
EESNG_API void eesng_session_free(eesng_session* session);
/* Message of the last failed call on this session; "" after a success. */
EESNG_API const char* eesng_last_error(const eesng_session* session);
EESNG_API void eesng_string_free(char* str);

/* Stage I. Writes checkpoint.eesn, history.csv and progress.csv to the
 * configured output directory. summary_json (optional) receives paths and
 * the best observed loss. */
EESNG_API eesng_status eesng_train(eesng_session* session, const char* config_path,
                                   int resume, char** summary_json);

typedef struct eesng_search_options {
  const char* checkpoint_path;
  const char* output_dir; /* NULL: the checkpoint's directory */
  const char* name;       /* NULL: "search"; files search_<name>.json/_trace.csv */
  const char* method;     /* NULL: "distribution"; or "random", "evolutionary" */
  const char* metric;     /* NULL: "params"; or "flops" */
  const char* penalty;    /* NULL: "as_written"; or "violation_proportional" */
  double omega;           /* absolute budget, used when > 0 */
  double omega_fraction;  /* of the supernet cost, used when omega <= 0 */
  double alpha;
  int steps;
  int samples_per_step;
  double learning_rate; /* <= 0: default */
  int population;
  int generations;
  double mutation_rate;
  int64_t budget; /* random search evaluations; 0: steps * samples_per_step */
  int warm_start;
  uint64_t seed;
} eesng_search_options;

EESNG_API void eesng_search_options_init(eesng_search_options* options);
/* Stage II against one checkpoint. EESNG_INFEASIBLE when the budget is not
 * above the smallest architecture's cost or nothing feasible was found. */
EESNG_API eesng_status eesng_search(eesng_session* session,
                                    const eesng_search_options* options,
                                    char** result_json);
/* Every [search.NAME] job of a config file; JSON array. */
EESNG_API eesng_status eesng_search_config(eesng_session* session,
                                           const char* checkpoint_path,
                                           const char* config_path, char** result_json);

EESNG_API eesng_status eesng_benchmark(eesng_session* session, const char* config_path,
                                       char** summary_csv);

/* `source` is a preset name, an experiment config or a checkpoint. */
EESNG_API eesng_status eesng_enumerate(eesng_session* session, const char* source,
                                       char** csv);
EESNG_API eesng_status eesng_cost(eesng_session* session, const char* source,
                                  const char* arch, char** json);
EESNG_API eesng_status eesng_eval(eesng_session* session, const char* checkpoint_path,
                                  const char* arch, char** json);

EESNG_API eesng_status eesng_model_open(eesng_session* session, const char* checkpoint_path,
                                        eesng_model** model);
EESNG_API void eesng_model_close(eesng_model* model);
EESNG_API eesng_status eesng_model_accuracy(eesng_session* session, const eesng_model* model,
                                            const char* arch, double* accuracy);
EESNG_API eesng_status eesng_model_cost(eesng_session* session, const eesng_model* model,
                                        const char* arch, const char* metric, int64_t* cost);
/* FNV-1a over the weight tensors; 0 for tabular models. */
EESNG_API eesng_status eesng_model_weights_checksum(eesng_session* session,
                                                    const eesng_model* model,
                                                    uint64_t* checksum);

#ifdef __cplusplus
}
#endif

#endif /* EESNG_H */
