/* deepreport C API.
 *
 * Every entry point returns a dr_status; on failure dr_last_error() holds a
 * message for the calling thread. Strings returned through char** are
 * heap-allocated and released with dr_string_free. */
#ifndef DEEPREPORT_H
#define DEEPREPORT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define DR_API __attribute__((visibility("default")))
#else
#define DR_API
#endif

typedef enum dr_status {
  DR_OK = 0,
  DR_ERR_CONFIG,
  DR_ERR_TRANSPORT,
  DR_ERR_PROTOCOL,
  DR_ERR_PLANNING,
  DR_ERR_REVIEW,
  DR_ERR_JUDGING,
  DR_ERR_RENDERING_ENVIRONMENT,
  DR_ERR_CONTRACT,
  DR_ERR_STRUCTURAL,
  DR_ERR_PARSE,
  DR_ERR_IO,
  DR_ERR_ISOLATION,
  DR_ERR_INTERNAL,
  DR_ERR_INVALID_ARGUMENT
} dr_status;

typedef struct dr_config dr_config;

typedef struct dr_bootstrap_result {
  double mean;
  double ci_low;
  double ci_high;
  double p_two_sided;
} dr_bootstrap_result;

DR_API const char* dr_version(void);
DR_API const char* dr_status_name(dr_status status);
DR_API const char* dr_last_error(void);
/* Process exit status for a status: 0 ok, 2 config, 3 backend, 4 planning /
 * review / judging, 5 rendering environment, 6 io, 1 anything else. */
DR_API int dr_exit_code(dr_status status);
DR_API void dr_string_free(char* s);

/* Run configuration. Relative paths in the JSON resolve against base_dir
 * (or the file's directory for dr_config_load). */
DR_API dr_status dr_config_load(const char* path, dr_config** out);
DR_API dr_status dr_config_from_json(const char* json, const char* base_dir, dr_config** out);
DR_API dr_status dr_config_set_query(dr_config* config, const char* query);
DR_API dr_status dr_config_set_output_dir(dr_config* config, const char* dir);
DR_API dr_status dr_config_set_seed(dr_config* config, uint64_t seed);
/* "full" or "snippet". */
DR_API dr_status dr_config_set_ingestion_mode(dr_config* config, const char* mode);
DR_API dr_status dr_config_set_harness(dr_config* config, const char* path);
DR_API dr_status dr_config_to_json(const dr_config* config, char** out);
DR_API void dr_config_free(dr_config* config);

/* Generates (or resumes) a report in the configured output directory.
 * summary_out, if not NULL, receives a JSON object describing the run. */
DR_API dr_status dr_generate(const dr_config* config, char** summary_out);

/* Judges a report pair on five dimensions and writes evaluation.csv and
 * summary.json into out_dir. The backend comes from the "backend" section of
 * config_path. query may be NULL. */
DR_API dr_status dr_evaluate(const char* model_report, const char* reference_report, const char* out_dir,
                             const char* config_path, const char* query, char** summary_out);

/* Execution statistics of a run directory; also written to stats.json. */
DR_API dr_status dr_stats(const char* run_dir, char** json_out, char** text_out);

DR_API dr_status dr_relative_advantage(double model_score, double reference_score, double* out);
DR_API dr_status dr_aggregate(const double* values, size_t count, double* out);
DR_API dr_status dr_bootstrap(const double* deltas, size_t count, int resamples, uint64_t seed, double confidence,
                              dr_bootstrap_result* out);
/* keep receives 1 or 0; reasons_out (optional) a comma-separated list. */
DR_API dr_status dr_filter_document(size_t char_count, size_t word_count, size_t image_count, const char* title,
                                    int* keep, char** reasons_out);

/* Parses one AVR block into JSON. */
DR_API dr_status dr_avr_parse(const char* block_text, char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* DEEPREPORT_H */
