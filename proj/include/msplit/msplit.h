/*
 * msplit: two-stage block multisplitting solver for sparse linear systems.
 *
 * C interface. All objects are opaque handles created and destroyed through
 * this API. Every fallible call returns an msplit_status; on failure the
 * calling thread's last error message is available from msplit_last_error().
 */
#ifndef MSPLIT_MSPLIT_H
#define MSPLIT_MSPLIT_H

#include <stddef.h>

#if defined(_WIN32)
#define MSPLIT_API __declspec(dllexport)
#else
#define MSPLIT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum msplit_status {
    MSPLIT_OK = 0,
    MSPLIT_ERR_CONFIG = 1,    /* invalid configuration; msplit_last_error_field() names it */
    MSPLIT_ERR_USAGE = 2,     /* bad argument, dimension mismatch, malformed file */
    MSPLIT_ERR_SINGULAR = 3,  /* dense oracle hit a zero pivot */
    MSPLIT_ERR_BREAKDOWN = 4, /* inner solver breakdown; see msplit_last_error_block() */
    MSPLIT_ERR_PROTOCOL = 5,  /* communication protocol violation */
    MSPLIT_ERR_IO = 6,
    MSPLIT_ERR_INTERNAL = 7
} msplit_status;

typedef enum msplit_run_status {
    MSPLIT_RUN_CONVERGED = 0,
    MSPLIT_RUN_MAX_OUTER = 1
} msplit_run_status;

typedef struct msplit_config msplit_config;
typedef struct msplit_result msplit_result;
typedef struct msplit_comparison msplit_comparison;

typedef struct msplit_summary {
    msplit_run_status status;
    size_t outer_iterations;
    size_t total_inner_iterations;
    double iterations_per_second;
    double final_true_residual;
    double wall_seconds;
} msplit_summary;

/* Last error of the calling thread; never NULL (empty when none). */
MSPLIT_API const char* msplit_last_error(void);
/* Configuration key named by the last MSPLIT_ERR_CONFIG, or "". */
MSPLIT_API const char* msplit_last_error_field(void);
/* Block id of the last MSPLIT_ERR_BREAKDOWN, or -1. */
MSPLIT_API long msplit_last_error_block(void);

MSPLIT_API msplit_status msplit_config_create(msplit_config** out);
MSPLIT_API void msplit_config_destroy(msplit_config* config);
/* Keys are the CLI flag names without dashes: nx, gx, inner-its, delay, ... */
MSPLIT_API msplit_status msplit_config_set(msplit_config* config, const char* key,
                                           const char* value);
/* Applies key=value lines ('#' comments allowed). */
MSPLIT_API msplit_status msplit_config_load_text(msplit_config* config, const char* text);
MSPLIT_API msplit_status msplit_config_validate(const msplit_config* config);
/* Whitespace-separated key=value echo. The string lives until the next call
 * on this config or its destruction. */
MSPLIT_API const char* msplit_config_echo(const msplit_config* config);

MSPLIT_API msplit_status msplit_run(const msplit_config* config, msplit_result** out);
MSPLIT_API void msplit_result_destroy(msplit_result* result);
MSPLIT_API msplit_status msplit_result_summary(const msplit_result* result,
                                               msplit_summary* out);
MSPLIT_API const char* msplit_result_config_echo(const msplit_result* result);
MSPLIT_API size_t msplit_result_solution_size(const msplit_result* result);
/* Copies min(capacity, size) entries; returns the number copied. */
MSPLIT_API size_t msplit_result_solution(const msplit_result* result, double* out,
                                         size_t capacity);
MSPLIT_API size_t msplit_result_trace_rows(const msplit_result* result);
MSPLIT_API msplit_status msplit_result_write_trace(const msplit_result* result,
                                                   const char* path);

/* Compares traces against paths[reference]. */
MSPLIT_API msplit_status msplit_compare(const char* const* paths, size_t count,
                                        size_t reference, msplit_comparison** out);
MSPLIT_API void msplit_comparison_destroy(msplit_comparison* comparison);
MSPLIT_API const char* msplit_comparison_text(const msplit_comparison* comparison);
MSPLIT_API const char* msplit_comparison_csv(const msplit_comparison* comparison);

#ifdef __cplusplus
}
#endif

#endif /* MSPLIT_MSPLIT_H */
