/* C interface to the kflearn library. All matrices are dense, row-major. */
#ifndef KFLEARN_KFLEARN_H
#define KFLEARN_KFLEARN_H

#include <stddef.h>
#include <stdint.h>

#if defined(KFLEARN_BUILDING_LIBRARY)
#define KFLEARN_API __attribute__((visibility("default")))
#else
#define KFLEARN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kfl_status {
  KFL_OK = 0,
  KFL_ERR_INVALID_ARGUMENT = 1,
  KFL_ERR_CONFIG = 2,
  KFL_ERR_IO = 3,
  KFL_ERR_DIMENSION = 4,
  KFL_ERR_DOMAIN = 5,
  KFL_ERR_INSTABILITY = 6,
  KFL_ERR_CONVERGENCE = 7,
  KFL_ERR_STALL = 8,
  KFL_ERR_INITIALIZATION = 9,
  KFL_ERR_INCONCLUSIVE = 10,
  KFL_ERR_DIAGNOSTIC = 11,
  KFL_ERR_NUMERICAL = 12,
  KFL_ERR_INTERNAL = 13
} kfl_status;

typedef enum kfl_format { KFL_FORMAT_CONFIG = 0, KFL_FORMAT_CSV = 1, KFL_FORMAT_JSON = 2 } kfl_format;

typedef struct kfl_config kfl_config;
typedef struct kfl_model kfl_model;
typedef struct kfl_run kfl_run;

KFLEARN_API const char* kfl_version(void);
KFLEARN_API const char* kfl_status_name(kfl_status status);
/* Message for the last failed call on this thread ("" if none). */
KFLEARN_API const char* kfl_last_error(void);
/* Frees strings returned through char** out-parameters. */
KFLEARN_API void kfl_string_free(char* text);

KFLEARN_API kfl_status kfl_config_load(const char* path, kfl_config** out);
KFLEARN_API kfl_status kfl_config_parse(const char* yaml_text, kfl_config** out);
KFLEARN_API kfl_status kfl_config_preset(const char* name, kfl_config** out);
KFLEARN_API void kfl_config_free(kfl_config* cfg);
/* Replaces the sweep seeds by `seed` and reseeds duality and diagnose. */
KFLEARN_API kfl_status kfl_config_set_seed(kfl_config* cfg, uint64_t seed);
KFLEARN_API kfl_status kfl_config_set_samples(kfl_config* cfg, size_t samples);
KFLEARN_API kfl_status kfl_config_set_horizon(kfl_config* cfg, size_t horizon);
KFLEARN_API kfl_status kfl_config_set_timing(kfl_config* cfg, int enabled);
KFLEARN_API kfl_status kfl_config_set_workers(kfl_config* cfg, size_t workers);
KFLEARN_API kfl_status kfl_config_output_dir(const kfl_config* cfg, char** out);
/* 16 hex digits. */
KFLEARN_API kfl_status kfl_config_hash(const kfl_config* cfg, char** out);
KFLEARN_API kfl_status kfl_preset_text(const char* name, char** out);

/* Q, R, P0 must be symmetric PSD; m0 may be NULL (zero mean). */
KFLEARN_API kfl_status kfl_model_create(size_t n, size_t m, const double* a, const double* h, const double* q,
                                        const double* r, const double* p0, const double* m0, kfl_model** out);
KFLEARN_API kfl_status kfl_model_from_config(const kfl_config* cfg, kfl_model** out);
KFLEARN_API void kfl_model_free(kfl_model* model);
KFLEARN_API kfl_status kfl_model_dims(const kfl_model* model, size_t* n, size_t* m);

/* gain: n×m; p_inf: n×n or NULL. */
KFLEARN_API kfl_status kfl_steady_state_gain(const kfl_model* model, double* gain, double* p_inf);
KFLEARN_API kfl_status kfl_cost(const kfl_model* model, const double* gain, double* cost);
KFLEARN_API kfl_status kfl_grad(const kfl_model* model, const double* gain, double* grad);
KFLEARN_API kfl_status kfl_spectral_radius(const kfl_model* model, const double* gain, double* rho);

/* Subcommand back ends. `format` selects the text written to *out;
 * `out_dir` may be NULL to use the configured directory (or, for
 * oracle and duality, to skip writing files). */
KFLEARN_API kfl_status kfl_oracle(const kfl_config* cfg, kfl_format format, const char* out_dir, char** out);
KFLEARN_API kfl_status kfl_duality(const kfl_config* cfg, kfl_format format, const char* out_dir, char** out);
KFLEARN_API kfl_status kfl_diagnose(const kfl_config* cfg, kfl_format format, const char* out_dir, char** out);
/* Writes the experiment artifacts; *out receives the metadata JSON even
 * when some runs failed (status KFL_ERR_NUMERICAL). */
KFLEARN_API kfl_status kfl_learn(const kfl_config* cfg, kfl_format format, const char* out_dir, char** out);

/* One SGD run of the configured learner at (batch_size, horizon, seed). */
KFLEARN_API kfl_status kfl_run_sgd(const kfl_config* cfg, size_t batch_size, size_t horizon, uint64_t seed,
                                   kfl_run** out);
KFLEARN_API void kfl_run_free(kfl_run* run);
KFLEARN_API size_t kfl_run_length(const kfl_run* run);
KFLEARN_API kfl_status kfl_run_cost(const kfl_run* run, size_t k, double* cost);
KFLEARN_API kfl_status kfl_run_rho(const kfl_run* run, size_t k, double* rho);
KFLEARN_API kfl_status kfl_run_gain(const kfl_run* run, size_t k, double* gain);

#ifdef __cplusplus
}
#endif

#endif
