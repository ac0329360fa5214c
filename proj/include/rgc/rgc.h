/* C interface to the retinal layer grading library.
 *
 * Every call returns an rgc_status. On failure the message is available from
 * rgc_last_error() on the same thread until the next call. Strings returned
 * through char** out-parameters are owned by the caller and must be released
 * with rgc_string_free(). Handles are released with their *_free function;
 * passing NULL to a free function is a no-op. */
#ifndef RGC_RGC_H
#define RGC_RGC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(RGC_BUILDING_LIBRARY)
#    define RGC_API __declspec(dllexport)
#  else
#    define RGC_API __declspec(dllimport)
#  endif
#else
#  define RGC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rgc_status {
  RGC_OK = 0,
  RGC_ERR_VALIDATION = 1, /* bad argument, config, or input */
  RGC_ERR_FORMAT = 2,     /* a file could not be decoded */
  RGC_ERR_IO = 3,         /* missing file or unwritable path */
  RGC_ERR_STAGE = 4,      /* a pipeline stage failed; see rgc_last_error_stage */
  RGC_ERR_INTERNAL = 5
} rgc_status;

RGC_API const char* rgc_version(void);
/* "" when the last call on this thread succeeded. */
RGC_API const char* rgc_last_error(void);
/* Name of the failing stage after RGC_ERR_STAGE, otherwise "". */
RGC_API const char* rgc_last_error_stage(void);
RGC_API const char* rgc_status_name(rgc_status status);
RGC_API void rgc_string_free(char* s);

/* ---- Run configuration ------------------------------------------------- */

typedef struct rgc_config rgc_config;

RGC_API rgc_status rgc_config_new(rgc_config** out);
/* Keys missing from the text keep their defaults; unknown keys are rejected. */
RGC_API rgc_status rgc_config_from_json(const char* json, rgc_config** out);
RGC_API rgc_status rgc_config_load(const char* path, rgc_config** out);
/* "dotted.key=value"; the value is read as JSON when it parses. The config is
 * unchanged when the assignment is rejected. */
RGC_API rgc_status rgc_config_set(rgc_config* cfg, const char* assignment);
RGC_API rgc_status rgc_config_to_json(const rgc_config* cfg, char** out);
RGC_API void rgc_config_free(rgc_config* cfg);

/* ---- Synthetic data ---------------------------------------------------- */

typedef struct rgc_synth_options {
  int healthy;
  int early;
  int advanced;
  int height;
  int width;
  double axial_scale_um;
  double noise_std;
  double clinician_disagreement;
  uint64_t seed;
} rgc_synth_options;

RGC_API void rgc_synth_options_default(rgc_synth_options* opts);
/* Writes scans/, masks/, sidecars, and manifest.csv into dir. */
RGC_API rgc_status rgc_synth_dataset(const char* dir, const rgc_synth_options* opts);

/* ---- Pipeline ---------------------------------------------------------- */

/* Validates the manifest and config and starts a run directory. */
RGC_API rgc_status rgc_run_init(const char* manifest, const char* run_dir, const rgc_config* cfg);
RGC_API rgc_status rgc_stage_preprocess(const char* run_dir);
/* model may be NULL to train from the manifest's training scans. */
RGC_API rgc_status rgc_stage_train(const char* run_dir, const char* model);
RGC_API rgc_status rgc_stage_segment(const char* run_dir);
RGC_API rgc_status rgc_stage_profile(const char* run_dir);
RGC_API rgc_status rgc_stage_grade(const char* run_dir);
/* Writes evaluate/report.json; report_json may be NULL. */
RGC_API rgc_status rgc_stage_evaluate(const char* run_dir, char** report_json);
/* Every stage in order. model and report_json may be NULL. */
RGC_API rgc_status rgc_run(const char* manifest, const char* run_dir, const char* model, const rgc_config* cfg,
                           char** report_json);
/* Recomputes the report from a finished run without writing anything. */
RGC_API rgc_status rgc_report(const char* run_dir, char** report_json);
/* Per-clinician Pearson agreement of a run's final grades; JSON or CSV. */
RGC_API rgc_status rgc_agreement(const char* manifest, const char* run_dir, int as_csv, char** out);

/* ---- Single-file helpers ----------------------------------------------- */

/* Retina extraction of one scan. mask_out may be NULL. */
RGC_API rgc_status rgc_preprocess_scan(const char* scan, const char* out, const char* mask_out,
                                       const rgc_config* cfg);
/* Thickness profile CSV and features JSON of a label mask. Either output may be
 * NULL; features_json is set to NULL when no column is valid. */
RGC_API rgc_status rgc_profile_mask(const char* mask, double axial_scale_um, char** profile_csv,
                                    char** features_json);

/* ---- Networks ---------------------------------------------------------- */

typedef struct rgc_network rgc_network;

/* Toy network sized from cfg's network section. */
RGC_API rgc_status rgc_network_new(const rgc_config* cfg, int height, int width, uint64_t seed,
                                   rgc_network** out);
RGC_API rgc_status rgc_network_load(const char* path, rgc_network** out);
RGC_API rgc_status rgc_network_save(const rgc_network* net, const char* path);
RGC_API rgc_status rgc_network_parameters(const rgc_network* net, size_t* learnable, size_t* non_learnable);
RGC_API rgc_status rgc_network_input_size(const rgc_network* net, int* height, int* width);
/* Segments one scan: writes the label mask and returns P(glaucoma). */
RGC_API rgc_status rgc_network_predict(const rgc_network* net, const char* scan, const char* mask_out,
                                       double* glaucoma_probability);
RGC_API void rgc_network_free(rgc_network* net);

#ifdef __cplusplus
}
#endif

#endif /* RGC_RGC_H */
