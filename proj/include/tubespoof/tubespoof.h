#ifndef TUBESPOOF_H
#define TUBESPOOF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define TSP_API __attribute__((visibility("default")))
#else
#define TSP_API
#endif

typedef enum tsp_status {
  TSP_OK = 0,
  TSP_INVALID_ARGUMENT = 1,
  TSP_DOMAIN = 2,
  TSP_IO = 3,
  TSP_FORMAT = 4,
  TSP_NO_SPEECH = 5,
  TSP_TIMEOUT = 6,
  TSP_PROTOCOL = 7,
  TSP_INTERNAL = 99
} tsp_status;

typedef struct tsp_audio tsp_audio;
typedef struct tsp_model tsp_model;
typedef struct tsp_adapter tsp_adapter;
typedef struct tsp_config tsp_config;

/* Every function returning char* through an out-parameter hands ownership to
   the caller; release it with tsp_string_free. JSON strings are UTF-8. */

TSP_API const char* tsp_version(void);
TSP_API const char* tsp_status_name(tsp_status status);
/* Message of the last failure on the calling thread; never NULL. */
TSP_API const char* tsp_last_error(void);
TSP_API void tsp_string_free(char* s);

/* Audio */
TSP_API tsp_status tsp_audio_create(const double* samples, size_t count, int sample_rate, tsp_audio** out);
TSP_API tsp_status tsp_audio_read(const char* path, tsp_audio** out);
TSP_API tsp_status tsp_audio_write(const tsp_audio* audio, const char* path);
TSP_API tsp_status tsp_audio_chirp(double duration_s, double f_start, double f_end, int sample_rate,
                                   tsp_audio** out);
TSP_API size_t tsp_audio_length(const tsp_audio* audio);
TSP_API int tsp_audio_sample_rate(const tsp_audio* audio);
TSP_API const double* tsp_audio_samples(const tsp_audio* audio);
TSP_API void tsp_audio_free(tsp_audio* audio);

TSP_API tsp_status tsp_dtw_distance(const tsp_audio* a, const tsp_audio* b, double* out);
/* {"peak_lag":..,"peak_coefficient":..} */
TSP_API tsp_status tsp_cross_correlation(const tsp_audio* a, const tsp_audio* b, char** json_out);

/* Acoustics. nyquist_hz <= 0 selects 4000 Hz. */
TSP_API tsp_status tsp_tube_info(double length_m, double diameter_m, double temperature_k, double nyquist_hz,
                                 char** json_out);
TSP_API tsp_status tsp_two_tube(double l1_m, double d1_m, double l2_m, double d2_m, double temperature_k,
                                double nyquist_hz, char** json_out);
TSP_API tsp_status tsp_tube_from_resonance(double f0_hz, double q0, double temperature_k, char** json_out);

/* Filters the audio through a single tube's filterbank. */
TSP_API tsp_status tsp_filter_tube(const tsp_audio* in, double length_m, double diameter_m,
                                   double temperature_k, tsp_audio** out);
/* Chirp self-test. q0_override <= 0 keeps the physical Q0. The report's
   "result" field is "PASS" or "FAIL"; a FAIL is still TSP_OK. */
TSP_API tsp_status tsp_validate_tube(double length_m, double diameter_m, double temperature_k,
                                     double q0_override, char** json_out);

/* Pitch */
TSP_API tsp_status tsp_pitch_track(const tsp_audio* audio, char** json_out);

/* Surrogate speaker model. mfcc_json may be NULL for corpus-derived defaults. */
TSP_API tsp_status tsp_model_enroll(const char* corpus_dir, const char* mfcc_json, tsp_model** out,
                                    char** report_json);
TSP_API tsp_status tsp_model_load(const char* path, tsp_model** out);
TSP_API tsp_status tsp_model_save(const tsp_model* model, const char* path);
TSP_API tsp_status tsp_model_identify(const tsp_model* model, const tsp_audio* audio, char** json_out);
TSP_API void tsp_model_free(tsp_model* model);

/* External model behind the line-delimited JSON adapter protocol. */
TSP_API tsp_status tsp_adapter_open(const char* command, double timeout_s, tsp_adapter** out);
TSP_API tsp_status tsp_adapter_identify(tsp_adapter* adapter, const tsp_audio* audio, char** json_out);
TSP_API void tsp_adapter_free(tsp_adapter* adapter);

/* Run configuration. path may be NULL for defaults resolved against the
   working directory. overrides_json is an object with any of: seed, jobs,
   temperature_K, output_dir, corpus_dir, model, adapter, timeout_s,
   per_target_budget, population, max_iterations, strategy, mode, d1_m,
   signals_dir, synthetic_count, study_seed. */
TSP_API tsp_status tsp_config_load(const char* path, tsp_config** out);
TSP_API tsp_status tsp_config_apply(tsp_config* config, const char* overrides_json);
TSP_API tsp_status tsp_config_to_json(const tsp_config* config, char** json_out);
TSP_API void tsp_config_free(tsp_config* config);

/* Experiments. Each writes its JSON and CSV under the configured output
   directory and returns the JSON document. */
TSP_API tsp_status tsp_attack(const tsp_config* config, const char* attacker_dir, const char* target,
                              char** json_out);
TSP_API tsp_status tsp_reachable(const tsp_config* config, const char* attacker_dir, const char* exclude,
                                 char** json_out);
TSP_API tsp_status tsp_pitch_study(const tsp_config* config, char** json_out);

/* Statistics */
TSP_API tsp_status tsp_stats_confidence_gap(const tsp_config* config, const char* clean_dir,
                                            const char* adversarial_dir, char** json_out);
/* nonvictims_json: array of labels, or NULL for every other enrolled label. */
TSP_API tsp_status tsp_stats_similarity(const tsp_config* config, const char* attack_dir, const char* victim,
                                        const char* nonvictims_json, char** json_out);
/* runs_json: array of label arrays. */
TSP_API tsp_status tsp_stats_consistency(const char* runs_json, char** json_out);
/* Both arguments: objects mapping utterance id to a label or null. */
TSP_API tsp_status tsp_stats_match_rate(const char* simulated_json, const char* second_json, char** json_out);

/* Planted-instance corpus. spec_json keys: seed, distractors, enroll_utts,
   attack_utts, duration_s, sample_rate, tubes [{label, f0_Hz, Q0}]. */
TSP_API tsp_status tsp_synth_corpus(const char* spec_json, const char* out_dir, char** json_out);

#ifdef __cplusplus
}
#endif

#endif
