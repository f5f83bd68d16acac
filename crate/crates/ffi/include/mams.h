#ifndef MAMS_H
#define MAMS_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. 1 to 3 match the command-line exit codes.
 */
typedef enum MamsStatus {
  MAMS_STATUS_OK = 0,
  /**
   * Malformed input such as a spec document that does not parse.
   */
  MAMS_STATUS_PARSE_ERROR = 1,
  /**
   * Invalid or reducible chain, unstable system, bad parameter.
   */
  MAMS_STATUS_DOMAIN_ERROR = 2,
  MAMS_STATUS_NUMERICAL_ERROR = 3,
  MAMS_STATUS_NULL_POINTER = 4,
  MAMS_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * A Rust panic was caught; the handle involved should be freed.
   */
  MAMS_STATUS_PANIC = 6,
} MamsStatus;

/**
 * A marked Markov chain.
 */
typedef struct MamsChain MamsChain;

/**
 * A stable queue built from an arrival chain and a completion chain.
 */
typedef struct MamsSystem MamsSystem;

typedef struct MamsBounds {
  double lambda;
  double mu;
  double rho;
  double explicit_term;
  double lower;
  double upper;
  double heavy_traffic_constant;
  double e_delta_arrival;
  double e_delta_completion;
} MamsBounds;

typedef struct MamsSimConfig {
  uint64_t seed;
  uint64_t stream;
  uint64_t num_events;
  double warmup_fraction;
  size_t num_batches;
} MamsSimConfig;

typedef struct MamsEstimate {
  double mean;
  double ci_half_width;
} MamsEstimate;

typedef struct MamsSimResult {
  struct MamsEstimate e_q;
  struct MamsEstimate p_empty;
  struct MamsEstimate unused_rate;
  struct MamsEstimate e_u_term;
  struct MamsEstimate drift;
  uint64_t events;
  uint64_t arrivals;
  uint64_t completions;
  double simulated_time;
} MamsSimResult;

typedef struct MamsTwoLevelBounds {
  double lambda;
  double rho;
  double delta_h;
  double delta_l;
  double e_delta_arrival;
  double heavy_traffic_constant;
  double lower;
  double upper_fast;
  /**
   * NaN unless `has_upper_slow`.
   */
  double upper_slow;
  bool has_upper_slow;
  double upper;
} MamsTwoLevelBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the length of the
 * full message plus one, so a caller can size its buffer. `buf` may be
 * null when `len` is 0.
 */
size_t mams_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mams_version(void);

/**
 * Builds and validates a chain from parallel transition arrays. `labels`
 * may be null, in which case states are named "0", "1", ... On success
 * `*out` owns a new handle.
 */
enum MamsStatus mams_chain_new(size_t num_states,
                               const char *const *labels,
                               size_t num_transitions,
                               const size_t *from,
                               const size_t *to,
                               const uint8_t *mark,
                               const double *rate,
                               struct MamsChain **out);

/**
 * Releases a chain. Null is ignored.
 */
void mams_chain_free(struct MamsChain *chain);

/**
 * Number of states, or 0 for a null handle.
 */
size_t mams_chain_num_states(const struct MamsChain *chain);

/**
 * Writes the stationary distribution into `pi` (capacity `len`) and the
 * long-run event rate into `event_rate` (may be null).
 */
enum MamsStatus mams_chain_stationary(const struct MamsChain *chain,
                                      double *pi,
                                      size_t len,
                                      double *event_rate);

/**
 * Writes the relative values Δ (stationary mean zero) into `delta`.
 */
enum MamsStatus mams_chain_relative_values(const struct MamsChain *chain,
                                           double *delta,
                                           size_t len);

/**
 * Builds a system from two chains (which stay owned by the caller).
 * Fails with `DomainError` when the load is not below one.
 */
enum MamsStatus mams_system_new(const struct MamsChain *arrival,
                                const struct MamsChain *completion,
                                struct MamsSystem **out);

/**
 * Builds a system from a JSON spec document (NUL-terminated UTF-8).
 */
enum MamsStatus mams_system_from_spec(const char *spec_json, struct MamsSystem **out);

/**
 * Releases a system. Null is ignored.
 */
void mams_system_free(struct MamsSystem *system);

enum MamsStatus mams_system_bounds(const struct MamsSystem *system, struct MamsBounds *out);

/**
 * Default simulation settings.
 */
struct MamsSimConfig mams_sim_config_default(void);

/**
 * Simulates the system. `config` may be null for the defaults.
 * `e_u_term` is always defined since the system is stable.
 */
enum MamsStatus mams_system_simulate(const struct MamsSystem *system,
                                     const struct MamsSimConfig *config,
                                     struct MamsSimResult *out);

/**
 * Closed-form analysis of the two-level arrival system with exponential
 * service. If `lambda_h < lambda_l` the levels are swapped.
 */
enum MamsStatus mams_two_level_bounds(double lambda_h,
                                      double lambda_l,
                                      double alpha_h,
                                      double alpha_l,
                                      double mu,
                                      struct MamsTwoLevelBounds *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAMS_H */
