#ifndef FEDSTACK_H
#define FEDSTACK_H

/* Generated from the fedstack-ffi crate; regenerate with cargo build, do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Selects which per-round series `fedstack_run_series` copies out.
 */
typedef enum FedstackSeries {
  /**
   * Global training loss after each round's aggregation.
   */
  FEDSTACK_SERIES_LOSS = 0,
  /**
   * Round latency in seconds (0 for rounds with no participants).
   */
  FEDSTACK_SERIES_LATENCY = 1,
  /**
   * Number of devices whose upload completed, as a double.
   */
  FEDSTACK_SERIES_PARTICIPANTS = 2,
  /**
   * Tracked loss-gap bound per round, when enabled.
   */
  FEDSTACK_SERIES_BOUND = 3,
} FedstackSeries;

/**
 * Result code of a fallible call. Anything but `Ok` leaves a message
 * readable through `fedstack_last_error` on the calling thread.
 */
typedef enum FedstackStatus {
  FEDSTACK_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FEDSTACK_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  FEDSTACK_STATUS_INVALID_UTF8 = 2,
  /**
   * The configuration is malformed or inconsistent.
   */
  FEDSTACK_STATUS_CONFIG = 3,
  /**
   * The simulation or a solver failed.
   */
  FEDSTACK_STATUS_RUNTIME = 4,
  /**
   * The output buffer cannot hold the requested data; the required
   * length was written to the `written` argument.
   */
  FEDSTACK_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * The requested quantity does not exist for this run (for example
   * the bound series when bound tracking is off).
   */
  FEDSTACK_STATUS_UNAVAILABLE = 6,
} FedstackStatus;

/**
 * Opaque simulation configuration handle.
 */
typedef struct FedstackConfig FedstackConfig;

/**
 * Opaque finished-run handle.
 */
typedef struct FedstackRun FedstackRun;

/**
 * One solved transmission opportunity: the time-optimal CPU share and
 * power share for a single device on a single sub-channel, or a flag
 * that no split fits the energy budget.
 */
typedef struct FedstackAllocation {
  /**
   * 1 when a feasible split exists, 0 otherwise (remaining fields 0).
   */
  int32_t feasible;
  /**
   * CPU-frequency share in (0, 1].
   */
  double tau;
  /**
   * Transmit-power share in (0, 1].
   */
  double p;
  /**
   * Resulting computation-plus-upload time, seconds.
   */
  double time_s;
  /**
   * Resulting energy drawn from the per-round budget, joules.
   */
  double energy_j;
} FedstackAllocation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never freed.
 */
const char *fedstack_version(void);

/**
 * Message from the most recent failure on this thread, empty if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *fedstack_last_error(void);

/**
 * Creates a configuration with the benchmark defaults.
 * Release with `fedstack_config_free`.
 */
struct FedstackConfig *fedstack_config_new(void);

/**
 * Parses a TOML configuration document. Returns null on error with the
 * parse or validation message in `fedstack_last_error`.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string or null.
 */
struct FedstackConfig *fedstack_config_from_toml(const char *text);

/**
 * Releases a configuration handle. Null is a no-op.
 *
 * # Safety
 * `cfg` must be a pointer returned by a `fedstack_config_*` constructor
 * that has not been freed yet.
 */
void fedstack_config_free(struct FedstackConfig *cfg);

/**
 * Sets the master RNG seed.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum FedstackStatus fedstack_config_set_seed(struct FedstackConfig *cfg, uint64_t seed);

/**
 * Sets the number of communication rounds.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum FedstackStatus fedstack_config_set_rounds(struct FedstackConfig *cfg, size_t rounds);

/**
 * Sets the device-selection scheme by token: `"aou"`, `"random"`,
 * `"cluster"`, or `"fixed"`.
 *
 * # Safety
 * `cfg` must be a live configuration handle; `scheme` a valid string.
 */
enum FedstackStatus fedstack_config_set_scheme(struct FedstackConfig *cfg, const char *scheme);

/**
 * The resolved configuration echoed as TOML. Release the string with
 * `fedstack_string_free`; returns null on error.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
char *fedstack_config_echo(const struct FedstackConfig *cfg);

/**
 * Runs a full simulation. Returns a run handle to release with
 * `fedstack_run_free`, or null with `fedstack_last_error` set.
 *
 * # Safety
 * `cfg` must be a live configuration handle. The configuration is
 * copied; the handle stays owned by the caller.
 */
struct FedstackRun *fedstack_run(const struct FedstackConfig *cfg);

/**
 * Releases a run handle. Null is a no-op.
 *
 * # Safety
 * `run` must be a pointer returned by `fedstack_run` not yet freed.
 */
void fedstack_run_free(struct FedstackRun *run);

/**
 * Number of simulated rounds (0 for a null handle).
 *
 * # Safety
 * `run` must be a live run handle or null.
 */
size_t fedstack_run_round_count(const struct FedstackRun *run);

/**
 * Global loss after the final round (NaN for a null handle).
 *
 * # Safety
 * `run` must be a live run handle or null.
 */
double fedstack_run_final_loss(const struct FedstackRun *run);

/**
 * Sum of per-round latencies in seconds (NaN for a null handle).
 *
 * # Safety
 * `run` must be a live run handle or null.
 */
double fedstack_run_cumulative_time(const struct FedstackRun *run);

/**
 * Copies one per-round series into `buf` as doubles.
 *
 * `written` always receives the series length. Passing a null `buf`
 * with `len = 0` queries the required length. A too-small buffer
 * returns `BufferTooSmall` and copies nothing.
 *
 * # Safety
 * `run` must be a live run handle; `buf` must point to at least `len`
 * doubles (or be null when `len` is 0); `written` must be non-null.
 */
enum FedstackStatus fedstack_run_series(const struct FedstackRun *run,
                                        enum FedstackSeries kind,
                                        double *buf,
                                        size_t len,
                                        size_t *written);

/**
 * Serializes the run summary as JSON. Release with
 * `fedstack_string_free`; returns null on error.
 *
 * # Safety
 * `run` must be a live run handle.
 */
char *fedstack_run_summary_json(const struct FedstackRun *run);

/**
 * Writes `rounds.csv`, `summary.json`, and `config_echo.toml` into
 * `dir`, creating it if needed.
 *
 * # Safety
 * `run` must be a live run handle; `dir` a valid string.
 */
enum FedstackStatus fedstack_run_write_outputs(const struct FedstackRun *run, const char *dir);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be a string returned by this library not yet freed.
 */
void fedstack_string_free(char *s);

/**
 * Solves the time-optimal CPU/power split for one device-channel pair
 * under the configuration's system model and energy budget.
 *
 * The channel gain is derived from `distance_m` (meters from the
 * server) and `fading` (a unit-mean small-scale fading draw).
 *
 * # Safety
 * `cfg` must be a live configuration handle; `out` non-null.
 */
enum FedstackStatus fedstack_solve_allocation(const struct FedstackConfig *cfg,
                                              size_t samples,
                                              double distance_m,
                                              double fading,
                                              struct FedstackAllocation *out);

/**
 * Computes an exchange-stable assignment of `k` scheduled devices to
 * `k` sub-channels from a `k`×`k` row-major table of minimal times:
 * `times[channel * k + device]`, with `INFINITY` marking pairs that
 * cannot meet the energy budget. Entries must otherwise be positive.
 *
 * `assignment` receives, per device slot, the assigned channel index.
 * `swap_count`, when non-null, receives the number of improving swaps
 * the search performed.
 *
 * # Safety
 * `times` must point to `k * k` doubles; `assignment` to `k` values;
 * `swap_count` may be null.
 */
enum FedstackStatus fedstack_stable_match(size_t k,
                                          const double *times,
                                          size_t *assignment,
                                          size_t *swap_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDSTACK_H */
