#ifndef COTS_H
#define COTS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. The first four values match the exit
 * codes of the command-line tool.
 */
typedef enum CotsStatus {
  COTS_STATUS_OK = 0,
  /**
   * A campaign found at least one fault.
   */
  COTS_STATUS_FAULT = 1,
  /**
   * Input was rejected, e.g. a syntax or binding error.
   */
  COTS_STATUS_INVALID = 2,
  /**
   * A campaign could not reach the service.
   */
  COTS_STATUS_TRANSPORT = 3,
  COTS_STATUS_NULL_ARGUMENT = 4,
  /**
   * A string argument was not UTF-8.
   */
  COTS_STATUS_UTF8 = 5,
  /**
   * An unexpected internal failure.
   */
  COTS_STATUS_INTERNAL = 6,
} CotsStatus;

/**
 * A running mock service.
 */
typedef struct CotsMock CotsMock;

/**
 * A parsed model.
 */
typedef struct CotsModel CotsModel;

/**
 * Generators, assertions, aliases and auth for a model.
 */
typedef struct CotsPreamble CotsPreamble;

/**
 * A loaded OpenAPI document.
 */
typedef struct CotsSpec CotsSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on this thread.
 */
const char *cots_last_error(void);

/**
 * Releases a string returned by this library.
 */
void cots_string_free(char *s);

/**
 * Parses model text. `name` selects a model when the text defines
 * several and may be null.
 */
enum CotsStatus cots_model_parse(const char *text, const char *name, struct CotsModel **out);

/**
 * Renders a model back to concrete syntax.
 */
enum CotsStatus cots_model_render(const struct CotsModel *model, char **out);

void cots_model_free(struct CotsModel *model);

/**
 * Loads an OpenAPI document from `len` bytes, YAML when `yaml` is set.
 */
enum CotsStatus cots_spec_load(const uint8_t *bytes, size_t len, bool yaml, struct CotsSpec **out);

void cots_spec_free(struct CotsSpec *spec);

/**
 * Loads a preamble file, JSON or YAML by extension.
 */
enum CotsStatus cots_preamble_load(const char *path, struct CotsPreamble **out);

/**
 * Parses a JSON preamble. `fromFile` sources resolve against the
 * working directory.
 */
enum CotsStatus cots_preamble_parse(const char *json, struct CotsPreamble **out);

void cots_preamble_free(struct CotsPreamble *preamble);

/**
 * Checks that `model` binds to `spec`. `preamble` may be null.
 */
enum CotsStatus cots_validate(const struct CotsModel *model,
                              const struct CotsSpec *spec,
                              const struct CotsPreamble *preamble);

/**
 * Counts the traces of `model` with `rec_bound` unfoldings per binder,
 * using the preamble's oracle domains.
 */
enum CotsStatus cots_enumerate_count(const struct CotsModel *model,
                                     const struct CotsPreamble *preamble,
                                     size_t rec_bound,
                                     size_t *out);

/**
 * Runs `runs` runs with seeds `seed`, `seed + 1`, ... against `base_url`
 * and returns a JSON summary with verdict counts, coverage and the run
 * log. The status is `Ok`, `Fault` or `Transport` as for the CLI.
 */
enum CotsStatus cots_run_campaign(const struct CotsModel *model,
                                  const struct CotsSpec *spec,
                                  const struct CotsPreamble *preamble,
                                  const char *base_url,
                                  size_t runs,
                                  uint64_t seed,
                                  char **out_json);

/**
 * Starts the mock service on `port` (0 picks a free port) with the
 * comma-separated fault flags in `faults`, which may be null.
 */
enum CotsStatus cots_mock_start(uint16_t port, const char *faults, struct CotsMock **out);

/**
 * Base URL of a running mock, e.g. `http://127.0.0.1:41234`.
 */
enum CotsStatus cots_mock_base_url(const struct CotsMock *mock, char **out);

/**
 * Clears all stored data of a running mock.
 */
enum CotsStatus cots_mock_reset(const struct CotsMock *mock);

/**
 * Replaces the active fault flags of a running mock.
 */
enum CotsStatus cots_mock_set_faults(const struct CotsMock *mock, const char *faults);

/**
 * Stops the mock and releases it.
 */
void cots_mock_free(struct CotsMock *mock);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COTS_H */
