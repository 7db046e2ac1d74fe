#ifndef LPAUDIT_H
#define LPAUDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum LpaStatus {
  LPA_STATUS_OK = 0,
  LPA_STATUS_NULL_ARGUMENT = 1,
  LPA_STATUS_INVALID_UTF8 = 2,
  LPA_STATUS_INVALID_ARGUMENT = 3,
  LPA_STATUS_CONFIG = 4,
  LPA_STATUS_DATASET = 5,
  LPA_STATUS_IO = 6,
  LPA_STATUS_NOT_FOUND = 7,
  LPA_STATUS_SCORE = 8,
  LPA_STATUS_PANIC = 99,
} LpaStatus;

/**
 * Which inferred location to read.
 */
typedef enum LpaLocationKind {
  LPA_LOCATION_KIND_HOME = 0,
  LPA_LOCATION_KIND_WORK = 1,
} LpaLocationKind;

/**
 * Validated audit configuration.
 */
typedef struct LpaConfig LpaConfig;

/**
 * Result of an audit run.
 */
typedef struct LpaReport LpaReport;

/**
 * A chosen location. `address` is NULL when the cluster has no address;
 * release it with [`lpa_string_free`].
 */
typedef struct LpaLocation {
  uint32_t cluster_id;
  double lat;
  double lon;
  double score;
  char *address;
} LpaLocation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *lpa_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next lpaudit call on the same thread.
 */
const char *lpa_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void lpa_string_free(char *s);

/**
 * Parses and validates a JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum LpaStatus lpa_config_from_json(const char *json, struct LpaConfig **out);

/**
 * # Safety
 * `cfg` must come from [`lpa_config_from_json`] and not be freed twice.
 */
void lpa_config_free(struct LpaConfig *cfg);

/**
 * Runs the audit described by `cfg`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum LpaStatus lpa_audit_run(const struct LpaConfig *cfg, struct LpaReport **out);

/**
 * # Safety
 * `report` must come from [`lpa_audit_run`] and not be freed twice.
 */
void lpa_report_free(struct LpaReport *report);

/**
 * Number of users in the report.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum LpaStatus lpa_report_user_count(const struct LpaReport *report, size_t *out);

/**
 * Id of the user at `index` (users are sorted by id).
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum LpaStatus lpa_report_user_id(const struct LpaReport *report, size_t index, char **out);

/**
 * Reads the home or work verdict of `user_id`. Returns `NotFound` when the
 * user is absent or no location was inferred.
 *
 * # Safety
 * `report` must be a live handle, `user_id` NUL-terminated and `out`
 * writable.
 */
enum LpaStatus lpa_report_location(const struct LpaReport *report,
                                   const char *user_id,
                                   enum LpaLocationKind kind,
                                   struct LpaLocation *out);

/**
 * Serializes the whole report as JSON lines.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum LpaStatus lpa_report_to_jsonl(const struct LpaReport *report, char **out);

/**
 * Writes the report as JSON lines to `path`.
 *
 * # Safety
 * `report` must be a live handle; `path` NUL-terminated.
 */
enum LpaStatus lpa_report_write(const struct LpaReport *report, const char *path);

/**
 * Great-circle distance in meters.
 *
 * # Safety
 * `out` must be writable.
 */
enum LpaStatus lpa_haversine_m(double lat1, double lon1, double lat2, double lon2, double *out);

/**
 * Precision and recall of a confusion count; zero when undefined.
 *
 * # Safety
 * `precision` and `recall` must be writable.
 */
enum LpaStatus lpa_confusion_rates(size_t tp,
                                   size_t fp,
                                   size_t fn_,
                                   double *precision,
                                   double *recall);

/**
 * Scores a report file against a ground-truth CSV; the result is the score
 * table as JSON.
 *
 * # Safety
 * Paths must be NUL-terminated; `out` must be writable.
 */
enum LpaStatus lpa_score_files(const char *report_path, const char *truth_path, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPAUDIT_H */
