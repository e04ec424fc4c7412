#ifndef MATCYCLE_H
#define MATCYCLE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum McStatus {
  MC_STATUS_OK = 0,
  /**
   * Infeasible or unbounded model.
   */
  MC_STATUS_INFEASIBLE = 1,
  /**
   * Bad input data, configuration or domain violation.
   */
  MC_STATUS_CONFIG = 2,
  MC_STATUS_SOLVER = 3,
  MC_STATUS_NULL_ARGUMENT = 4,
  /**
   * Year, index or name not present in a result.
   */
  MC_STATUS_NOT_FOUND = 5,
  MC_STATUS_PANIC = 6,
} McStatus;

/**
 * Loaded dataset.
 */
typedef struct McDataset McDataset;

/**
 * Completed scenario run.
 */
typedef struct McScenarioResult McScenarioResult;

typedef struct McAbatement {
  double average;
  /**
   * NaN when no dual was given.
   */
  double marginal_terminal;
} McAbatement;

typedef struct McYearSummary {
  uint32_t year;
  uint32_t width;
  double cap;
  double emissions;
  double annual_cost;
  /**
   * NaN when the cap row has no dual.
   */
  double marginal_abatement;
  double primary_energy;
  double final_energy;
} McYearSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Owned by the library.
 */
const char *mc_last_error(void);

/**
 * Library version as a static string.
 */
const char *mc_version(void);

/**
 * Normal residence-time density at age `dt` years.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum McStatus mc_retention_fraction(double mu, double sigma, double dt, double *out);

/**
 * Equivalent annual cost of an investment.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum McStatus mc_annualized_cost(double invest, double lifetime, double discount_rate, double *out);

/**
 * Cap in `year` for anchors given as parallel arrays of years and reduction fractions.
 *
 * # Safety
 * `years` and `reductions` must point to `n` elements; `out` must be valid for writes.
 */
enum McStatus mc_interpolate_cap(double base,
                                 const uint32_t *years,
                                 const double *reductions,
                                 size_t n,
                                 uint32_t year,
                                 double *out);

/**
 * Average and terminal marginal abatement cost. `terminal_dual` is the cap-row
 * dual of the last year; pass `has_dual = false` when there is none.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum McStatus mc_abatement_metrics(double cost_delta,
                                   double co2_saved,
                                   double terminal_dual,
                                   bool has_dual,
                                   struct McAbatement *out);

/**
 * Loads a dataset directory.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be valid for writes.
 */
enum McStatus mc_dataset_load(const char *path, struct McDataset **out);

/**
 * # Safety
 * `ds` must come from `mc_dataset_load` and not be used afterwards. Null is ignored.
 */
void mc_dataset_free(struct McDataset *ds);

/**
 * Counts of commodities, technologies and validation diagnostics.
 *
 * # Safety
 * `ds` must be a live handle; out-pointers may be null to skip a value.
 */
enum McStatus mc_dataset_info(const struct McDataset *ds,
                              size_t *commodities,
                              size_t *technologies,
                              size_t *diagnostics);

/**
 * Loads and runs a scenario file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be valid for writes.
 */
enum McStatus mc_scenario_run(const char *path, struct McScenarioResult **out);

/**
 * # Safety
 * `res` must come from `mc_scenario_run` and not be used afterwards. Null is ignored.
 */
void mc_result_free(struct McScenarioResult *res);

/**
 * Number of pathway steps in a result.
 *
 * # Safety
 * `res` must be a live handle or null (gives 0).
 */
size_t mc_result_year_count(const struct McScenarioResult *res);

/**
 * Per-step figures for step `index`.
 *
 * # Safety
 * `res` must be a live handle; `out` must be valid for writes.
 */
enum McStatus mc_result_year(const struct McScenarioResult *res,
                             size_t index,
                             struct McYearSummary *out);

/**
 * Cumulative cost, transformation cost and cumulative CO2 saved.
 *
 * # Safety
 * `res` must be a live handle; out-pointers may be null to skip a value.
 */
enum McStatus mc_result_totals(const struct McScenarioResult *res,
                               double *cumulative_cost,
                               double *transformation_cost,
                               double *co2_saved);

/**
 * Recycling rate of `material` in `year`.
 *
 * # Safety
 * `res` must be a live handle; `material` a nul-terminated string; `out` valid for writes.
 */
enum McStatus mc_result_recycling_rate(const struct McScenarioResult *res,
                                       uint32_t year,
                                       const char *material,
                                       double *out);

/**
 * Writes the result tables, summary and report into directory `dir`.
 *
 * # Safety
 * `res` must be a live handle; `dir` a nul-terminated string.
 */
enum McStatus mc_result_write(const struct McScenarioResult *res, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MATCYCLE_H */
