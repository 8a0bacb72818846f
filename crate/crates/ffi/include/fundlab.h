#ifndef FUNDLAB_H
#define FUNDLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_DOMAIN = 1,
  FL_STATUS_RESOURCE = 2,
  FL_STATUS_STABILITY = 3,
  FL_STATUS_EVALUATION = 4,
  FL_STATUS_NUMERICAL = 5,
  FL_STATUS_PARSE = 6,
  FL_STATUS_IO = 7,
  FL_STATUS_NULL_POINTER = 8,
  FL_STATUS_PANIC = 9,
} FlStatus;

typedef enum FlFeeKind {
  FL_FEE_KIND_HEDGE = 0,
  FL_FEE_KIND_MUTUAL = 1,
} FlFeeKind;

typedef enum FlBranch {
  FL_BRANCH_FUND = 0,
  FL_BRANCH_PRIVATE = 1,
  FL_BRANCH_TIE = 2,
} FlBranch;

typedef enum FlTarget {
  FL_TARGET_WEALTH = 0,
  FL_TARGET_FUND = 1,
} FlTarget;

/**
 * Opaque validated scenario.
 */
typedef struct FlScenario FlScenario;

typedef struct FlSimConfig {
  double horizon;
  double dt;
  size_t n_paths;
  uint64_t seed;
  double x0;
  double f0;
  size_t memory_budget_mb;
} FlSimConfig;

typedef struct FlMarket {
  double mu_x;
  double sigma_x;
  double mu_f;
  double sigma_f;
  double rho;
} FlMarket;

typedef struct FlWelfare {
  double fund_branch;
  double private_branch;
  double value;
  enum FlBranch active_branch;
} FlWelfare;

typedef struct FlEsr {
  double value;
  double std_error;
  double horizon;
  size_t n_paths;
} FlEsr;

typedef struct FlHjbSummary {
  double beta;
  double max_abs_residual;
  double max_abs_boundary_residual;
  double max_policy_deviation;
  size_t n_nodes;
} FlHjbSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Simulation settings with the library defaults.
 */
struct FlSimConfig fl_sim_config_default(void);

/**
 * Validates the inputs and stores a new scenario handle in `out`. The
 * handle must be released with [`fl_scenario_free`].
 *
 * # Safety
 * `market` and `sim` must point to valid structs and `out` to writable storage.
 */
enum FlStatus fl_scenario_new(const struct FlMarket *market,
                              enum FlFeeKind fee_kind,
                              double fee_rate,
                              double gamma,
                              const struct FlSimConfig *sim,
                              struct FlScenario **out);

/**
 * Releases a scenario handle. Null is ignored.
 *
 * # Safety
 * `scenario` must come from [`fl_scenario_new`] and not be used afterwards.
 */
void fl_scenario_free(struct FlScenario *scenario);

/**
 * Number of time steps and whether the risk aversion lies in `(0, 1]`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FlStatus fl_scenario_info(const struct FlScenario *scenario,
                               size_t *n_steps,
                               bool *proven_regime);

/**
 * # Safety
 * `out` must be writable.
 */
enum FlStatus fl_effective_risk_aversion(double alpha, double gamma, double *out);

/**
 * Closed-form optimal equivalent safe rate of the scenario's fee scheme.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FlStatus fl_esr_closed(const struct FlScenario *scenario, struct FlWelfare *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum FlStatus fl_attention_threshold_hedge(double alpha, double gamma, double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum FlStatus fl_fee_indifference_alpha(const struct FlMarket *market, double gamma, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum FlStatus fl_merton_proportion(double mu, double sigma, double gamma, double *out);

/**
 * Optimal constant fund proportion and the private Merton proportion
 * applied to wealth net of earned fees.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FlStatus fl_optimal_policies(const struct FlScenario *scenario,
                                  double *fund_proportion,
                                  double *private_merton);

/**
 * Monte Carlo equivalent safe rate under the optimal policies.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FlStatus fl_estimate_esr(const struct FlScenario *scenario,
                              enum FlTarget target,
                              struct FlEsr *out);

/**
 * HJB plug-in check of the log-utility candidate on the default grid.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FlStatus fl_hjb_check(double delta,
                           double alpha,
                           const struct FlMarket *market,
                           struct FlHjbSummary *out);

/**
 * Message of the last failure on this thread, or null. Release it with
 * [`fl_string_free`].
 */
char *fl_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void fl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUNDLAB_H */
