#ifndef MDP_APPROX_H
#define MDP_APPROX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Certification outcome, as in [`MdpaBound::status`].
#define MDPA_CERTIFIED 0

#define MDPA_NOT_CERTIFIED 1

#define MDPA_UNCHECKED 2

typedef enum MdpaStatus {
  MDPA_STATUS_OK = 0,
  MDPA_STATUS_NULL_POINTER = 1,
  MDPA_STATUS_INVALID_INPUT = 2,
  MDPA_STATUS_DIMENSION = 3,
  MDPA_STATUS_CONVERGENCE = 4,
  MDPA_STATUS_UNSTABLE = 5,
  MDPA_STATUS_PANIC = 6,
} MdpaStatus;

// Values accepted by the `route` argument of [`mdpa_performance_loss_bound`].
typedef enum MdpaRoute {
  MDPA_ROUTE_POLICY_PAIR_APPROX = 0,
  MDPA_ROUTE_POLICY_PAIR_TRUE = 1,
  MDPA_ROUTE_OPTIMALITY_APPROX = 2,
  MDPA_ROUTE_OPTIMALITY_TRUE = 3,
  MDPA_ROUTE_OPEN_LOOP_APPROX = 4,
  MDPA_ROUTE_OPEN_LOOP_TRUE = 5,
} MdpaRoute;

// Values accepted by the `kind` argument of [`mdpa_ipm_distance`].
typedef enum MdpaIpmKind {
  MDPA_IPM_KIND_TOTAL_VARIATION = 0,
  // `aux` holds `n` point labels on the real line.
  MDPA_IPM_KIND_WASSERSTEIN_LABELS = 1,
  // `aux` holds an `n × n` distance matrix.
  MDPA_IPM_KIND_WASSERSTEIN_MATRIX = 2,
  // `aux` holds `n` weights, each at least 1.
  MDPA_IPM_KIND_WEIGHTED_TOTAL_VARIATION = 3,
} MdpaIpmKind;

// A finite MDP.
typedef struct MdpaMdp MdpaMdp;

// A true/approximate pair with both optima solved.
typedef struct MdpaSolvedPair MdpaSolvedPair;

typedef struct MdpaBound {
  // Weighted-norm bound; `+inf` when `gamma * kappa >= 1`.
  double bound;
  double kappa;
  double gamma_kappa;
  // The bounded quantity, or NaN when the true model was not solved.
  double realized;
  int32_t status;
} MdpaBound;

typedef struct MdpaLqrBound {
  double rho_d_star;
  double rho_d_pihat;
  double d_sigma;
  double alpha2;
  double kappa;
  double gamma_kappa;
  double bound;
  bool certified;
} MdpaLqrBound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into this library from the same thread.
const char *mdpa_last_error(void);

// Builds a model from a dense kernel (`n_states * n_actions * n_states`
// entries) and cost (`n_states * n_actions`).
//
// # Safety
// Array arguments must point to at least the stated number of values and
// `out` must be writable.
enum MdpaStatus mdpa_mdp_new_dense(uintptr_t n_states,
                                   uintptr_t n_actions,
                                   const double *kernel,
                                   const double *cost,
                                   double discount,
                                   struct MdpaMdp **out);

// # Safety
// `mdp` must come from [`mdpa_mdp_new_dense`] and not be used afterwards.
void mdpa_mdp_free(struct MdpaMdp *mdp);

// # Safety
// `mdp` must be null or a live handle.
uintptr_t mdpa_mdp_n_states(const struct MdpaMdp *mdp);

// # Safety
// `mdp` must be null or a live handle.
uintptr_t mdpa_mdp_n_actions(const struct MdpaMdp *mdp);

// Optimal value into `value_out` (`n_states` entries) and, when
// `policy_out` is not null, the greedy action per state.
//
// # Safety
// `mdp` must be a live handle; non-null outputs must hold `n_states` entries.
enum MdpaStatus mdpa_value_iteration(const struct MdpaMdp *mdp,
                                     double tol,
                                     uintptr_t max_iter,
                                     double *value_out,
                                     uintptr_t *policy_out);

// Value of the deterministic policy `policy` (`n_states` action indices).
//
// # Safety
// `mdp` must be a live handle; arrays must hold `n_states` entries.
enum MdpaStatus mdpa_policy_evaluation(const struct MdpaMdp *mdp,
                                       const uintptr_t *policy,
                                       double tol,
                                       uintptr_t max_iter,
                                       double *value_out);

// Expansion factor of `weight` under a deterministic policy.
//
// # Safety
// `mdp` must be a live handle; arrays must hold `n_states` entries.
enum MdpaStatus mdpa_kappa_policy(const struct MdpaMdp *mdp,
                                  const uintptr_t *policy,
                                  const double *weight,
                                  double *kappa_out);

// Expansion factor of `weight` over every action.
//
// # Safety
// `mdp` must be a live handle; `weight` must hold `n_states` entries.
enum MdpaStatus mdpa_kappa_model(const struct MdpaMdp *mdp,
                                 const double *weight,
                                 double *kappa_out);

// Solves the approximate model, evaluates its optimal policy in the true
// model and, when `solve_truth` is set, solves the true model too. The
// models are copied; the handles stay owned by the caller.
//
// # Safety
// `truth` and `approx` must be live handles and `out` writable.
enum MdpaStatus mdpa_pair_solve(const struct MdpaMdp *truth,
                                const struct MdpaMdp *approx,
                                double tol,
                                uintptr_t max_iter,
                                bool solve_truth,
                                struct MdpaSolvedPair **out);

// # Safety
// `pair` must come from [`mdpa_pair_solve`] and not be used afterwards.
void mdpa_pair_free(struct MdpaSolvedPair *pair);

// Value of the approximate model's optimal policy in the true model.
//
// # Safety
// `pair` must be a live handle; `value_out` must hold `n_states` entries.
enum MdpaStatus mdpa_pair_deployed_value(const struct MdpaSolvedPair *pair, double *value_out);

// Bound on the weighted loss of deploying the approximate optimal policy,
// with cost transform `(alpha1, alpha2)` and a route from [`MdpaRoute`].
//
// # Safety
// `pair` must be a live handle; `weight` must hold `n_states` entries.
enum MdpaStatus mdpa_performance_loss_bound(const struct MdpaSolvedPair *pair,
                                            const double *weight,
                                            double kappa,
                                            double alpha1,
                                            double alpha2,
                                            uint32_t route,
                                            struct MdpaBound *out);

// Distance between two distributions on `n` points. `aux` depends on `kind`
// (see [`MdpaIpmKind`]) and may be null for total variation.
//
// # Safety
// `p` and `q` must hold `n` entries, `aux` as required by `kind`.
enum MdpaStatus mdpa_ipm_distance(uint32_t kind,
                                  uintptr_t n,
                                  const double *p,
                                  const double *q,
                                  const double *aux,
                                  double *out);

// Bound for deploying the approximate model's optimal gain in the true
// linear-quadratic model with weight `1 + ell * |s|^2`. Matrices are
// row-major. A NaN `alpha2` picks the offset that cancels the noise term.
//
// # Safety
// Matrix arguments must hold the stated number of entries and `out` must be
// writable.
enum MdpaStatus mdpa_lqr_bound(uintptr_t n_states,
                               uintptr_t n_inputs,
                               const double *a,
                               const double *b,
                               const double *q,
                               const double *r,
                               const double *sigma,
                               const double *a_hat,
                               const double *b_hat,
                               const double *q_hat,
                               const double *r_hat,
                               const double *sigma_hat,
                               double discount,
                               double ell,
                               double alpha2,
                               struct MdpaLqrBound *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MDP_APPROX_H */
