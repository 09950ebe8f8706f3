#ifndef WAVELAB_H
#define WAVELAB_H

/* Generated by cbindgen from wavelab-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status of every fallible call.
 */
typedef enum WavelabStatus {
  WAVELAB_STATUS_OK = 0,
  WAVELAB_STATUS_INVALID_ARGUMENT = 1,
  WAVELAB_STATUS_NUMERICAL_FAILURE = 2,
  WAVELAB_STATUS_INTERNAL_ERROR = 3,
} WavelabStatus;

/*
 HUM solve output: control signal plus verification numbers.
 */
typedef struct WavelabHumSolution WavelabHumSolution;

/*
 Grid plus coefficient field: the spatial setting of every experiment.
 */
typedef struct WavelabLab WavelabLab;

/*
 Recorded simulation run.
 */
typedef struct WavelabTrajectory WavelabTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *wavelab_version(void);

/*
 Copies the last error message of this thread into `buf` (truncating) and
 returns its full length including the terminator.

 # Safety
 `buf` must point to `len` writable bytes (or be null with `len` 0).
 */
size_t wavelab_last_error_message(char *buf, size_t len);

/*
 Creates a laboratory on (x_left, x_right) with unit wave coefficient.

 # Safety
 `out` must be a valid pointer to a `WavelabLab*` slot.
 */
enum WavelabStatus wavelab_lab_new(double x_left,
                                   double x_right,
                                   size_t n_cells,
                                   struct WavelabLab **out);

/*
 Creates a laboratory with a coefficient sampled at the `n_cells` cell
 midpoints; pass a null pointer for the unit coefficient.

 # Safety
 `midpoints` is either null or points to `midpoints_len` doubles; `out`
 must be valid.
 */
enum WavelabStatus wavelab_lab_new_with_coefficient(double x_left,
                                                    double x_right,
                                                    size_t n_cells,
                                                    const double *midpoints,
                                                    size_t midpoints_len,
                                                    struct WavelabLab **out);

/*
 # Safety
 `lab` must come from a `wavelab_lab_new*` call and not be freed twice.
 */
void wavelab_lab_free(struct WavelabLab *lab);

/*
 Number of grid nodes (state vectors carry this many entries).

 # Safety
 `lab` must be a live handle.
 */
size_t wavelab_lab_n_nodes(const struct WavelabLab *lab);

/*
 Copies the node coordinates into `out`.

 # Safety
 `out` must hold `len >= n_nodes` doubles.
 */
enum WavelabStatus wavelab_lab_node_coords(const struct WavelabLab *lab, double *out, size_t len);

/*
 Simulates the free wave from (y0, v0) over `horizon` at the given
 Courant number (pass 0 for the default).

 # Safety
 `y0`/`v0` hold `n_nodes` doubles; `out` must be valid.
 */
enum WavelabStatus wavelab_simulate_free_wave(const struct WavelabLab *lab,
                                              const double *y0,
                                              const double *v0,
                                              size_t n_nodes,
                                              double horizon,
                                              double cfl,
                                              struct WavelabTrajectory **out);

/*
 # Safety
 `traj` must come from this library and not be freed twice.
 */
void wavelab_trajectory_free(struct WavelabTrajectory *traj);

/*
 Number of recorded time levels.

 # Safety
 `traj` must be a live handle.
 */
size_t wavelab_trajectory_len(const struct WavelabTrajectory *traj);

/*
 Copies the time stamps.

 # Safety
 `out` must hold `len >= wavelab_trajectory_len` doubles.
 */
enum WavelabStatus wavelab_trajectory_times(const struct WavelabTrajectory *traj,
                                            double *out,
                                            size_t len);

/*
 Copies the energy series E(t_n).

 # Safety
 As for `wavelab_trajectory_times`.
 */
enum WavelabStatus wavelab_trajectory_energy(const struct WavelabTrajectory *traj,
                                             double *out,
                                             size_t len);

/*
 Copies the boundary-trace series of one side (0 = left, 1 = right).

 # Safety
 As for `wavelab_trajectory_times`.
 */
enum WavelabStatus wavelab_trajectory_flux(const struct WavelabTrajectory *traj,
                                           int side,
                                           double *out,
                                           size_t len);

/*
 Solves the boundary HUM control problem for data (y0, y1) and verifies
 it by replay. `side`: 0 = left, 1 = right.

 # Safety
 `y0`/`y1` hold `n_nodes` doubles; `out` must be valid.
 */
enum WavelabStatus wavelab_hum_boundary_solve(const struct WavelabLab *lab,
                                              int side,
                                              double horizon,
                                              double filter_fraction,
                                              const double *y0,
                                              const double *y1,
                                              size_t n_nodes,
                                              struct WavelabHumSolution **out);

/*
 # Safety
 `sol` must come from this library and not be freed twice.
 */
void wavelab_hum_solution_free(struct WavelabHumSolution *sol);

/*
 Length of the control signal (one value per time level).

 # Safety
 `sol` must be a live handle.
 */
size_t wavelab_hum_control_len(const struct WavelabHumSolution *sol);

/*
 Copies the control signal.

 # Safety
 `out` must hold `len >= wavelab_hum_control_len` doubles.
 */
enum WavelabStatus wavelab_hum_control_signal(const struct WavelabHumSolution *sol,
                                              double *out,
                                              size_t len);

/*
 Terminal energy ratio of the verification replay, measured in the kept
 (filtered) subspace.

 # Safety
 `sol` must be a live handle.
 */
double wavelab_hum_terminal_ratio(const struct WavelabHumSolution *sol);

/*
 Raw (unfiltered) terminal energy ratio of the replay.

 # Safety
 `sol` must be a live handle.
 */
double wavelab_hum_raw_terminal_ratio(const struct WavelabHumSolution *sol);

/*
 The quadratic form <Lambda phi, phi> = ||v||^2.

 # Safety
 `sol` must be a live handle.
 */
double wavelab_hum_control_norm_sq(const struct WavelabHumSolution *sol);

/*
 Conjugate-gradient iterations of the solve.

 # Safety
 `sol` must be a live handle.
 */
size_t wavelab_hum_cg_iterations(const struct WavelabHumSolution *sol);

/*
 Runs a decay experiment from the given eigenmode and returns the report
 as a JSON string (free with `wavelab_string_free`). `law`: "linear:a" |
 "power:p" | "saturating"; `placement`: "internal" |
 "boundary-left:alpha" | "boundary-right:alpha".

 # Safety
 `law`/`placement` are NUL-terminated strings; `out_json` must be valid.
 */
enum WavelabStatus wavelab_decay_experiment_json(const struct WavelabLab *lab,
                                                 const char *law,
                                                 const char *placement,
                                                 double t_long,
                                                 size_t mode,
                                                 char **out_json);

/*
 # Safety
 `s` must come from this library and not be freed twice.
 */
void wavelab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVELAB_H */
