#ifndef PENNING_PHASES_H
#define PENNING_PHASES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PpBinding {
  PP_BINDING_PENNING_QUADRUPOLE = 0,
  PP_BINDING_ISOTROPIC_OSCILLATOR = 1,
} PpBinding;

typedef enum PpClassification {
  PP_CLASSIFICATION_CONFINED = 0,
  PP_CLASSIFICATION_UNCONFINED = 1,
  PP_CLASSIFICATION_BOUNDARY = 2,
} PpClassification;

// Status codes; the nonzero values match the command-line exit codes.
typedef enum PpStatus {
  PP_STATUS_OK = 0,
  PP_STATUS_IO = 1,
  PP_STATUS_DOMAIN = 2,
  PP_STATUS_NUMERICAL = 3,
  PP_STATUS_NO_CYCLIC_STATES = 4,
  PP_STATUS_NULL_POINTER = 5,
  PP_STATUS_OUT_OF_RANGE = 6,
  PP_STATUS_PANIC = 7,
} PpStatus;

// Parameter point together with its binding potential.
typedef struct PpParams PpParams;

// Classified spectrum of one parameter point.
typedef struct PpSpectrum PpSpectrum;

// Phase report of a Fock state. `has_phase_l3` is 0 at `omega = 0`, where
// only the adiabatic route exists.
typedef struct PpPhase {
  double quasienergy;
  int32_t has_phase_l3;
  double phase_l3;
  double phase_freq;
  double dfreq_domega[3];
  double frequencies[3];
  int32_t krein_signs[3];
  double method_spread;
} PpPhase;

typedef struct PpKcr {
  double k_cr;
  double bracket_lo;
  double bracket_hi;
  double tol;
  uint64_t iterations;
} PpKcr;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Physical parameters: fields `b`, `b0`, trap frequency `w0`, rotation `omega`.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum PpStatus pp_params_new(double b,
                            double b0,
                            double w0,
                            double omega,
                            enum PpBinding binding,
                            struct PpParams **out);

// Adiabatic-sweep point `b0 = 1`, `b = k`, `w0 = 4/3`.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum PpStatus pp_params_adiabatic(double k,
                                  double omega,
                                  enum PpBinding binding,
                                  struct PpParams **out);

// Dimensionless point with `omega = 1`.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum PpStatus pp_params_dimensionless(double alpha,
                                      double alpha0,
                                      double w,
                                      enum PpBinding binding,
                                      struct PpParams **out);

// Replaces the binding by `V = ½(w1² x₁² + w2² x₂² + w3² x₃²)`.
//
// # Safety
// `params` must be a live handle or NULL.
enum PpStatus pp_params_set_diagonal_binding(struct PpParams *params,
                                             double w1,
                                             double w2,
                                             double w3);

// # Safety
// `params` must be NULL or a handle not yet freed.
void pp_params_free(struct PpParams *params);

// Classifies the point; the spectrum handle is created even when the point
// is not confined.
//
// # Safety
// `params` must be a live handle; `out` must be writable.
enum PpStatus pp_classify(const struct PpParams *params, struct PpSpectrum **out);

// # Safety
// `spectrum` must be a live handle.
enum PpStatus pp_spectrum_classification(const struct PpSpectrum *spectrum,
                                         enum PpClassification *out);

// Number of normal modes: 3 when confined, 0 otherwise.
//
// # Safety
// `spectrum` must be a live handle or NULL (which yields 0).
size_t pp_spectrum_mode_count(const struct PpSpectrum *spectrum);

// Frequency and Krein sign (`+1` or `−1`) of mode `index`, by descending
// frequency.
//
// # Safety
// `spectrum` must be a live handle; `freq` and `krein_sign` must be writable.
enum PpStatus pp_spectrum_mode(const struct PpSpectrum *spectrum,
                               size_t index,
                               double *freq,
                               int32_t *krein_sign);

// Eigenvalue `index` (0..6) of the dynamical matrix, by descending
// imaginary part.
//
// # Safety
// `spectrum` must be a live handle; `re` and `im` must be writable.
enum PpStatus pp_spectrum_eigenvalue(const struct PpSpectrum *spectrum,
                                     size_t index,
                                     double *re,
                                     double *im);

// # Safety
// `spectrum` must be NULL or a handle not yet freed.
void pp_spectrum_free(struct PpSpectrum *spectrum);

// Quasienergy and geometric phase of `|n1,n2,n3⟩`. Uses the cyclic
// (Aharonov–Anandan) route when `omega > 0` and the adiabatic limit at
// `omega = 0`.
//
// # Safety
// `params` must be a live handle; `out` must be writable.
enum PpStatus pp_phase(const struct PpParams *params,
                       uint32_t n1,
                       uint32_t n2,
                       uint32_t n3,
                       struct PpPhase *out);

// Adiabatic phase at field ratio `k` (`b0 = 1`, `w0 = 4/3`, `omega = 0`).
//
// # Safety
// `out` must be writable.
enum PpStatus pp_berry_phase(double k,
                             enum PpBinding binding,
                             uint32_t n1,
                             uint32_t n2,
                             uint32_t n3,
                             struct PpPhase *out);

// Critical field ratio of the static Penning loop, bisected to `tol`.
//
// # Safety
// `out` must be writable.
enum PpStatus pp_find_kcr(double tol, struct PpKcr *out);

// `(1 + k²)^{-1/2}`
double pp_cos_theta(double k);

// Message for the last failed call on this thread (empty after success).
const char *pp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PENNING_PHASES_H */
