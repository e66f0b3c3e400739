/* momentflow: sample-free Gaussian moment propagation through feedforward
 * networks, with quadrature and Monte Carlo oracles.
 *
 * Plain C surface over the C++ engine. Objects are opaque handles created and
 * destroyed through this API; every fallible call returns an mf_status and
 * leaves a human-readable message in mf_last_error() (thread-local).
 */
#ifndef MOMENTFLOW_H
#define MOMENTFLOW_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mf_status {
  MF_OK = 0,
  MF_ERR_INVALID_ARGUMENT = 1,
  MF_ERR_DOMAIN = 2,
  MF_ERR_DIMENSION = 3,
  MF_ERR_IO = 4,
  MF_ERR_FORMAT = 5,
  MF_ERR_VERSION = 6,
  MF_ERR_CHECKSUM = 7,
  MF_ERR_SHAPE = 8,
  MF_ERR_UNSUPPORTED = 9,
  MF_ERR_NUMERICAL = 10,
  MF_ERR_BUDGET = 11,
  MF_ERR_INTERNAL = 12
} mf_status;

typedef enum mf_activation_kind {
  MF_ACT_HEAVISIDE = 0,
  MF_ACT_RELU = 1,
  MF_ACT_GELU = 2,
  MF_ACT_SIGMOID = 3, /* moment-approximated logistic */
  MF_ACT_IDENTITY = 4
} mf_activation_kind;

typedef struct mf_activation {
  mf_activation_kind kind;
  double alpha; /* sigmoid shape parameter; <= 0 selects the default 0.368 */
} mf_activation;

typedef enum mf_psd_policy {
  MF_PSD_NONE = 0,
  MF_PSD_SYMMETRIZE = 1,
  MF_PSD_CLIP_EIGENVALUES = 2
} mf_psd_policy;

typedef struct mf_series_config {
  int order;          /* truncation order K, >= 1 */
  double sigma_floor; /* deterministic branch below this sigma */
  mf_psd_policy psd_policy;
} mf_series_config;

typedef enum mf_quad_scheme {
  MF_QUAD_GAUSS_HERMITE = 0,
  MF_QUAD_GAUSS_HERMITE_SPLIT = 1 /* breakpoint-split panels; default */
} mf_quad_scheme;

typedef struct mf_quad_config {
  int nodes_per_axis;
  mf_quad_scheme scheme;
} mf_quad_config;

typedef struct mf_mc_config {
  long long samples;
  uint64_t seed;
  long long chunk;
} mf_mc_config;

typedef struct mf_network mf_network;
typedef struct mf_moments mf_moments;

const char* mf_version(void);
/* Message from the most recent failing call on this thread. */
const char* mf_last_error(void);
void mf_string_free(char* s);

mf_series_config mf_series_config_default(void);
mf_quad_config mf_quad_config_default(void);
mf_mc_config mf_mc_config_default(void);

/* ---- scalar activation statistics ---- */

mf_status mf_activation_mean(mf_activation act, double mu, double sigma,
                             double* out);
mf_status mf_activation_variance(mf_activation act, double mu, double sigma,
                                 const mf_series_config* cfg, double* out);
mf_status mf_derivative_term(mf_activation act, double mu, double sigma, int k,
                             double* out);
mf_status mf_pair_covariance(mf_activation act_a, mf_activation act_b,
                             double mu_i, double mu_j, double sigma_i,
                             double sigma_j, double rho,
                             const mf_series_config* cfg, double* out);

/* ---- quadrature oracle ---- */

mf_status mf_quad_mean(mf_activation act, double mu, double sigma,
                       const mf_quad_config* cfg, double* out);
mf_status mf_quad_variance(mf_activation act, double mu, double sigma,
                           const mf_quad_config* cfg, double* out);
mf_status mf_quad_cross_moment(mf_activation act_a, mf_activation act_b,
                               double mu_i, double mu_j, double sigma_i,
                               double sigma_j, double rho,
                               const mf_quad_config* cfg, double* cross_moment,
                               double* covariance);

/* ---- moments objects ---- */

mf_status mf_moments_create(int dim, const double* mean,
                            const double* cov_row_major, mf_moments** out);
void mf_moments_free(mf_moments* m);
int mf_moments_dim(const mf_moments* m);
mf_status mf_moments_get(const mf_moments* m, double* mean_out,
                         double* cov_row_major_out);
mf_status mf_moments_load(const char* path, mf_moments** out);
mf_status mf_moments_save(const mf_moments* m, const char* path);
/* Standard-normal mean entries plus a random covariance with the given
 * maximum variance; the generator behind tightness trials. */
mf_status mf_moments_random(int dim, uint64_t seed, double max_variance,
                            mf_moments** out);

/* ---- networks ---- */

mf_status mf_network_load(const char* path, mf_network** out);
mf_status mf_network_save(const mf_network* net, const char* path);
void mf_network_free(mf_network* net);
int mf_network_input_dim(const mf_network* net);
int mf_network_output_dim(const mf_network* net);
int mf_network_layer_count(const mf_network* net);
/* JSON description (layers, shapes, metadata); free with mf_string_free. */
mf_status mf_network_describe(const mf_network* net, char** json_out);
/* JSON array of structural diagnostics; empty array means valid. */
mf_status mf_network_validate(const mf_network* net, char** json_out);

mf_status mf_network_synthesize_fc(int depth, int width, int input_dim,
                                   mf_activation act, uint64_t seed,
                                   mf_network** out);
mf_status mf_network_synthesize_cnn(int depth, int channels, int input_h,
                                    int input_w, int input_c,
                                    mf_activation act, uint64_t seed,
                                    mf_network** out);

/* ---- propagation ---- */

mf_status mf_propagate(const mf_network* net, const mf_moments* input,
                       const mf_series_config* cfg, mf_moments** out);
/* As mf_propagate, also writing per-layer snapshots to trace_path. */
mf_status mf_propagate_trace(const mf_network* net, const mf_moments* input,
                             const mf_series_config* cfg,
                             const char* trace_path, mf_moments** out);
/* Monte Carlo forward estimate; standard errors (of the mean) are optional. */
mf_status mf_mc_propagate(const mf_network* net, const mf_moments* input,
                          const mf_mc_config* cfg, mf_moments** estimate_out,
                          double* standard_error_out);

/* ---- experiments ---- */

typedef struct mf_error_grid_spec {
  mf_activation act;
  double mu_min, mu_max, mu_step;
  double sigma_i, sigma_j;
  double rho;
  const int* orders;
  int n_orders;
  mf_quad_config quad;
  const char* csv_path; /* optional per-cell export, NULL to skip */
} mf_error_grid_spec;

/* max_abs_error/mean_abs_error must hold n_orders entries. */
mf_status mf_error_grid(const mf_error_grid_spec* spec, double* max_abs_error,
                        double* mean_abs_error);

typedef struct mf_tightness_spec {
  int trials;
  mf_mc_config mc;
  mf_series_config series;
  uint64_t input_seed;
  double max_variance;
  const char* csv_path;  /* optional */
  const char* json_path; /* optional */
} mf_tightness_spec;

typedef struct mf_tightness_output {
  double q_mu_mean, q_mu_std;
  double q_var_mean, q_var_std;
  int excluded_mu, excluded_var;
} mf_tightness_output;

/* outputs must hold mf_network_output_dim(net) entries. */
mf_status mf_tightness(const mf_network* net, const mf_tightness_spec* spec,
                       mf_tightness_output* outputs);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MOMENTFLOW_H */
