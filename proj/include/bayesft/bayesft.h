#ifndef BAYESFT_BAYESFT_H
#define BAYESFT_BAYESFT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BFT_API __declspec(dllexport)
#else
#define BFT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bft_status {
  BFT_OK = 0,
  BFT_ERR_GENERIC = 1,
  BFT_ERR_CONFIG = 2,
  BFT_ERR_INVALID_ARGUMENT = 3,
  BFT_ERR_SPEC = 4,
  BFT_ERR_SHAPE = 5,
  BFT_ERR_DOMAIN = 6,
  BFT_ERR_NUMERIC = 7,
  BFT_ERR_DIVERGENCE = 8,
  BFT_ERR_LINALG = 9,
  BFT_ERR_IO = 10,
  BFT_ERR_FORMAT = 11
} bft_status;

typedef struct bft_dataset bft_dataset;
typedef struct bft_network bft_network;
typedef struct bft_gp bft_gp;

/* Message of the last failed call on this thread; "" if none. */
BFT_API const char* bft_last_error(void);
BFT_API const char* bft_status_name(bft_status status);
BFT_API const char* bft_version(void);

/* ---- experiments ---- */

/* command: ablate, boundary, sweep, optimize, compare or random-search.
   seed_override may be NULL. Progress lines go to stderr when verbose != 0. */
BFT_API bft_status bft_run_experiment(const char* command, const char* config_json, const char* out_dir,
                                      const uint64_t* seed_override, int verbose);

/* Parses and validates only. On success *hash_out (17 bytes) receives the config hash. */
BFT_API bft_status bft_validate_config(const char* command, const char* config_json, const uint64_t* seed_override,
                                       char* hash_out);

/* ---- datasets ---- */

BFT_API bft_status bft_dataset_load_mnist(const char* images_path, const char* labels_path, bft_dataset** out);
BFT_API bft_status bft_dataset_two_moons(size_t n_samples, double noise_std, uint64_t seed, bft_dataset** out);
/* Row-major inputs (rows x features) and labels in [0, num_classes). Copies the data. */
BFT_API bft_status bft_dataset_from_arrays(const double* inputs, const int* labels, size_t rows, size_t features,
                                           size_t num_classes, bft_dataset** out);
BFT_API size_t bft_dataset_size(const bft_dataset* d);
BFT_API size_t bft_dataset_sample_size(const bft_dataset* d);
BFT_API void bft_dataset_free(bft_dataset* d);

/* ---- networks ---- */

/* spec_json is the NetworkSpec JSON document. Weights are Xavier-uniform from seed. */
BFT_API bft_status bft_network_create(const char* spec_json, uint64_t seed, bft_network** out);
BFT_API size_t bft_network_dropout_slots(const bft_network* net);
BFT_API bft_status bft_network_train(bft_network* net, const bft_dataset* data, const double* alpha, size_t alpha_len,
                                     double learning_rate, size_t batch_size, size_t epochs, uint64_t seed);
BFT_API bft_status bft_network_accuracy(const bft_network* net, const bft_dataset* data, double* accuracy_out);
BFT_API bft_status bft_network_predict(const bft_network* net, const double* inputs, size_t rows, int* labels_out);
BFT_API bft_status bft_network_save(const bft_network* net, const char* path);
BFT_API bft_status bft_network_load(bft_network* net, const char* path);
BFT_API void bft_network_free(bft_network* net);

/* ---- drift ---- */

/* New network with weights multiplied by exp(sigma * z) for drift draw `draw`. */
BFT_API bft_status bft_drift_sample(const bft_network* net, double sigma, uint64_t seed, uint64_t draw,
                                    bft_network** out);
/* Monte-Carlo mean of -loss over `samples` drift draws. */
BFT_API bft_status bft_robust_objective(const bft_network* net, const bft_dataset* data, double sigma, size_t samples,
                                        uint64_t seed, double* mean_out, double* std_error_out);

/* ---- gaussian process ---- */

/* alphas is n x dim row-major. k has dim entries. */
BFT_API bft_status bft_gp_fit(const double* alphas, const double* values, size_t n, size_t dim, double k0,
                              const double* k, double jitter, bft_gp** out);
BFT_API bft_status bft_gp_predict(const bft_gp* gp, const double* query, double* mean_out, double* variance_out);
BFT_API void bft_gp_free(bft_gp* gp);

#ifdef __cplusplus
}
#endif

#endif
