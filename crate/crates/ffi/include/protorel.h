#ifndef PROTOREL_H
#define PROTOREL_H

#include <stddef.h>
#include <stdint.h>

typedef enum ProtorelStatus {
  PROTOREL_STATUS_OK = 0,
  PROTOREL_STATUS_MISSING_FILE = 1,
  PROTOREL_STATUS_IO = 2,
  PROTOREL_STATUS_FORMAT = 3,
  PROTOREL_STATUS_DIMENSION = 4,
  PROTOREL_STATUS_INVALID_ARGUMENT = 5,
  PROTOREL_STATUS_NUMERIC = 6,
  PROTOREL_STATUS_NULL_POINTER = 7,
  PROTOREL_STATUS_BUFFER_TOO_SMALL = 8,
  PROTOREL_STATUS_PANIC = 9,
} ProtorelStatus;

// Entity embedding table.
typedef struct ProtorelEmbeddings ProtorelEmbeddings;

// Trained relation classifier.
typedef struct ProtorelModel ProtorelModel;

// Relation prototypes, leaf layer first.
typedef struct ProtorelPrototypes ProtorelPrototypes;

// Headline metrics of a scored predictions file.
typedef struct ProtorelMetrics {
  double auc;
  double precision;
  double recall;
  double f1;
  size_t n_candidates;
  size_t n_gold;
} ProtorelMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *protorel_last_error(void);

// Library version as a static NUL-terminated string.
const char *protorel_version(void);

// Runs the command-line front end with `argv[0..argc]` and returns its exit code.
//
// # Safety
// `argv` must point to `argc` valid NUL-terminated strings.
int protorel_run(int argc, const char *const *argv);

// Loads an embedding table in text or binary form.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ProtorelStatus protorel_embeddings_load(const char *path, struct ProtorelEmbeddings **out);

// # Safety
// `emb` must come from [`protorel_embeddings_load`] or be null.
void protorel_embeddings_free(struct ProtorelEmbeddings *emb);

// # Safety
// `emb` must be a live handle.
size_t protorel_embeddings_count(const struct ProtorelEmbeddings *emb);

// # Safety
// `emb` must be a live handle.
size_t protorel_embeddings_dim(const struct ProtorelEmbeddings *emb);

// Copies entity `entity`'s vector into `out[0..dim]`.
//
// # Safety
// `emb` must be a live handle and `out` must hold `len` doubles.
enum ProtorelStatus protorel_embeddings_row(const struct ProtorelEmbeddings *emb,
                                            size_t entity,
                                            double *out,
                                            size_t len);

// Writes `e_tail - e_head` into `out[0..dim]`.
//
// # Safety
// `emb` must be a live handle and `out` must hold `len` doubles.
enum ProtorelStatus protorel_mutual_relation(const struct ProtorelEmbeddings *emb,
                                             size_t head,
                                             size_t tail,
                                             double *out,
                                             size_t len);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ProtorelStatus protorel_prototypes_load(const char *path, struct ProtorelPrototypes **out);

// # Safety
// `protos` must come from [`protorel_prototypes_load`] or be null.
void protorel_prototypes_free(struct ProtorelPrototypes *protos);

// Leaf relations covered, NA included.
//
// # Safety
// `protos` must be a live handle.
size_t protorel_prototypes_relations(const struct ProtorelPrototypes *protos);

// # Safety
// `protos` must be a live handle.
size_t protorel_prototypes_dim(const struct ProtorelPrototypes *protos);

// Up to `k` non-NA relations ranked by prototype cosine. Relation ids go to
// `relations`, cosines to `cosines`; `*written` receives the count.
//
// # Safety
// Handles must be live; both arrays must hold `k` values.
enum ProtorelStatus protorel_nearest_prototypes(const struct ProtorelEmbeddings *emb,
                                                const struct ProtorelPrototypes *protos,
                                                size_t head,
                                                size_t tail,
                                                size_t k,
                                                size_t *relations,
                                                double *cosines,
                                                size_t *written);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ProtorelStatus protorel_model_load(const char *path, struct ProtorelModel **out);

// # Safety
// `model` must come from [`protorel_model_load`] or be null.
void protorel_model_free(struct ProtorelModel *model);

// # Safety
// `model` must be a live handle.
size_t protorel_model_relations(const struct ProtorelModel *model);

// Copies relation `id`'s name, NUL-terminated, into `buf`.
//
// # Safety
// `model` must be a live handle and `buf` must hold `len` bytes.
enum ProtorelStatus protorel_model_relation_name(const struct ProtorelModel *model,
                                                 size_t id,
                                                 char *buf,
                                                 size_t len);

// Scores a predictions file (AUC and the max-F1 operating point).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ProtorelStatus protorel_eval_predictions(const char *path, struct ProtorelMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROTOREL_H */
