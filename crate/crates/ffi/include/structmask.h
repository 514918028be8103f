#ifndef STRUCTMASK_H
#define STRUCTMASK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SmStatus {
  SM_STATUS_OK = 0,
  SM_STATUS_NULL_POINTER = 1,
  SM_STATUS_INVALID_UTF8 = 2,
  SM_STATUS_INVALID_ARGUMENT = 3,
  SM_STATUS_PARSE_ERROR = 4,
  SM_STATUS_EMPTY_DOCUMENT = 5,
  SM_STATUS_IO_ERROR = 6,
  SM_STATUS_CORRUPT_CHECKPOINT = 7,
  SM_STATUS_VERSION_MISMATCH = 8,
  SM_STATUS_MODEL_ERROR = 9,
  SM_STATUS_PANIC = 10,
} SmStatus;

/**
 * Serialization formats accepted where a `format` argument is taken.
 */
typedef enum SmFormat {
  SM_FORMAT_TEXT = 0,
  SM_FORMAT_TREE = 1,
} SmFormat;

/**
 * Opaque model checkpoint.
 */
typedef struct SmCheckpoint SmCheckpoint;

/**
 * Opaque document tree.
 */
typedef struct SmTree SmTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library.
 */
const char *sm_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void sm_string_free(char *s);

/**
 * Removes comments, floats, equations and math spans from LaTeX source.
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out` must be writable.
 */
enum SmStatus sm_strip_noise(const char *source, char **out);

/**
 * Extracts a document tree from raw LaTeX.
 *
 * # Safety
 * `latex` and `doc_id` must be NUL-terminated strings; `out` must be writable.
 */
enum SmStatus sm_tree_extract(const char *latex, const char *doc_id, struct SmTree **out);

/**
 * Decodes one document from `len` bytes in the given [`SmFormat`].
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum SmStatus sm_tree_decode(const uint8_t *data, size_t len, int32_t format, struct SmTree **out);

/**
 * Encodes a tree; the result is freed with [`sm_string_free`].
 *
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum SmStatus sm_tree_encode(const struct SmTree *tree, int32_t format, char **out);

/**
 * Number of words in headings and bodies; 0 for NULL.
 *
 * # Safety
 * `tree` must be NULL or a live handle.
 */
size_t sm_tree_word_count(const struct SmTree *tree);

/**
 * Number of nodes with a non-empty heading; 0 for NULL.
 *
 * # Safety
 * `tree` must be NULL or a live handle.
 */
size_t sm_tree_header_count(const struct SmTree *tree);

/**
 * # Safety
 * `tree` must be NULL or a handle not yet freed.
 */
void sm_tree_free(struct SmTree *tree);

/**
 * Allowed attention pairs for length `n`, total window `window` and the
 * `n_globals` global positions in `globals` (which may be NULL when zero).
 *
 * # Safety
 * `globals` must point to `n_globals` readable values; `out` must be writable.
 */
enum SmStatus sm_pair_count(size_t n,
                            size_t window,
                            const size_t *globals,
                            size_t n_globals,
                            uint64_t *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SmStatus sm_checkpoint_load(const char *path, struct SmCheckpoint **out);

/**
 * # Safety
 * `checkpoint` must be a live handle; `path` a NUL-terminated string.
 */
enum SmStatus sm_checkpoint_save(const struct SmCheckpoint *checkpoint, const char *path);

/**
 * Training step count; 0 for NULL.
 *
 * # Safety
 * `checkpoint` must be NULL or a live handle.
 */
uint64_t sm_checkpoint_step(const struct SmCheckpoint *checkpoint);

/**
 * Vocabulary size of the model; 0 for NULL.
 *
 * # Safety
 * `checkpoint` must be NULL or a live handle.
 */
size_t sm_checkpoint_vocab_size(const struct SmCheckpoint *checkpoint);

/**
 * Whether the model was trained with HEADER tokens as global tokens.
 *
 * # Safety
 * `checkpoint` must be NULL or a live handle.
 */
bool sm_checkpoint_global_attention(const struct SmCheckpoint *checkpoint);

/**
 * Runs the encoder on `n` token ids and writes `n * vocab_size` logits,
 * row-major, into `logits`. `header_mask` may be NULL; when given, its
 * nonzero entries mark HEADER tokens, which are global only if the
 * checkpoint was trained that way.
 *
 * # Safety
 * `ids` must hold `n` values, `header_mask` (if not NULL) `n` bytes, and
 * `logits` room for `logits_len` values.
 */
enum SmStatus sm_checkpoint_logits(const struct SmCheckpoint *checkpoint,
                                   const uint32_t *ids,
                                   const uint8_t *header_mask,
                                   size_t n,
                                   double *logits,
                                   size_t logits_len);

/**
 * # Safety
 * `checkpoint` must be NULL or a handle not yet freed.
 */
void sm_checkpoint_free(struct SmCheckpoint *checkpoint);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STRUCTMASK_H */
