#ifndef USREPORT_H
#define USREPORT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Report language selector.
typedef enum UsrLanguage {
  USR_LANGUAGE_ZH = 0,
  USR_LANGUAGE_EN = 1,
} UsrLanguage;

// Result codes shared by all functions.
typedef enum UsrStatus {
  USR_STATUS_OK = 0,
  USR_STATUS_NULL_POINTER = 1,
  USR_STATUS_INVALID_UTF8 = 2,
  USR_STATUS_INVALID_ARGUMENT = 3,
  USR_STATUS_IO = 4,
  USR_STATUS_PARSE = 5,
  USR_STATUS_UNRESOLVED = 6,
  USR_STATUS_PROTECTED_TERM = 7,
  USR_STATUS_INTERNAL = 99,
} UsrStatus;

// Opaque handle to a loaded fragment table.
typedef struct UsrTable UsrTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Free with
// `usr_string_free`.
char *usr_last_error_message(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void usr_string_free(char *s);

// Library version as a static NUL-terminated string.
const char *usr_version(void);

// NFKC plus whitespace collapsing.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum UsrStatus usr_normalize(const char *text, char **out);

// Segments with the default delimiters; writes a JSON array of fragments.
//
// # Safety
// `text` must be a NUL-terminated string; `out_json` must be writable.
enum UsrStatus usr_segment_json(const char *text, enum UsrLanguage language, char **out_json);

// Loads a fragment table TSV.
//
// # Safety
// `path` must be a NUL-terminated string; `out_table` must be writable.
enum UsrStatus usr_table_load(const char *path, struct UsrTable **out_table);

// Releases a table. NULL is ignored.
//
// # Safety
// `table` must come from `usr_table_load` and not have been freed already.
void usr_table_free(struct UsrTable *table);

// Number of entries, or 0 for NULL.
//
// # Safety
// `table` must be NULL or a live handle.
size_t usr_table_len(const struct UsrTable *table);

// Translates a zh report through the table. Fails with `Unresolved` when any
// fragment lacks an approved or edited entry.
//
// # Safety
// `table` must be a live handle, `zh_text` a NUL-terminated string and
// `out_en` writable.
enum UsrStatus usr_table_apply(const struct UsrTable *table, const char *zh_text, char **out_en);

// Corpus ROUGE-L (beta = 1) over `len` hypothesis/reference pairs.
//
// # Safety
// `hyps` and `refs` must each point to `len` NUL-terminated strings; `out`
// must be writable.
enum UsrStatus usr_rouge_l(const char *const *hyps,
                           const char *const *refs,
                           size_t len,
                           enum UsrLanguage language,
                           double *out);

// Corpus BLEU-n, n in 1..=4.
//
// # Safety
// As for `usr_rouge_l`.
enum UsrStatus usr_bleu(const char *const *hyps,
                        const char *const *refs,
                        size_t len,
                        enum UsrLanguage language,
                        uint32_t n,
                        double *out);

// Corpus CIDEr with the given scale.
//
// # Safety
// As for `usr_rouge_l`.
enum UsrStatus usr_cider(const char *const *hyps,
                         const char *const *refs,
                         size_t len,
                         enum UsrLanguage language,
                         double scale,
                         double *out);

// Negative log-likelihood summed over positions where `supervised[i]` is true.
//
// # Safety
// `logprobs` and `supervised` must each point to `len` elements (may be NULL
// when `len` is 0); `out` must be writable.
enum UsrStatus usr_masked_loss(const double *logprobs,
                               const bool *supervised,
                               size_t len,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* USREPORT_H */
