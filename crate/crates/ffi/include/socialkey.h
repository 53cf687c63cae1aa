#ifndef SOCIALKEY_H
#define SOCIALKEY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SK_PUBLIC_KEY_LEN 64

#define SK_SEED_LEN 32

typedef enum SkMode {
  SK_MODE_INDIRECT_PERMISSION = 1,
  SK_MODE_INDIRECT_ESCROW = 2,
} SkMode;

typedef enum SkSessionState {
  SK_SESSION_STATE_COLLECTING = 0,
  SK_SESSION_STATE_READY = 1,
  SK_SESSION_STATE_FINISHED = 2,
  SK_SESSION_STATE_ABORTED = 3,
} SkSessionState;

/**
 * Result code of every fallible call.
 */
typedef enum SkStatus {
  SK_STATUS_OK = 0,
  SK_STATUS_NULL_POINTER = 1,
  SK_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Bytes or text that do not parse.
   */
  SK_STATUS_MALFORMED = 3,
  /**
   * Authentication or key failure.
   */
  SK_STATUS_CRYPTO = 4,
  /**
   * Protocol rule violated (parameters, session state).
   */
  SK_STATUS_PROTOCOL = 5,
  /**
   * The session does not hold k shares yet.
   */
  SK_STATUS_NOT_READY = 6,
  /**
   * A trustee refused; see the refusal code.
   */
  SK_STATUS_REFUSED = 7,
  SK_STATUS_ANALYSIS = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  SK_STATUS_INTERNAL = 9,
} SkStatus;

typedef enum SkVerdict {
  SK_VERDICT_CONFIRMED = 0,
  SK_VERDICT_REJECTED = 1,
  SK_VERDICT_IGNORED = 2,
} SkVerdict;

typedef struct SkBundle SkBundle;

typedef struct SkDirectory SkDirectory;

typedef struct SkKeyPair SkKeyPair;

typedef struct SkSession SkSession;

/**
 * Heap bytes handed to the caller.
 */
typedef struct SkBuffer {
  uint8_t *data;
  size_t len;
} SkBuffer;

/**
 * Recovery instruction as plain C strings. `legal_agent` and
 * `freeform_note` may be NULL.
 */
typedef struct SkInstruction {
  const char *owner_display_name;
  const char *directory_locator;
  /**
   * "in_person", "live_video", "voice_call" or "any".
   */
  const char *verification_policy;
  const char *legal_agent;
  const char *freeform_note;
} SkInstruction;

/**
 * Adversary model and trustee unavailability for the analysis calls.
 */
typedef struct SkModel {
  uint32_t contacts;
  double p_steal;
  double p1;
  double p2;
  double q1;
  double q2;
  double q3;
  double unavailability;
} SkModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *sk_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sk_version(void);

/**
 * Wipe and release a buffer returned by this library. Safe on an empty
 * buffer.
 *
 * # Safety
 * `buf` must come from this library and not have been freed.
 */
void sk_buffer_free(struct SkBuffer buf);

/**
 * New identity keypair from the OS entropy source.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SkStatus sk_keypair_generate(struct SkKeyPair **out);

/**
 * Keypair derived from a 32-byte seed.
 *
 * # Safety
 * `seed` must point to 32 readable bytes; `out` must be valid.
 */
enum SkStatus sk_keypair_from_seed(const uint8_t *seed, struct SkKeyPair **out);

/**
 * Parse an armored private key.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be valid.
 */
enum SkStatus sk_keypair_from_armor(const char *text, struct SkKeyPair **out);

/**
 * Raw 64-byte public key.
 *
 * # Safety
 * `kp` must be a live handle; `out` must point to 64 writable bytes.
 */
enum SkStatus sk_keypair_public_key(const struct SkKeyPair *kp, uint8_t *out);

/**
 * Armored public key text (no trailing NUL).
 *
 * # Safety
 * `kp` must be a live handle; `out` must be valid.
 */
enum SkStatus sk_keypair_public_armor(const struct SkKeyPair *kp, struct SkBuffer *out);

/**
 * Armored private key text (no trailing NUL). Free with `sk_buffer_free`.
 *
 * # Safety
 * `kp` must be a live handle; `out` must be valid.
 */
enum SkStatus sk_keypair_private_armor(const struct SkKeyPair *kp, struct SkBuffer *out);

/**
 * Lowercase hex fingerprint, written NUL-terminated into `out` (17 bytes).
 *
 * # Safety
 * `kp` must be a live handle; `out` must point to 17 writable bytes.
 */
enum SkStatus sk_keypair_fingerprint(const struct SkKeyPair *kp, char *out);

/**
 * # Safety
 * `kp` must be NULL or a handle not yet freed.
 */
void sk_keypair_free(struct SkKeyPair *kp);

struct SkDirectory *sk_directory_new(void);

/**
 * Publish a raw 64-byte public key under `locator`.
 *
 * # Safety
 * `dir` must be live, `locator` NUL-terminated, `public_key` 64 bytes.
 */
enum SkStatus sk_directory_publish(const struct SkDirectory *dir,
                                   const char *locator,
                                   const uint8_t *public_key);

/**
 * # Safety
 * `dir` must be NULL or a handle not yet freed.
 */
void sk_directory_free(struct SkDirectory *dir);

/**
 * Back up `secret` to `trustee_count` trustees, any `k` of whom can
 * release it. `trustee_keys` holds the raw 64-byte public keys back to
 * back. `seed` may be NULL (OS entropy) or point to a u64 for
 * reproducible output.
 *
 * # Safety
 * All pointers must be valid for the lengths given.
 */
enum SkStatus sk_backup_create(const struct SkKeyPair *owner,
                               const uint8_t *secret,
                               size_t secret_len,
                               const uint8_t *trustee_keys,
                               size_t trustee_count,
                               size_t k,
                               const struct SkInstruction *instr,
                               enum SkMode mode,
                               const uint64_t *seed,
                               struct SkBundle **out);

/**
 * Serialize a bundle, binary or armored text.
 *
 * # Safety
 * `bundle` must be live; `out` must be valid.
 */
enum SkStatus sk_bundle_encode(const struct SkBundle *bundle, bool armored, struct SkBuffer *out);

/**
 * Parse a bundle from binary or armored bytes (detected by content).
 *
 * # Safety
 * `data` must be valid for `len` bytes; `out` must be valid.
 */
enum SkStatus sk_bundle_decode(const uint8_t *data, size_t len, struct SkBundle **out);

/**
 * Threshold k and trustee count n.
 *
 * # Safety
 * `bundle` must be live; `k` and `n` must be valid.
 */
enum SkStatus sk_bundle_params(const struct SkBundle *bundle, uint16_t *k, uint16_t *n);

/**
 * # Safety
 * `bundle` must be NULL or a handle not yet freed.
 */
void sk_bundle_free(struct SkBundle *bundle);

/**
 * Trustee side: open the request carried by `bundle`, authenticate it
 * against `dir`, apply the verdict. Always writes the reply frame to
 * `out`; returns `Refused` with `*refusal_code` set when no share is
 * released, `Ok` with `*refusal_code = 0` otherwise.
 *
 * # Safety
 * All handles must be live; `out` and `refusal_code` must be valid.
 */
enum SkStatus sk_trustee_respond(const struct SkKeyPair *trustee,
                                 const struct SkBundle *bundle,
                                 const struct SkDirectory *dir,
                                 enum SkVerdict verdict,
                                 struct SkBuffer *out,
                                 uint8_t *refusal_code);

/**
 * Start collecting shares for `bundle`. The bundle handle stays owned by
 * the caller.
 *
 * # Safety
 * `bundle` must be live; `out` must be valid.
 */
enum SkStatus sk_session_open(const struct SkBundle *bundle, struct SkSession **out);

/**
 * Feed a trustee reply frame into the session.
 *
 * # Safety
 * `session` must be live; `frame` valid for `len` bytes.
 */
enum SkStatus sk_session_absorb(struct SkSession *session, const uint8_t *frame, size_t len);

/**
 * # Safety
 * `session` must be live; `state` and `collected` must be valid.
 */
enum SkStatus sk_session_status(const struct SkSession *session,
                                enum SkSessionState *state,
                                size_t *collected);

/**
 * Reconstruct the secret. Free the result with `sk_buffer_free`.
 *
 * # Safety
 * `session` must be live; `out` must be valid.
 */
enum SkStatus sk_session_finish(struct SkSession *session, struct SkBuffer *out);

/**
 * # Safety
 * `session` must be NULL or a handle not yet freed.
 */
void sk_session_free(struct SkSession *session);

/**
 * Real-world default model.
 *
 * # Safety
 * `out` must be valid.
 */
enum SkStatus sk_default_model(struct SkModel *out);

/**
 * Probability an attacker holding the bundle fools k of n trustees.
 *
 * # Safety
 * `model` and `out` must be valid.
 */
enum SkStatus sk_attack_success(const struct SkModel *model, uint32_t k, uint32_t n, double *out);

/**
 * Probability more than n - k trustees are unavailable.
 *
 * # Safety
 * `out` must be valid.
 */
enum SkStatus sk_recovery_unreliability(double unavailability, uint32_t k, uint32_t n, double *out);

/**
 * Threshold minimizing the combined failure rate for n trustees.
 *
 * # Safety
 * `model`, `k_star` and `f_min` must be valid.
 */
enum SkStatus sk_optimal_threshold(const struct SkModel *model,
                                   uint32_t n,
                                   uint32_t *k_star,
                                   double *f_min);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOCIALKEY_H */
