//! C ABI over the `socialkey` core.
//!
//! Conventions:
//! * every fallible call returns an [`SkStatus`]; on failure a message is
//!   available from [`sk_last_error`] on the same thread
//! * objects are opaque handles created by `sk_*_new`/`sk_*_open`-style
//!   calls and released with the matching `sk_*_free`
//! * byte results come back in an [`SkBuffer`] owned by the caller and
//!   released with [`sk_buffer_free`], which wipes it first

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use socialkey::analysis::{self, AdversaryModel, AnalysisParams};
use socialkey::crypto::generate_identity_keypair;
use socialkey::transport::{decode_frame, encode_frame, Message};
use socialkey::{
    armor, create_backup, dearmor, decode_bundle, encode_bundle, BackupBundle, BackupMode, KeyPair,
    MemoryDirectory, ProtocolError, PublicKey, RecoveryInstruction, RecoverySession, SessionState,
    SocialAuthVerdict, TrusteeDescriptor, TrusteeReply, VerificationPolicy,
};
use zeroize::Zeroize;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Bytes or text that do not parse.
    Malformed = 3,
    /// Authentication or key failure.
    Crypto = 4,
    /// Protocol rule violated (parameters, session state).
    Protocol = 5,
    /// The session does not hold k shares yet.
    NotReady = 6,
    /// A trustee refused; see the refusal code.
    Refused = 7,
    Analysis = 8,
    /// A Rust panic was caught at the boundary.
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkMode {
    IndirectPermission = 1,
    IndirectEscrow = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkVerdict {
    Confirmed = 0,
    Rejected = 1,
    Ignored = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkSessionState {
    Collecting = 0,
    Ready = 1,
    Finished = 2,
    Aborted = 3,
}

/// Heap bytes handed to the caller.
#[repr(C)]
pub struct SkBuffer {
    pub data: *mut u8,
    pub len: usize,
}

impl SkBuffer {
    const EMPTY: SkBuffer = SkBuffer {
        data: ptr::null_mut(),
        len: 0,
    };

    fn from_vec(v: Vec<u8>) -> SkBuffer {
        let mut boxed = v.into_boxed_slice();
        let len = boxed.len();
        let data = boxed.as_mut_ptr();
        std::mem::forget(boxed);
        SkBuffer { data, len }
    }
}

/// Recovery instruction as plain C strings. `legal_agent` and
/// `freeform_note` may be NULL.
#[repr(C)]
pub struct SkInstruction {
    pub owner_display_name: *const c_char,
    pub directory_locator: *const c_char,
    /// "in_person", "live_video", "voice_call" or "any".
    pub verification_policy: *const c_char,
    pub legal_agent: *const c_char,
    pub freeform_note: *const c_char,
}

/// Adversary model and trustee unavailability for the analysis calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkModel {
    pub contacts: u32,
    pub p_steal: f64,
    pub p1: f64,
    pub p2: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub unavailability: f64,
}

impl From<SkModel> for AnalysisParams {
    fn from(m: SkModel) -> Self {
        AnalysisParams {
            model: AdversaryModel {
                contacts: m.contacts,
                p_steal: m.p_steal,
                p1: m.p1,
                p2: m.p2,
                q1: m.q1,
                q2: m.q2,
                q3: m.q3,
            },
            unavailability: m.unavailability,
        }
    }
}

pub struct SkKeyPair(KeyPair);
pub struct SkDirectory(MemoryDirectory);
pub struct SkBundle(BackupBundle);
pub struct SkSession(RecoverySession);

pub const SK_PUBLIC_KEY_LEN: usize = 64;
pub const SK_SEED_LEN: usize = 32;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SkStatus, String);

type Res<T> = Result<T, Failure>;

fn fail<T>(status: SkStatus, msg: impl Into<String>) -> Res<T> {
    Err(Failure(status, msg.into()))
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        let status = match e {
            ProtocolError::NotReady { .. } => SkStatus::NotReady,
            ProtocolError::Crypto(_) => SkStatus::Crypto,
            ProtocolError::MalformedBundle(_) => SkStatus::Malformed,
            _ => SkStatus::Protocol,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Run `f`, turning errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Res<()>) -> SkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside socialkey".into());
            SkStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref().map_or_else(
        || fail(SkStatus::NullPointer, format!("{what} is NULL")),
        Ok,
    )
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut().map_or_else(
        || fail(SkStatus::NullPointer, format!("{what} is NULL")),
        Ok,
    )
}

unsafe fn bytes<'a>(data: *const u8, len: usize, what: &str) -> Res<&'a [u8]> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return fail(SkStatus::NullPointer, format!("{what} is NULL"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn string(p: *const c_char, what: &str) -> Res<String> {
    if p.is_null() {
        return fail(SkStatus::NullPointer, format!("{what} is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .or_else(|_| fail(SkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn optional_string(p: *const c_char, what: &str) -> Res<Option<String>> {
    if p.is_null() {
        Ok(None)
    } else {
        string(p, what).map(Some)
    }
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Res<()> {
    if out.is_null() {
        return fail(SkStatus::NullPointer, format!("{what} is NULL"));
    }
    out.write(value);
    Ok(())
}

fn rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sk_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Wipe and release a buffer returned by this library. Safe on an empty
/// buffer.
///
/// # Safety
/// `buf` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sk_buffer_free(buf: SkBuffer) {
    if buf.data.is_null() {
        return;
    }
    let mut boxed = Box::from_raw(ptr::slice_from_raw_parts_mut(buf.data, buf.len));
    boxed.zeroize();
}

// ---- keys ----

/// New identity keypair from the OS entropy source.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sk_keypair_generate(out: *mut *mut SkKeyPair) -> SkStatus {
    guard(|| {
        let kp = generate_identity_keypair(&mut rng(None))
            .or_else(|e| fail(SkStatus::Crypto, e.to_string()))?;
        put(out, Box::into_raw(Box::new(SkKeyPair(kp))), "out")
    })
}

/// Keypair derived from a 32-byte seed.
///
/// # Safety
/// `seed` must point to 32 readable bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_keypair_from_seed(
    seed: *const u8,
    out: *mut *mut SkKeyPair,
) -> SkStatus {
    guard(|| {
        let seed = bytes(seed, SK_SEED_LEN, "seed")?;
        let kp = KeyPair::from_private_bytes(seed)
            .or_else(|e| fail(SkStatus::InvalidArgument, e.to_string()))?;
        put(out, Box::into_raw(Box::new(SkKeyPair(kp))), "out")
    })
}

/// Parse an armored private key.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_keypair_from_armor(
    text: *const c_char,
    out: *mut *mut SkKeyPair,
) -> SkStatus {
    guard(|| {
        let kp = KeyPair::from_armor(&string(text, "text")?)
            .or_else(|e| fail(SkStatus::Malformed, e.to_string()))?;
        put(out, Box::into_raw(Box::new(SkKeyPair(kp))), "out")
    })
}

/// Raw 64-byte public key.
///
/// # Safety
/// `kp` must be a live handle; `out` must point to 64 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sk_keypair_public_key(kp: *const SkKeyPair, out: *mut u8) -> SkStatus {
    guard(|| {
        let kp = deref(kp, "kp")?;
        if out.is_null() {
            return fail(SkStatus::NullPointer, "out is NULL");
        }
        let pk = kp.0.public_key().to_bytes();
        ptr::copy_nonoverlapping(pk.as_ptr(), out, pk.len());
        Ok(())
    })
}

/// Armored public key text (no trailing NUL).
///
/// # Safety
/// `kp` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_keypair_public_armor(
    kp: *const SkKeyPair,
    out: *mut SkBuffer,
) -> SkStatus {
    guard(|| {
        let text = deref(kp, "kp")?.0.public_key().to_armor();
        put(out, SkBuffer::from_vec(text.into_bytes()), "out")
    })
}

/// Armored private key text (no trailing NUL). Free with `sk_buffer_free`.
///
/// # Safety
/// `kp` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_keypair_private_armor(
    kp: *const SkKeyPair,
    out: *mut SkBuffer,
) -> SkStatus {
    guard(|| {
        let text = deref(kp, "kp")?.0.to_armor();
        put(out, SkBuffer::from_vec(text.as_bytes().to_vec()), "out")
    })
}

/// Lowercase hex fingerprint, written NUL-terminated into `out` (17 bytes).
///
/// # Safety
/// `kp` must be a live handle; `out` must point to 17 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sk_keypair_fingerprint(
    kp: *const SkKeyPair,
    out: *mut c_char,
) -> SkStatus {
    guard(|| {
        let fp = deref(kp, "kp")?.0.public_key().fingerprint();
        if out.is_null() {
            return fail(SkStatus::NullPointer, "out is NULL");
        }
        let c = CString::new(fp).expect("hex has no NUL");
        let b = c.as_bytes_with_nul();
        ptr::copy_nonoverlapping(b.as_ptr().cast(), out, b.len());
        Ok(())
    })
}

/// # Safety
/// `kp` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sk_keypair_free(kp: *mut SkKeyPair) {
    if !kp.is_null() {
        drop(Box::from_raw(kp));
    }
}

// ---- directory ----

#[no_mangle]
pub extern "C" fn sk_directory_new() -> *mut SkDirectory {
    Box::into_raw(Box::new(SkDirectory(MemoryDirectory::new())))
}

/// Publish a raw 64-byte public key under `locator`.
///
/// # Safety
/// `dir` must be live, `locator` NUL-terminated, `public_key` 64 bytes.
#[no_mangle]
pub unsafe extern "C" fn sk_directory_publish(
    dir: *const SkDirectory,
    locator: *const c_char,
    public_key: *const u8,
) -> SkStatus {
    guard(|| {
        let dir = deref(dir, "dir")?;
        let locator = string(locator, "locator")?;
        let key = PublicKey::from_bytes(bytes(public_key, SK_PUBLIC_KEY_LEN, "public_key")?)
            .or_else(|e| fail(SkStatus::InvalidArgument, e.to_string()))?;
        dir.0.publish(locator, key);
        Ok(())
    })
}

/// # Safety
/// `dir` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sk_directory_free(dir: *mut SkDirectory) {
    if !dir.is_null() {
        drop(Box::from_raw(dir));
    }
}

// ---- backup ----

unsafe fn instruction(owner: &KeyPair, i: *const SkInstruction) -> Res<RecoveryInstruction> {
    let i = deref(i, "instruction")?;
    let policy: VerificationPolicy = string(i.verification_policy, "verification_policy")?
        .parse()
        .or_else(|e: socialkey::BundleError| fail(SkStatus::InvalidArgument, e.to_string()))?;
    Ok(RecoveryInstruction {
        owner_display_name: string(i.owner_display_name, "owner_display_name")?,
        owner_key_fingerprint: owner.public_key().fingerprint(),
        directory_locator: string(i.directory_locator, "directory_locator")?,
        verification_policy: policy,
        legal_agent: optional_string(i.legal_agent, "legal_agent")?,
        freeform_note: optional_string(i.freeform_note, "freeform_note")?.unwrap_or_default(),
    })
}

/// Back up `secret` to `trustee_count` trustees, any `k` of whom can
/// release it. `trustee_keys` holds the raw 64-byte public keys back to
/// back. `seed` may be NULL (OS entropy) or point to a u64 for
/// reproducible output.
///
/// # Safety
/// All pointers must be valid for the lengths given.
#[no_mangle]
pub unsafe extern "C" fn sk_backup_create(
    owner: *const SkKeyPair,
    secret: *const u8,
    secret_len: usize,
    trustee_keys: *const u8,
    trustee_count: usize,
    k: usize,
    instr: *const SkInstruction,
    mode: SkMode,
    seed: *const u64,
    out: *mut *mut SkBundle,
) -> SkStatus {
    guard(|| {
        let owner = &deref(owner, "owner")?.0;
        let secret = bytes(secret, secret_len, "secret")?;
        let keys = bytes(
            trustee_keys,
            trustee_count.saturating_mul(SK_PUBLIC_KEY_LEN),
            "trustee_keys",
        )?;
        let trustees = keys
            .chunks(SK_PUBLIC_KEY_LEN)
            .enumerate()
            .map(|(i, raw)| {
                let key = PublicKey::from_bytes(raw)
                    .or_else(|e| fail(SkStatus::InvalidArgument, format!("trustee {i}: {e}")))?;
                Ok(TrusteeDescriptor::new(format!("trustee {i}"), "", key))
            })
            .collect::<Res<Vec<_>>>()?;
        let instruction = instruction(owner, instr)?;
        let mode = match mode {
            SkMode::IndirectPermission => BackupMode::IndirectPermission,
            SkMode::IndirectEscrow => BackupMode::IndirectEscrow,
        };
        let seed = if seed.is_null() { None } else { Some(*seed) };
        let bundle = create_backup(
            owner,
            secret,
            &trustees,
            k,
            &instruction,
            mode,
            &mut rng(seed),
        )?;
        put(out, Box::into_raw(Box::new(SkBundle(bundle))), "out")
    })
}

/// Serialize a bundle, binary or armored text.
///
/// # Safety
/// `bundle` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_bundle_encode(
    bundle: *const SkBundle,
    armored: bool,
    out: *mut SkBuffer,
) -> SkStatus {
    guard(|| {
        let bytes = encode_bundle(&deref(bundle, "bundle")?.0);
        let bytes = if armored {
            armor(&bytes).into_bytes()
        } else {
            bytes
        };
        put(out, SkBuffer::from_vec(bytes), "out")
    })
}

/// Parse a bundle from binary or armored bytes (detected by content).
///
/// # Safety
/// `data` must be valid for `len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_bundle_decode(
    data: *const u8,
    len: usize,
    out: *mut *mut SkBundle,
) -> SkStatus {
    guard(|| {
        let raw = bytes(data, len, "data")?;
        let decoded;
        let binary = match std::str::from_utf8(raw) {
            Ok(text)
                if text
                    .trim_start()
                    .starts_with(socialkey::bundle::ARMOR_HEADER) =>
            {
                decoded = dearmor(text).or_else(|e| fail(SkStatus::Malformed, e.to_string()))?;
                &decoded[..]
            }
            _ => raw,
        };
        let bundle = decode_bundle(binary).or_else(|e| fail(SkStatus::Malformed, e.to_string()))?;
        put(out, Box::into_raw(Box::new(SkBundle(bundle))), "out")
    })
}

/// Threshold k and trustee count n.
///
/// # Safety
/// `bundle` must be live; `k` and `n` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_bundle_params(
    bundle: *const SkBundle,
    k: *mut u16,
    n: *mut u16,
) -> SkStatus {
    guard(|| {
        let b = &deref(bundle, "bundle")?.0;
        put(k, b.threshold, "k")?;
        put(n, b.trustee_count, "n")
    })
}

/// # Safety
/// `bundle` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sk_bundle_free(bundle: *mut SkBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

// ---- recovery ----

/// Trustee side: open the request carried by `bundle`, authenticate it
/// against `dir`, apply the verdict. Always writes the reply frame to
/// `out`; returns `Refused` with `*refusal_code` set when no share is
/// released, `Ok` with `*refusal_code = 0` otherwise.
///
/// # Safety
/// All handles must be live; `out` and `refusal_code` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_trustee_respond(
    trustee: *const SkKeyPair,
    bundle: *const SkBundle,
    dir: *const SkDirectory,
    verdict: SkVerdict,
    out: *mut SkBuffer,
    refusal_code: *mut u8,
) -> SkStatus {
    guard(|| {
        let trustee = &deref(trustee, "trustee")?.0;
        let bundle = &deref(bundle, "bundle")?.0;
        let dir = &deref(dir, "dir")?.0;
        let verdict = match verdict {
            SkVerdict::Confirmed => SocialAuthVerdict::ConfirmedOwner,
            SkVerdict::Rejected => SocialAuthVerdict::Rejected,
            SkVerdict::Ignored => SocialAuthVerdict::Ignored,
        };
        if out.is_null() || refusal_code.is_null() {
            return fail(SkStatus::NullPointer, "out or refusal_code is NULL");
        }
        match socialkey::trustee_handle_request(trustee, &bundle.sealed_packets, dir, verdict) {
            TrusteeReply::Share(r) => {
                out.write(SkBuffer::from_vec(encode_frame(&Message::ShareResponse(r))));
                refusal_code.write(0);
                Ok(())
            }
            TrusteeReply::Refusal(reason) => {
                out.write(SkBuffer::from_vec(encode_frame(&Message::Refusal(reason))));
                refusal_code.write(reason.code());
                fail(SkStatus::Refused, format!("trustee refused: {reason}"))
            }
        }
    })
}

/// Start collecting shares for `bundle`. The bundle handle stays owned by
/// the caller.
///
/// # Safety
/// `bundle` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_session_open(
    bundle: *const SkBundle,
    out: *mut *mut SkSession,
) -> SkStatus {
    guard(|| {
        let session = RecoverySession::open(deref(bundle, "bundle")?.0.clone())?;
        put(out, Box::into_raw(Box::new(SkSession(session))), "out")
    })
}

/// Feed a trustee reply frame into the session.
///
/// # Safety
/// `session` must be live; `frame` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sk_session_absorb(
    session: *mut SkSession,
    frame: *const u8,
    len: usize,
) -> SkStatus {
    guard(|| {
        let session = &mut deref_mut(session, "session")?.0;
        match decode_frame(bytes(frame, len, "frame")?) {
            Ok(Message::ShareResponse(r)) => Ok(session.absorb(r)?),
            Ok(Message::Refusal(reason)) => {
                fail(SkStatus::Refused, format!("trustee refused: {reason}"))
            }
            Ok(other) => fail(
                SkStatus::InvalidArgument,
                format!("expected a share_response, found {}", other.kind_name()),
            ),
            Err(e) => fail(SkStatus::Malformed, e.to_string()),
        }
    })
}

/// # Safety
/// `session` must be live; `state` and `collected` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_session_status(
    session: *const SkSession,
    state: *mut SkSessionState,
    collected: *mut usize,
) -> SkStatus {
    guard(|| {
        let s = &deref(session, "session")?.0;
        let st = match s.state() {
            SessionState::Collecting => SkSessionState::Collecting,
            SessionState::Ready => SkSessionState::Ready,
            SessionState::Finished => SkSessionState::Finished,
            SessionState::Aborted => SkSessionState::Aborted,
        };
        put(state, st, "state")?;
        put(collected, s.collected_count(), "collected")
    })
}

/// Reconstruct the secret. Free the result with `sk_buffer_free`.
///
/// # Safety
/// `session` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_session_finish(
    session: *mut SkSession,
    out: *mut SkBuffer,
) -> SkStatus {
    guard(|| {
        if out.is_null() {
            return fail(SkStatus::NullPointer, "out is NULL");
        }
        out.write(SkBuffer::EMPTY);
        let secret = deref_mut(session, "session")?.0.finish()?;
        out.write(SkBuffer::from_vec(secret.to_vec()));
        Ok(())
    })
}

/// # Safety
/// `session` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sk_session_free(session: *mut SkSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

// ---- analysis ----

/// Real-world default model.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_default_model(out: *mut SkModel) -> SkStatus {
    guard(|| {
        let d = analysis::default_params();
        let m = d.model;
        put(
            out,
            SkModel {
                contacts: m.contacts,
                p_steal: m.p_steal,
                p1: m.p1,
                p2: m.p2,
                q1: m.q1,
                q2: m.q2,
                q3: m.q3,
                unavailability: d.unavailability,
            },
            "out",
        )
    })
}

fn analysis_err(e: analysis::AnalysisError) -> Failure {
    Failure(SkStatus::Analysis, e.to_string())
}

/// Probability an attacker holding the bundle fools k of n trustees.
///
/// # Safety
/// `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_attack_success(
    model: *const SkModel,
    k: u32,
    n: u32,
    out: *mut f64,
) -> SkStatus {
    guard(|| {
        let params: AnalysisParams = (*deref(model, "model")?).into();
        let p = analysis::attack_success_exact(&params, k, n).map_err(analysis_err)?;
        put(out, p, "out")
    })
}

/// Probability more than n - k trustees are unavailable.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_recovery_unreliability(
    unavailability: f64,
    k: u32,
    n: u32,
    out: *mut f64,
) -> SkStatus {
    guard(|| {
        let q = analysis::recovery_unreliability(unavailability, k, n).map_err(analysis_err)?;
        put(out, q, "out")
    })
}

/// Threshold minimizing the combined failure rate for n trustees.
///
/// # Safety
/// `model`, `k_star` and `f_min` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_optimal_threshold(
    model: *const SkModel,
    n: u32,
    k_star: *mut u32,
    f_min: *mut f64,
) -> SkStatus {
    guard(|| {
        let params: AnalysisParams = (*deref(model, "model")?).into();
        let opt = analysis::optimal_threshold(&params, n).map_err(analysis_err)?;
        put(k_star, opt.k_star, "k_star")?;
        put(f_min, opt.f_min, "f_min")
    })
}
