//! Backup and recovery ceremonies.
//!
//! Backup (owner only):
//!
//! 1. generate a random key RK and encrypt the secret under it
//! 2. split RK into n shares, one per trustee
//! 3. attach the recovery instruction to every share
//! 4. sign `digest(share, instruction)` with the owner identity
//! 5. seal `(share, instruction, signature)` to each trustee public key
//! 6. keep the ciphertext and the shuffled sealed packets, drop everything else
//!
//! Recovery: the owner hands the whole packet set to each trustee. A trustee
//! trial-opens every packet, checks the owner signature against the key the
//! directory publishes for the owner, confirms the owner in person (an
//! injected verdict), and only then releases the share. The owner collects k
//! shares, rebuilds RK and decrypts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::RwLock;

use rand::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::Zeroizing;

use crate::bundle::{
    decode_bundle, encode_bundle, BackupBundle, BackupMode, BundleError, RecoveryInstruction,
    SharePacketPlain, FORMAT_VERSION,
};
use crate::crypto::{
    self, canonical_digest, generate_symmetric_key, seal, sign, symmetric_decrypt,
    symmetric_encrypt, unseal, CryptoError, KeyPair, PublicKey, SealedBlob, SymmetricKey,
};
use crate::sss::{self, Share, SssError};
use crate::wire::{put_prefixed, Reader};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("parameter violation: {0}")]
    ParameterViolation(String),
    #[error("duplicate trustee public key ({0})")]
    DuplicateTrusteeKey(String),
    #[error("instruction fingerprint {found} does not match owner key {expected}")]
    InstructionMismatch { expected: String, found: String },
    #[error("malformed bundle: {0}")]
    MalformedBundle(#[from] BundleError),
    #[error("session already finished or aborted")]
    SessionFinished,
    #[error("session not ready: have {have} of {need} shares")]
    NotReady { have: usize, need: usize },
    #[error("share length {found} does not match collected shares ({expected})")]
    ShareMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Sharing(#[from] SssError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DirectoryError {
    #[error("directory unreachable: {0}")]
    Unavailable(String),
    #[error("no key published under {0:?}")]
    NotFound(String),
}

/// Where public keys are published and fetched by locator.
pub trait IdentityDirectory {
    fn lookup(&self, locator: &str) -> Result<PublicKey, DirectoryError>;
}

/// In-process directory; safe to share between threads.
#[derive(Debug, Default)]
pub struct MemoryDirectory {
    keys: RwLock<HashMap<String, PublicKey>>,
}

impl MemoryDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, locator: impl Into<String>, key: PublicKey) {
        self.keys
            .write()
            .expect("directory lock poisoned")
            .insert(locator.into(), key);
    }

    pub fn remove(&self, locator: &str) -> Option<PublicKey> {
        self.keys
            .write()
            .expect("directory lock poisoned")
            .remove(locator)
    }

    pub fn entries(&self) -> Vec<(String, PublicKey)> {
        let mut out: Vec<_> = self
            .keys
            .read()
            .expect("directory lock poisoned")
            .iter()
            .map(|(l, k)| (l.clone(), *k))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

impl IdentityDirectory for MemoryDirectory {
    fn lookup(&self, locator: &str) -> Result<PublicKey, DirectoryError> {
        self.keys
            .read()
            .expect("directory lock poisoned")
            .get(locator)
            .copied()
            .ok_or_else(|| DirectoryError::NotFound(locator.to_string()))
    }
}

impl<D: IdentityDirectory + ?Sized> IdentityDirectory for &D {
    fn lookup(&self, locator: &str) -> Result<PublicKey, DirectoryError> {
        (**self).lookup(locator)
    }
}

/// A trustee as the owner knows them. The label is the owner's private
/// mnemonic and never enters the bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrusteeDescriptor {
    pub identity_label: String,
    /// Directory locator under which the trustee publishes their key.
    pub locator: String,
    pub public_key: PublicKey,
}

impl TrusteeDescriptor {
    pub fn new(label: impl Into<String>, locator: impl Into<String>, key: PublicKey) -> Self {
        TrusteeDescriptor {
            identity_label: label.into(),
            locator: locator.into(),
            public_key: key,
        }
    }
}

/// Build a backup of `secret` recoverable by any `k` of `trustees`.
pub fn create_backup<R: RngCore + CryptoRng>(
    owner: &KeyPair,
    secret: &[u8],
    trustees: &[TrusteeDescriptor],
    k: usize,
    instruction: &RecoveryInstruction,
    mode: BackupMode,
    rng: &mut R,
) -> Result<BackupBundle, ProtocolError> {
    let n = trustees.len();
    if secret.is_empty() {
        return Err(ProtocolError::ParameterViolation("secret is empty".into()));
    }
    if k < 1 || k > n || n > 255 {
        return Err(ProtocolError::ParameterViolation(format!(
            "need 1 <= k <= n <= 255, got k={k} n={n}"
        )));
    }
    let mut seen = HashSet::new();
    for t in trustees {
        if !seen.insert(t.public_key) {
            return Err(ProtocolError::DuplicateTrusteeKey(
                t.public_key.fingerprint(),
            ));
        }
    }
    let expected = owner.public_key().fingerprint();
    if instruction.owner_key_fingerprint != expected {
        return Err(ProtocolError::InstructionMismatch {
            expected,
            found: instruction.owner_key_fingerprint.clone(),
        });
    }

    let (encrypted_secret, shares) = match mode {
        BackupMode::IndirectPermission => {
            let rk = generate_symmetric_key(rng)?;
            let ct = symmetric_encrypt(&rk, secret, rng)?;
            let shares = sss::split(rk.as_bytes(), k, n, rng)?;
            (Some(ct), shares)
        }
        BackupMode::IndirectEscrow => (None, sss::split(secret, k, n, rng)?),
    };

    let mut sealed_packets = Vec::with_capacity(n);
    for (share, trustee) in shares.into_iter().zip(trustees) {
        let signature = sign(owner, &canonical_digest(&share, instruction));
        let plain = SharePacketPlain {
            share,
            instruction: instruction.clone(),
            signature,
        };
        sealed_packets.push(seal(&trustee.public_key, &plain.encode(), rng)?);
    }

    let mut bundle = BackupBundle {
        version: FORMAT_VERSION,
        mode,
        threshold: k as u16,
        trustee_count: n as u16,
        encrypted_secret,
        sealed_packets,
    };
    bundle.shuffle_packets(rng);
    Ok(bundle)
}

/// Replace a backup with a fresh one: new RK, new shares, any trustee set.
pub fn renew_backup<R: RngCore + CryptoRng>(
    owner: &KeyPair,
    secret: &[u8],
    new_trustees: &[TrusteeDescriptor],
    k: usize,
    instruction: &RecoveryInstruction,
    mode: BackupMode,
    rng: &mut R,
) -> Result<BackupBundle, ProtocolError> {
    create_backup(owner, secret, new_trustees, k, instruction, mode, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SocialAuthVerdict {
    ConfirmedOwner,
    Rejected,
    Ignored,
}

impl std::str::FromStr for SocialAuthVerdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "confirmed" | "confirmed_owner" => Ok(SocialAuthVerdict::ConfirmedOwner),
            "rejected" => Ok(SocialAuthVerdict::Rejected),
            "ignored" => Ok(SocialAuthVerdict::Ignored),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RefusalReason {
    NotMyPacket,
    BadSignature,
    FingerprintMismatch,
    OwnershipRejected,
    DirectoryUnavailable,
}

impl RefusalReason {
    pub const ALL: [RefusalReason; 5] = [
        RefusalReason::NotMyPacket,
        RefusalReason::BadSignature,
        RefusalReason::FingerprintMismatch,
        RefusalReason::OwnershipRejected,
        RefusalReason::DirectoryUnavailable,
    ];

    pub fn code(self) -> u8 {
        match self {
            RefusalReason::NotMyPacket => 1,
            RefusalReason::BadSignature => 2,
            RefusalReason::FingerprintMismatch => 3,
            RefusalReason::OwnershipRejected => 4,
            RefusalReason::DirectoryUnavailable => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<RefusalReason> {
        RefusalReason::ALL.into_iter().find(|r| r.code() == code)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RefusalReason::NotMyPacket => "not_my_packet",
            RefusalReason::BadSignature => "bad_signature",
            RefusalReason::FingerprintMismatch => "fingerprint_mismatch",
            RefusalReason::OwnershipRejected => "ownership_rejected",
            RefusalReason::DirectoryUnavailable => "directory_unavailable",
        }
    }
}

impl fmt::Display for RefusalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareResponse {
    pub share: Share,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrusteeReply {
    Share(ShareResponse),
    Refusal(RefusalReason),
}

/// A packet the trustee opened and authenticated, awaiting the human
/// judgment about who is asking.
#[derive(Debug, Clone)]
pub struct VerifiedPacket {
    packet: SharePacketPlain,
}

impl VerifiedPacket {
    pub fn instruction(&self) -> &RecoveryInstruction {
        &self.packet.instruction
    }

    pub fn share_index(&self) -> u8 {
        self.packet.share.index
    }

    /// Release the share only for a confirmed owner.
    pub fn release(self, verdict: SocialAuthVerdict) -> TrusteeReply {
        match verdict {
            SocialAuthVerdict::ConfirmedOwner => TrusteeReply::Share(ShareResponse {
                share: self.packet.share.clone(),
            }),
            SocialAuthVerdict::Rejected | SocialAuthVerdict::Ignored => {
                TrusteeReply::Refusal(RefusalReason::OwnershipRejected)
            }
        }
    }
}

/// Trial-open every packet, then authenticate the one that opens.
pub fn trustee_open_request(
    trustee: &KeyPair,
    sealed_packets: &[SealedBlob],
    directory: &dyn IdentityDirectory,
) -> Result<VerifiedPacket, RefusalReason> {
    let plaintext = sealed_packets
        .iter()
        .find_map(|blob| unseal(trustee, blob).ok())
        .ok_or(RefusalReason::NotMyPacket)?;
    let packet = SharePacketPlain::decode(&plaintext).map_err(|_| RefusalReason::BadSignature)?;
    let owner_key = directory
        .lookup(&packet.instruction.directory_locator)
        .map_err(|_| RefusalReason::DirectoryUnavailable)?;
    if owner_key.fingerprint() != packet.instruction.owner_key_fingerprint {
        return Err(RefusalReason::FingerprintMismatch);
    }
    let digest = canonical_digest(&packet.share, &packet.instruction);
    if !crypto::verify(&owner_key, &digest, &packet.signature) {
        return Err(RefusalReason::BadSignature);
    }
    Ok(VerifiedPacket { packet })
}

/// Full trustee step: open, authenticate, apply the verdict.
pub fn trustee_handle_request(
    trustee: &KeyPair,
    sealed_packets: &[SealedBlob],
    directory: &dyn IdentityDirectory,
    verdict: SocialAuthVerdict,
) -> TrusteeReply {
    match trustee_open_request(trustee, sealed_packets, directory) {
        Ok(packet) => packet.release(verdict),
        Err(reason) => TrusteeReply::Refusal(reason),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SessionState {
    Collecting,
    Ready,
    Finished,
    Aborted,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Collecting => "collecting",
            SessionState::Ready => "ready",
            SessionState::Finished => "finished",
            SessionState::Aborted => "aborted",
        }
    }
}

/// Owner-side accumulator of released shares.
#[derive(Debug, Clone)]
pub struct RecoverySession {
    bundle: BackupBundle,
    collected: BTreeMap<u8, Share>,
    state: SessionState,
}

impl RecoverySession {
    pub fn open(bundle: BackupBundle) -> Result<RecoverySession, ProtocolError> {
        bundle.validate()?;
        Ok(RecoverySession {
            bundle,
            collected: BTreeMap::new(),
            state: SessionState::Collecting,
        })
    }

    /// Rebuild a session from persisted parts, re-deriving the state.
    pub fn restore(
        bundle: BackupBundle,
        shares: impl IntoIterator<Item = Share>,
        state: SessionState,
    ) -> Result<RecoverySession, ProtocolError> {
        let mut session = RecoverySession::open(bundle)?;
        for share in shares {
            session.insert(share)?;
        }
        if matches!(state, SessionState::Finished | SessionState::Aborted) {
            session.state = state;
        }
        Ok(session)
    }

    pub fn bundle(&self) -> &BackupBundle {
        &self.bundle
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn threshold(&self) -> usize {
        self.bundle.threshold as usize
    }

    pub fn collected_count(&self) -> usize {
        self.collected.len()
    }

    pub fn shares(&self) -> impl Iterator<Item = &Share> {
        self.collected.values()
    }

    fn insert(&mut self, share: Share) -> Result<(), ProtocolError> {
        if let Some(existing) = self.collected.values().next() {
            if existing.payload.len() != share.payload.len() {
                return Err(ProtocolError::ShareMismatch {
                    expected: existing.payload.len(),
                    found: share.payload.len(),
                });
            }
        }
        self.collected.entry(share.index).or_insert(share);
        if self.collected.len() >= self.threshold() {
            self.state = SessionState::Ready;
        }
        Ok(())
    }

    /// Record a released share. Re-sending an index already held is a no-op.
    pub fn absorb(&mut self, response: ShareResponse) -> Result<(), ProtocolError> {
        match self.state {
            SessionState::Finished | SessionState::Aborted => Err(ProtocolError::SessionFinished),
            SessionState::Collecting | SessionState::Ready => self.insert(response.share),
        }
    }

    pub fn abort(&mut self) {
        self.collected.clear();
        self.state = SessionState::Aborted;
    }

    /// Reconstruct the protected secret from the first k collected shares.
    pub fn finish(&mut self) -> Result<Zeroizing<Vec<u8>>, ProtocolError> {
        match self.state {
            SessionState::Ready => {}
            SessionState::Collecting => {
                return Err(ProtocolError::NotReady {
                    have: self.collected.len(),
                    need: self.threshold(),
                })
            }
            SessionState::Finished | SessionState::Aborted => {
                return Err(ProtocolError::SessionFinished)
            }
        }
        let shares: Vec<Share> = self.collected.values().cloned().collect();
        let combined = Zeroizing::new(sss::combine(&shares, self.threshold())?);
        let secret = match (&self.bundle.mode, &self.bundle.encrypted_secret) {
            (BackupMode::IndirectPermission, Some(ct)) => {
                let rk = SymmetricKey::from_bytes(&combined)?;
                symmetric_decrypt(&rk, ct)?
            }
            (BackupMode::IndirectEscrow, None) => combined,
            _ => {
                return Err(ProtocolError::MalformedBundle(BundleError::Structural(
                    "mode and encrypted secret disagree".into(),
                )))
            }
        };
        self.collected.clear();
        self.state = SessionState::Finished;
        Ok(secret)
    }
}

const SESSION_MAGIC: &[u8; 4] = b"QRS1";

impl SessionState {
    fn code(self) -> u8 {
        match self {
            SessionState::Collecting => 0,
            SessionState::Ready => 1,
            SessionState::Finished => 2,
            SessionState::Aborted => 3,
        }
    }

    fn from_code(code: u8) -> Option<SessionState> {
        [
            SessionState::Collecting,
            SessionState::Ready,
            SessionState::Finished,
            SessionState::Aborted,
        ]
        .into_iter()
        .find(|s| s.code() == code)
    }
}

impl RecoverySession {
    /// Persisted form: `"QRS1" ‖ state u8 ‖ len u32 ‖ bundle ‖ count u16 ‖
    /// { len u32 ‖ share }*`. Collected shares are stored in the clear, so
    /// the file is as sensitive as the shares themselves.
    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        let mut out = Zeroizing::new(Vec::new());
        out.extend_from_slice(SESSION_MAGIC);
        out.push(self.state.code());
        put_prefixed(&mut out, &encode_bundle(&self.bundle));
        out.extend_from_slice(&(self.collected.len() as u16).to_be_bytes());
        for share in self.collected.values() {
            put_prefixed(&mut out, &Zeroizing::new(share.to_bytes()));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RecoverySession, ProtocolError> {
        let truncated = |_| ProtocolError::MalformedBundle(BundleError::Truncated);
        let mut r = Reader::new(bytes);
        if r.take(4).map_err(truncated)? != SESSION_MAGIC {
            return Err(ProtocolError::MalformedBundle(BundleError::BadMagic));
        }
        let state = SessionState::from_code(r.u8().map_err(truncated)?).ok_or_else(|| {
            ProtocolError::MalformedBundle(BundleError::Malformed("session state".into()))
        })?;
        let bundle = decode_bundle(r.prefixed().map_err(truncated)?)?;
        let count = r.u16().map_err(truncated)?;
        let mut shares = Vec::with_capacity(count as usize);
        for _ in 0..count {
            shares.push(Share::from_bytes(r.prefixed().map_err(truncated)?)?);
        }
        if r.remaining() != 0 {
            return Err(ProtocolError::MalformedBundle(BundleError::TrailingBytes(
                r.remaining(),
            )));
        }
        RecoverySession::restore(bundle, shares, state)
    }
}

pub fn open_recovery_session(bundle: BackupBundle) -> Result<RecoverySession, ProtocolError> {
    RecoverySession::open(bundle)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenewalReport {
    /// Trustees whose published key no longer matches the recorded one.
    pub changed: Vec<TrusteeDescriptor>,
    pub unavailable: Vec<(TrusteeDescriptor, DirectoryError)>,
}

impl RenewalReport {
    pub fn needs_renewal(&self) -> bool {
        !self.changed.is_empty()
    }
}

/// Compare every trustee's recorded key with what the directory serves now.
pub fn renewal_check(
    directory: &dyn IdentityDirectory,
    trustees: &[TrusteeDescriptor],
) -> RenewalReport {
    let mut report = RenewalReport {
        changed: Vec::new(),
        unavailable: Vec::new(),
    };
    for t in trustees {
        match directory.lookup(&t.locator) {
            Ok(current) if current == t.public_key => {}
            Ok(_) => report.changed.push(t.clone()),
            Err(e) => report.unavailable.push((t.clone(), e)),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{encode_bundle, VerificationPolicy};
    use crate::crypto::generate_identity_keypair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        owner: KeyPair,
        trustees: Vec<KeyPair>,
        descriptors: Vec<TrusteeDescriptor>,
        directory: MemoryDirectory,
        instruction: RecoveryInstruction,
        rng: ChaCha20Rng,
    }

    fn fixture(n: usize, seed: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let owner = generate_identity_keypair(&mut rng).unwrap();
        let trustees: Vec<KeyPair> = (0..n)
            .map(|_| generate_identity_keypair(&mut rng).unwrap())
            .collect();
        let directory = MemoryDirectory::new();
        directory.publish("owner", *owner.public_key());
        let descriptors = trustees
            .iter()
            .enumerate()
            .map(|(i, kp)| {
                directory.publish(format!("t{i}"), *kp.public_key());
                TrusteeDescriptor::new(format!("trustee {i}"), format!("t{i}"), *kp.public_key())
            })
            .collect();
        let instruction = RecoveryInstruction {
            owner_display_name: "Owner".into(),
            owner_key_fingerprint: owner.public_key().fingerprint(),
            directory_locator: "owner".into(),
            verification_policy: VerificationPolicy::InPerson,
            legal_agent: None,
            freeform_note: String::new(),
        };
        Fixture {
            owner,
            trustees,
            descriptors,
            directory,
            instruction,
            rng,
        }
    }

    fn backup(f: &mut Fixture, secret: &[u8], k: usize, mode: BackupMode) -> BackupBundle {
        create_backup(
            &f.owner,
            secret,
            &f.descriptors,
            k,
            &f.instruction,
            mode,
            &mut f.rng,
        )
        .unwrap()
    }

    fn share_of(reply: TrusteeReply) -> ShareResponse {
        match reply {
            TrusteeReply::Share(s) => s,
            TrusteeReply::Refusal(r) => panic!("refused: {r}"),
        }
    }

    #[test]
    fn three_of_five_round_trip() {
        let mut f = fixture(5, 1);
        let secret = b"my very secret private key bytes";
        let bundle = backup(&mut f, secret, 3, BackupMode::IndirectPermission);
        let mut session = open_recovery_session(bundle.clone()).unwrap();
        assert_eq!(session.collected_count(), 0);
        for t in [&f.trustees[4], &f.trustees[0], &f.trustees[2]] {
            let reply = trustee_handle_request(
                t,
                &bundle.sealed_packets,
                &f.directory,
                SocialAuthVerdict::ConfirmedOwner,
            );
            session.absorb(share_of(reply)).unwrap();
        }
        assert_eq!(session.state(), SessionState::Ready);
        assert_eq!(&*session.finish().unwrap(), secret);
        assert_eq!(session.state(), SessionState::Finished);
    }

    #[test]
    fn single_trustee_threshold() {
        let mut f = fixture(1, 2);
        let bundle = backup(&mut f, b"x", 1, BackupMode::IndirectPermission);
        let mut session = open_recovery_session(bundle.clone()).unwrap();
        assert_eq!(session.state(), SessionState::Collecting);
        let reply = trustee_handle_request(
            &f.trustees[0],
            &bundle.sealed_packets,
            &f.directory,
            SocialAuthVerdict::ConfirmedOwner,
        );
        session.absorb(share_of(reply)).unwrap();
        assert_eq!(&*session.finish().unwrap(), b"x");
    }

    #[test]
    fn backup_parameter_errors() {
        let mut f = fixture(3, 3);
        let mut dup = f.descriptors.clone();
        dup[2].public_key = dup[0].public_key;
        let err = create_backup(
            &f.owner,
            b"s",
            &dup,
            2,
            &f.instruction,
            BackupMode::IndirectPermission,
            &mut f.rng,
        )
        .unwrap_err();
        assert!(matches!(err, ProtocolError::DuplicateTrusteeKey(_)));
        for (k, secret) in [(0, &b"s"[..]), (4, b"s"), (2, b"")] {
            let err = create_backup(
                &f.owner,
                secret,
                &f.descriptors,
                k,
                &f.instruction,
                BackupMode::IndirectPermission,
                &mut f.rng,
            )
            .unwrap_err();
            assert!(matches!(err, ProtocolError::ParameterViolation(_)));
        }
        let mut wrong = f.instruction.clone();
        wrong.owner_key_fingerprint = "0000000000000000".into();
        assert!(matches!(
            create_backup(
                &f.owner,
                b"s",
                &f.descriptors,
                2,
                &wrong,
                BackupMode::IndirectPermission,
                &mut f.rng
            ),
            Err(ProtocolError::InstructionMismatch { .. })
        ));
    }

    #[test]
    fn verdict_gate_and_refusals() {
        let mut f = fixture(3, 4);
        let bundle = backup(&mut f, b"secret", 2, BackupMode::IndirectPermission);
        for verdict in [SocialAuthVerdict::Rejected, SocialAuthVerdict::Ignored] {
            assert_eq!(
                trustee_handle_request(
                    &f.trustees[0],
                    &bundle.sealed_packets,
                    &f.directory,
                    verdict
                ),
                TrusteeReply::Refusal(RefusalReason::OwnershipRejected)
            );
        }
        let stranger = generate_identity_keypair(&mut f.rng).unwrap();
        assert_eq!(
            trustee_handle_request(
                &stranger,
                &bundle.sealed_packets,
                &f.directory,
                SocialAuthVerdict::ConfirmedOwner
            ),
            TrusteeReply::Refusal(RefusalReason::NotMyPacket)
        );
        let empty = MemoryDirectory::new();
        assert_eq!(
            trustee_handle_request(
                &f.trustees[1],
                &bundle.sealed_packets,
                &empty,
                SocialAuthVerdict::ConfirmedOwner
            ),
            TrusteeReply::Refusal(RefusalReason::DirectoryUnavailable)
        );
        let impostor = MemoryDirectory::new();
        impostor.publish("owner", *stranger.public_key());
        assert_eq!(
            trustee_handle_request(
                &f.trustees[1],
                &bundle.sealed_packets,
                &impostor,
                SocialAuthVerdict::ConfirmedOwner
            ),
            TrusteeReply::Refusal(RefusalReason::FingerprintMismatch)
        );
    }

    #[test]
    fn tampered_share_is_bad_signature() {
        let mut f = fixture(3, 5);
        let bundle = backup(&mut f, b"secret", 2, BackupMode::IndirectPermission);
        let trustee = &f.trustees[1];
        let (pos, plain) = bundle
            .sealed_packets
            .iter()
            .enumerate()
            .find_map(|(i, b)| unseal(trustee, b).ok().map(|p| (i, p)))
            .unwrap();
        let mut packet = SharePacketPlain::decode(&plain).unwrap();
        packet.share.payload[0] ^= 0x80;
        let mut packets = bundle.sealed_packets.clone();
        packets[pos] = seal(trustee.public_key(), &packet.encode(), &mut f.rng).unwrap();
        assert_eq!(
            trustee_handle_request(
                trustee,
                &packets,
                &f.directory,
                SocialAuthVerdict::ConfirmedOwner
            ),
            TrusteeReply::Refusal(RefusalReason::BadSignature)
        );
    }

    #[test]
    fn session_transitions() {
        let mut f = fixture(3, 6);
        let bundle = backup(&mut f, b"abc", 2, BackupMode::IndirectPermission);
        let mut session = open_recovery_session(bundle.clone()).unwrap();
        assert!(matches!(
            session.finish(),
            Err(ProtocolError::NotReady { have: 0, need: 2 })
        ));
        let first = share_of(trustee_handle_request(
            &f.trustees[0],
            &bundle.sealed_packets,
            &f.directory,
            SocialAuthVerdict::ConfirmedOwner,
        ));
        session.absorb(first.clone()).unwrap();
        session.absorb(first.clone()).unwrap();
        assert_eq!(session.collected_count(), 1);
        assert_eq!(session.state(), SessionState::Collecting);
        let second = share_of(trustee_handle_request(
            &f.trustees[2],
            &bundle.sealed_packets,
            &f.directory,
            SocialAuthVerdict::ConfirmedOwner,
        ));
        session.absorb(second).unwrap();
        assert_eq!(session.state(), SessionState::Ready);
        session.finish().unwrap();
        assert_eq!(session.absorb(first), Err(ProtocolError::SessionFinished));
    }

    #[test]
    fn session_persists() {
        let mut f = fixture(3, 12);
        let bundle = backup(&mut f, b"persist", 2, BackupMode::IndirectPermission);
        let mut session = open_recovery_session(bundle.clone()).unwrap();
        session
            .absorb(share_of(trustee_handle_request(
                &f.trustees[1],
                &bundle.sealed_packets,
                &f.directory,
                SocialAuthVerdict::ConfirmedOwner,
            )))
            .unwrap();
        let restored = RecoverySession::from_bytes(&session.to_bytes()).unwrap();
        assert_eq!(restored.collected_count(), 1);
        assert_eq!(restored.state(), SessionState::Collecting);
        assert_eq!(restored.bundle(), session.bundle());
        assert!(RecoverySession::from_bytes(b"QRS1").is_err());
    }

    #[test]
    fn corrupted_share_fails_authentication() {
        let mut f = fixture(3, 7);
        let bundle = backup(&mut f, b"abc", 2, BackupMode::IndirectPermission);
        let mut session = open_recovery_session(bundle.clone()).unwrap();
        for (i, t) in f.trustees[..2].iter().enumerate() {
            let mut r = share_of(trustee_handle_request(
                t,
                &bundle.sealed_packets,
                &f.directory,
                SocialAuthVerdict::ConfirmedOwner,
            ));
            if i == 0 {
                r.share.payload[5] ^= 1;
            }
            session.absorb(r).unwrap();
        }
        assert_eq!(
            session.finish(),
            Err(ProtocolError::Crypto(CryptoError::AuthenticationFailure))
        );
    }

    #[test]
    fn escrow_mode_shares_secret_directly() {
        let mut f = fixture(3, 8);
        let bundle = backup(&mut f, b"escrowed", 2, BackupMode::IndirectEscrow);
        assert!(bundle.encrypted_secret.is_none());
        let mut session = open_recovery_session(bundle.clone()).unwrap();
        assert!(session.bundle().encrypted_secret.is_none());
        for t in &f.trustees[1..] {
            session
                .absorb(share_of(trustee_handle_request(
                    t,
                    &bundle.sealed_packets,
                    &f.directory,
                    SocialAuthVerdict::ConfirmedOwner,
                )))
                .unwrap();
        }
        assert_eq!(&*session.finish().unwrap(), b"escrowed");
    }

    #[test]
    fn bundle_hides_trustees_and_rk() {
        let mut f = fixture(5, 9);
        let bundle = backup(&mut f, &[0x5A; 32], 3, BackupMode::IndirectPermission);
        let bytes = encode_bundle(&bundle);
        for d in &f.descriptors {
            let pk = d.public_key.to_bytes();
            for needle in [
                &pk[..32],
                &pk[32..],
                &d.public_key.fingerprint_bytes()[..],
                d.identity_label.as_bytes(),
                d.public_key.fingerprint().as_bytes(),
            ] {
                assert!(!bytes.windows(needle.len()).any(|w| w == needle));
            }
        }
        // rebuild RK from all n released shares and make sure it is absent
        let shares: Vec<Share> = f
            .trustees
            .iter()
            .map(|t| {
                share_of(trustee_handle_request(
                    t,
                    &bundle.sealed_packets,
                    &f.directory,
                    SocialAuthVerdict::ConfirmedOwner,
                ))
                .share
            })
            .collect();
        let rk = sss::combine(&shares, 3).unwrap();
        assert_eq!(rk.len(), 32);
        assert!(!bytes.windows(32).any(|w| w == rk.as_slice()));
    }

    #[test]
    fn renewal_detects_rotation_and_outage() {
        let mut f = fixture(3, 10);
        assert_eq!(
            renewal_check(&f.directory, &f.descriptors),
            RenewalReport {
                changed: vec![],
                unavailable: vec![]
            }
        );
        let rotated = generate_identity_keypair(&mut f.rng).unwrap();
        f.directory.publish("t1", *rotated.public_key());
        let report = renewal_check(&f.directory, &f.descriptors);
        assert_eq!(report.changed, vec![f.descriptors[1].clone()]);
        assert!(report.needs_renewal());
        f.directory.remove("t2");
        let report = renewal_check(&f.directory, &f.descriptors);
        assert_eq!(report.unavailable.len(), 1);
        assert_eq!(report.unavailable[0].0, f.descriptors[2]);
    }

    #[test]
    fn renewed_bundle_shares_no_key_material() {
        let mut f = fixture(3, 11);
        let old = backup(&mut f, b"same secret", 2, BackupMode::IndirectPermission);
        let new = renew_backup(
            &f.owner,
            b"same secret",
            &f.descriptors,
            2,
            &f.instruction,
            BackupMode::IndirectPermission,
            &mut f.rng,
        )
        .unwrap();
        assert_ne!(old.encrypted_secret, new.encrypted_secret);

        let mut session = open_recovery_session(new).unwrap();
        for t in &f.trustees[..2] {
            session
                .absorb(share_of(trustee_handle_request(
                    t,
                    &old.sealed_packets,
                    &f.directory,
                    SocialAuthVerdict::ConfirmedOwner,
                )))
                .unwrap();
        }
        assert_eq!(
            session.finish(),
            Err(ProtocolError::Crypto(CryptoError::AuthenticationFailure))
        );
    }
}
