//! The owner-held backup artifact and its encodings.
//!
//! Binary layout (`.qrb`), all integers big-endian:
//!
//! ```text
//! magic "QRB1" | version u8 | mode u8 | k u16 | n u16
//! | secret_len u32 | secret bytes (nonce ‖ ciphertext, absent when 0)
//! | packet_count u16 | { packet_len u32 | ephemeral_pk ‖ ciphertext }*
//! ```
//!
//! The armored form (`.qrb.txt`) wraps those bytes in Base64 lines of at
//! most 64 characters, followed by a `=` line carrying the CRC-32 of the
//! Base64 text (whitespace removed) as eight lowercase hex digits.

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::seq::SliceRandom;
use rand::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::Zeroizing;

use crate::crypto::{AeadCiphertext, SealedBlob, Signature, SIGNATURE_LEN};
use crate::sss::Share;
use crate::wire::{put_prefixed, Reader, Truncated};

pub const MAGIC: &[u8; 4] = b"QRB1";
pub const FORMAT_VERSION: u8 = 1;
pub const ARMOR_HEADER: &str = "-----BEGIN QR BACKUP-----";
pub const ARMOR_FOOTER: &str = "-----END QR BACKUP-----";
const ARMOR_LINE: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BundleError {
    #[error("bad magic: not a backup bundle")]
    BadMagic,
    #[error("unsupported bundle version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown bundle mode {0}")]
    UnknownMode(u8),
    #[error("bundle truncated")]
    Truncated,
    #[error("{0} trailing bytes after bundle")]
    TrailingBytes(usize),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("malformed field: {0}")]
    Malformed(String),
}

impl From<Truncated> for BundleError {
    fn from(_: Truncated) -> Self {
        BundleError::Truncated
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArmorError {
    #[error("bad armor header or footer: {0}")]
    BadHeader(String),
    #[error("armor checksum line missing")]
    MissingChecksum,
    #[error("armor checksum mismatch")]
    ChecksumMismatch,
    #[error("armor body is not valid base64")]
    BadEncoding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerificationPolicy {
    InPerson,
    LiveVideo,
    VoiceCall,
    Any,
}

impl VerificationPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            VerificationPolicy::InPerson => "in_person",
            VerificationPolicy::LiveVideo => "live_video",
            VerificationPolicy::VoiceCall => "voice_call",
            VerificationPolicy::Any => "any",
        }
    }
}

impl fmt::Display for VerificationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerificationPolicy {
    type Err = BundleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in_person" => Ok(VerificationPolicy::InPerson),
            "live_video" => Ok(VerificationPolicy::LiveVideo),
            "voice_call" => Ok(VerificationPolicy::VoiceCall),
            "any" => Ok(VerificationPolicy::Any),
            other => Err(BundleError::Malformed(format!(
                "unknown verification policy {other:?}"
            ))),
        }
    }
}

/// What a trustee reads once their packet opens: who the owner claims to
/// be, where to fetch the owner's key, and how to confirm them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryInstruction {
    pub owner_display_name: String,
    /// Lowercase hex of the owner public key fingerprint.
    pub owner_key_fingerprint: String,
    pub directory_locator: String,
    pub verification_policy: VerificationPolicy,
    pub legal_agent: Option<String>,
    pub freeform_note: String,
}

impl RecoveryInstruction {
    /// Fields in declaration order, each u32-BE length + UTF-8. An absent
    /// legal agent encodes as length 0.
    pub fn canonical_encoding(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_prefixed(&mut out, self.owner_display_name.as_bytes());
        put_prefixed(&mut out, self.owner_key_fingerprint.as_bytes());
        put_prefixed(&mut out, self.directory_locator.as_bytes());
        put_prefixed(&mut out, self.verification_policy.as_str().as_bytes());
        put_prefixed(
            &mut out,
            self.legal_agent.as_deref().unwrap_or_default().as_bytes(),
        );
        put_prefixed(&mut out, self.freeform_note.as_bytes());
        out
    }

    pub fn from_canonical(bytes: &[u8]) -> Result<RecoveryInstruction, BundleError> {
        let mut r = Reader::new(bytes);
        let mut text = || -> Result<String, BundleError> {
            let raw = r.prefixed()?;
            String::from_utf8(raw.to_vec())
                .map_err(|_| BundleError::Malformed("instruction field is not UTF-8".into()))
        };
        let owner_display_name = text()?;
        let owner_key_fingerprint = text()?;
        let directory_locator = text()?;
        let verification_policy = text()?.parse()?;
        let legal_agent = Some(text()?).filter(|s| !s.is_empty());
        let freeform_note = text()?;
        if r.remaining() != 0 {
            return Err(BundleError::TrailingBytes(r.remaining()));
        }
        Ok(RecoveryInstruction {
            owner_display_name,
            owner_key_fingerprint,
            directory_locator,
            verification_policy,
            legal_agent,
            freeform_note,
        })
    }
}

/// Plaintext of one sealed packet: share, instruction, owner signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharePacketPlain {
    pub share: Share,
    pub instruction: RecoveryInstruction,
    pub signature: Signature,
}

impl SharePacketPlain {
    /// `len ‖ share ‖ len ‖ instruction ‖ signature(64)`
    pub fn encode(&self) -> Zeroizing<Vec<u8>> {
        let mut out = Zeroizing::new(Vec::new());
        put_prefixed(&mut out, &Zeroizing::new(self.share.to_bytes()));
        put_prefixed(&mut out, &self.instruction.canonical_encoding());
        out.extend_from_slice(&self.signature.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<SharePacketPlain, BundleError> {
        let mut r = Reader::new(bytes);
        let share = Share::from_bytes(r.prefixed()?)
            .map_err(|e| BundleError::Malformed(format!("share: {e}")))?;
        let instruction = RecoveryInstruction::from_canonical(r.prefixed()?)?;
        let signature = Signature::from_slice(r.take(SIGNATURE_LEN)?)
            .map_err(|e| BundleError::Malformed(e.to_string()))?;
        if r.remaining() != 0 {
            return Err(BundleError::TrailingBytes(r.remaining()));
        }
        Ok(SharePacketPlain {
            share,
            instruction,
            signature,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackupMode {
    /// The secret is encrypted under a random key; only that key is shared.
    IndirectPermission,
    /// The secret itself is shared. Trustees who cooperate learn shares of
    /// the secret, so this mode exists for comparison only.
    IndirectEscrow,
}

impl BackupMode {
    pub fn code(self) -> u8 {
        match self {
            BackupMode::IndirectPermission => 1,
            BackupMode::IndirectEscrow => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<BackupMode, BundleError> {
        match code {
            1 => Ok(BackupMode::IndirectPermission),
            2 => Ok(BackupMode::IndirectEscrow),
            other => Err(BundleError::UnknownMode(other)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BackupMode::IndirectPermission => "indirect_permission",
            BackupMode::IndirectEscrow => "indirect_escrow",
        }
    }
}

impl FromStr for BackupMode {
    type Err = BundleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "indirect_permission" | "indirect-permission" => Ok(BackupMode::IndirectPermission),
            "indirect_escrow" | "indirect-escrow" => Ok(BackupMode::IndirectEscrow),
            other => Err(BundleError::Malformed(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackupBundle {
    pub version: u8,
    pub mode: BackupMode,
    pub threshold: u16,
    pub trustee_count: u16,
    pub encrypted_secret: Option<AeadCiphertext>,
    pub sealed_packets: Vec<SealedBlob>,
}

impl BackupBundle {
    pub fn validate(&self) -> Result<(), BundleError> {
        if self.version != FORMAT_VERSION {
            return Err(BundleError::UnsupportedVersion(self.version));
        }
        let (k, n) = (self.threshold as usize, self.trustee_count as usize);
        if k < 1 || k > n {
            return Err(BundleError::Structural(format!(
                "need 1 <= k <= n, got k={k} n={n}"
            )));
        }
        if self.sealed_packets.len() != n {
            return Err(BundleError::Structural(format!(
                "declared n={n} but {} packets present",
                self.sealed_packets.len()
            )));
        }
        match (self.mode, &self.encrypted_secret) {
            (BackupMode::IndirectPermission, None) => Err(BundleError::Structural(
                "indirect_permission bundle without encrypted secret".into(),
            )),
            (BackupMode::IndirectEscrow, Some(_)) => Err(BundleError::Structural(
                "indirect_escrow bundle must not carry an encrypted secret".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Put the packets in random order so their position says nothing about
    /// the order trustees were listed in.
    pub fn shuffle_packets<R: RngCore + CryptoRng>(&mut self, rng: &mut R) {
        self.sealed_packets.shuffle(rng);
    }
}

pub fn encode_bundle(b: &BackupBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(b.version);
    out.push(b.mode.code());
    out.extend_from_slice(&b.threshold.to_be_bytes());
    out.extend_from_slice(&b.trustee_count.to_be_bytes());
    match &b.encrypted_secret {
        Some(ct) => put_prefixed(&mut out, &ct.to_bytes()),
        None => out.extend_from_slice(&0u32.to_be_bytes()),
    }
    out.extend_from_slice(&(b.sealed_packets.len() as u16).to_be_bytes());
    for blob in &b.sealed_packets {
        put_prefixed(&mut out, &blob.to_bytes());
    }
    out
}

pub fn decode_bundle(bytes: &[u8]) -> Result<BackupBundle, BundleError> {
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(|_| BundleError::BadMagic)? != MAGIC {
        return Err(BundleError::BadMagic);
    }
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        return Err(BundleError::UnsupportedVersion(version));
    }
    let mode = BackupMode::from_code(r.u8()?)?;
    let threshold = r.u16()?;
    let trustee_count = r.u16()?;
    let secret = r.prefixed()?;
    let encrypted_secret = if secret.is_empty() {
        None
    } else {
        Some(
            AeadCiphertext::from_bytes(secret)
                .map_err(|e| BundleError::Malformed(e.to_string()))?,
        )
    };
    let count = r.u16()? as usize;
    let mut sealed_packets = Vec::with_capacity(count.min(256));
    for _ in 0..count {
        let raw = r.prefixed()?;
        sealed_packets
            .push(SealedBlob::from_bytes(raw).map_err(|e| BundleError::Malformed(e.to_string()))?);
    }
    if r.remaining() != 0 {
        return Err(BundleError::TrailingBytes(r.remaining()));
    }
    let bundle = BackupBundle {
        version,
        mode,
        threshold,
        trustee_count,
        encrypted_secret,
        sealed_packets,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn crc_hex(body: &str) -> String {
    format!("{:08x}", crc32fast::hash(body.as_bytes()))
}

pub fn armor(bytes: &[u8]) -> String {
    let body = STANDARD.encode(bytes);
    let mut out = String::with_capacity(body.len() + body.len() / ARMOR_LINE + 80);
    out.push_str(ARMOR_HEADER);
    out.push('\n');
    for line in body.as_bytes().chunks(ARMOR_LINE) {
        // base64 output is ASCII
        out.push_str(std::str::from_utf8(line).expect("ascii"));
        out.push('\n');
    }
    out.push('=');
    out.push_str(&crc_hex(&body));
    out.push('\n');
    out.push_str(ARMOR_FOOTER);
    out.push('\n');
    out
}

pub fn dearmor(text: &str) -> Result<Vec<u8>, ArmorError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some(ARMOR_HEADER) => {}
        other => {
            return Err(ArmorError::BadHeader(format!(
                "expected {ARMOR_HEADER}, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut inner = Vec::new();
    let mut closed = false;
    for line in lines.by_ref() {
        if line == ARMOR_FOOTER {
            closed = true;
            break;
        }
        inner.push(line);
    }
    if !closed {
        return Err(ArmorError::BadHeader(format!("missing {ARMOR_FOOTER}")));
    }
    if lines.next().is_some() {
        return Err(ArmorError::BadHeader("content after footer".into()));
    }
    // the checksum is always the last line; earlier lines may legitimately
    // start with base64 padding after rewrapping
    let checksum = inner
        .pop()
        .and_then(|l| l.strip_prefix('='))
        .ok_or(ArmorError::MissingChecksum)?
        .trim();
    let body: String = inner
        .iter()
        .flat_map(|l| l.chars())
        .filter(|c| !c.is_whitespace())
        .collect();
    if !checksum.eq_ignore_ascii_case(&crc_hex(&body)) {
        return Err(ArmorError::ChecksumMismatch);
    }
    STANDARD
        .decode(body.as_bytes())
        .map_err(|_| ArmorError::BadEncoding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_bundle(mode: BackupMode, k: u16, n: u16) -> BackupBundle {
        BackupBundle {
            version: FORMAT_VERSION,
            mode,
            threshold: k,
            trustee_count: n,
            encrypted_secret: (mode == BackupMode::IndirectPermission).then(|| AeadCiphertext {
                nonce: [7; 24],
                ciphertext: vec![1; 48],
            }),
            sealed_packets: (0..n)
                .map(|i| SealedBlob {
                    ephemeral_public: [i as u8; 32],
                    ciphertext: vec![0xEE; 100 + i as usize],
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip_three_of_five() {
        let b = sample_bundle(BackupMode::IndirectPermission, 3, 5);
        let bytes = encode_bundle(&b);
        assert_eq!(&bytes[..4], b"QRB1");
        assert_eq!(decode_bundle(&bytes).unwrap(), b);
        assert_eq!(encode_bundle(&b), bytes);
    }

    #[test]
    fn header_layout() {
        let b = sample_bundle(BackupMode::IndirectEscrow, 2, 3);
        let bytes = encode_bundle(&b);
        assert_eq!(
            &bytes[..14],
            &[b'Q', b'R', b'B', b'1', 1, 2, 0, 2, 0, 3, 0, 0, 0, 0]
        );
        assert_eq!(&bytes[14..16], &[0, 3]);
    }

    #[test]
    fn decode_errors() {
        let bytes = encode_bundle(&sample_bundle(BackupMode::IndirectPermission, 3, 5));
        assert_eq!(
            decode_bundle(&bytes[..bytes.len() - 1]),
            Err(BundleError::Truncated)
        );
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert_eq!(decode_bundle(&v2), Err(BundleError::UnsupportedVersion(2)));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert_eq!(decode_bundle(&magic), Err(BundleError::BadMagic));
        let mut k_over_n = bytes.clone();
        k_over_n[6..8].copy_from_slice(&6u16.to_be_bytes());
        assert!(matches!(
            decode_bundle(&k_over_n),
            Err(BundleError::Structural(_))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(decode_bundle(&extra), Err(BundleError::TrailingBytes(1)));
        let mut mode = bytes;
        mode[5] = 9;
        assert_eq!(decode_bundle(&mode), Err(BundleError::UnknownMode(9)));
    }

    #[test]
    fn mode_law_enforced() {
        let mut b = sample_bundle(BackupMode::IndirectEscrow, 2, 3);
        b.encrypted_secret = Some(AeadCiphertext {
            nonce: [0; 24],
            ciphertext: vec![0; 16],
        });
        assert!(matches!(
            decode_bundle(&encode_bundle(&b)),
            Err(BundleError::Structural(_))
        ));
        let mut b = sample_bundle(BackupMode::IndirectPermission, 2, 3);
        b.encrypted_secret = None;
        assert!(matches!(
            decode_bundle(&encode_bundle(&b)),
            Err(BundleError::Structural(_))
        ));
    }

    #[test]
    fn instruction_canonical_round_trip() {
        let instr = RecoveryInstruction {
            owner_display_name: "Alice Example".into(),
            owner_key_fingerprint: "0123456789abcdef".into(),
            directory_locator: "dir://alice".into(),
            verification_policy: VerificationPolicy::LiveVideo,
            legal_agent: Some("Bob & Partners".into()),
            freeform_note: "call me on video".into(),
        };
        let enc = instr.canonical_encoding();
        assert_eq!(&enc[..4], &13u32.to_be_bytes());
        assert_eq!(RecoveryInstruction::from_canonical(&enc).unwrap(), instr);
        let absent = RecoveryInstruction {
            legal_agent: None,
            ..instr
        };
        assert_eq!(
            RecoveryInstruction::from_canonical(&absent.canonical_encoding()).unwrap(),
            absent
        );
    }

    #[test]
    fn armor_shape() {
        let text = armor(&[0xAB; 200]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ARMOR_HEADER);
        assert_eq!(*lines.last().unwrap(), ARMOR_FOOTER);
        assert!(lines.iter().all(|l| l.len() <= 64));
        assert!(lines[lines.len() - 2].starts_with('='));
    }

    #[test]
    fn armor_missing_footer() {
        let text = armor(b"hello");
        let cut: String = text
            .lines()
            .filter(|l| *l != ARMOR_FOOTER)
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(dearmor(&cut), Err(ArmorError::BadHeader(_))));
        assert!(matches!(
            dearmor("garbage\n"),
            Err(ArmorError::BadHeader(_))
        ));
    }

    #[test]
    fn armor_tolerates_whitespace() {
        let data: Vec<u8> = (0..=255).collect();
        let text = armor(&data);
        let messy = format!(
            "\n  {}  \r\n",
            text.replace('\n', "\r\n\t").replace("\t=", "\n\n=")
        );
        assert_eq!(dearmor(&messy).unwrap(), data);
    }

    const B64: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

    proptest! {
        #[test]
        fn armor_round_trip(data in proptest::collection::vec(any::<u8>(), 0..600), width in 1usize..100) {
            let text = armor(&data);
            prop_assert_eq!(dearmor(&text).unwrap(), data.clone());
            // rewrap body lines at an arbitrary width
            let lines: Vec<&str> = text.lines().collect();
            let body: String = lines[1..lines.len() - 2].concat();
            let mut rewrapped = String::from(ARMOR_HEADER);
            rewrapped.push('\n');
            for chunk in body.as_bytes().chunks(width) {
                rewrapped.push_str(std::str::from_utf8(chunk).unwrap());
                rewrapped.push('\n');
            }
            rewrapped.push_str(lines[lines.len() - 2]);
            rewrapped.push('\n');
            rewrapped.push_str(ARMOR_FOOTER);
            prop_assert_eq!(dearmor(&rewrapped).unwrap(), data);
        }

        #[test]
        fn armor_single_char_corruption(data in proptest::collection::vec(any::<u8>(), 1..300), pos: usize, sub: usize) {
            let text = armor(&data);
            let body_positions: Vec<usize> = text
                .char_indices()
                .filter(|&(i, c)| {
                    let line_start = text[..i].rfind('\n').map_or(0, |p| p + 1);
                    i > ARMOR_HEADER.len()
                        && !text[line_start..].starts_with('=')
                        && !text[line_start..].starts_with("-----")
                        && c != '\n'
                        && c != '='
                })
                .map(|(i, _)| i)
                .collect();
            let at = body_positions[pos % body_positions.len()];
            let original = text.as_bytes()[at];
            let mut replacement = B64[sub % B64.len()];
            if replacement == original {
                replacement = B64[(sub + 1) % B64.len()];
            }
            let mut corrupted = text.into_bytes();
            corrupted[at] = replacement;
            let corrupted = String::from_utf8(corrupted).unwrap();
            prop_assert_eq!(dearmor(&corrupted), Err(ArmorError::ChecksumMismatch));
        }

        #[test]
        fn bundle_round_trip(k in 1u16..6, extra in 0u16..4, escrow: bool) {
            let mode = if escrow { BackupMode::IndirectEscrow } else { BackupMode::IndirectPermission };
            let b = sample_bundle(mode, k, k + extra);
            prop_assert_eq!(decode_bundle(&encode_bundle(&b)).unwrap(), b);
        }
    }
}
