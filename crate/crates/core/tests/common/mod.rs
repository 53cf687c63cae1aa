#![allow(dead_code)]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use socialkey::{
    create_backup, BackupBundle, BackupMode, KeyPair, MemoryDirectory, RecoveryInstruction,
    TrusteeDescriptor, VerificationPolicy,
};

pub const OWNER_LOCATOR: &str = "owner@example.org";
pub const GOLDEN_SEED: u64 = 0x5eed_0001;
pub const GOLDEN_SECRET: &[u8] = b"correct horse battery staple / golden fixture secret";

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Deterministic identities: the owner is seed 0, trustee i is seed i.
pub fn identity(i: u8) -> KeyPair {
    KeyPair::from_seed([i; 32])
}

pub fn trustees(n: usize) -> Vec<KeyPair> {
    (1..=n as u8).map(identity).collect()
}

pub fn descriptors(keys: &[KeyPair]) -> Vec<TrusteeDescriptor> {
    keys.iter()
        .enumerate()
        .map(|(i, kp)| {
            TrusteeDescriptor::new(
                format!("trustee {}", i + 1),
                format!("trustee{}@example.org", i + 1),
                *kp.public_key(),
            )
        })
        .collect()
}

pub fn instruction(owner: &KeyPair) -> RecoveryInstruction {
    RecoveryInstruction {
        owner_display_name: "Alice Example".into(),
        owner_key_fingerprint: owner.public_key().fingerprint(),
        directory_locator: OWNER_LOCATOR.into(),
        verification_policy: VerificationPolicy::InPerson,
        legal_agent: None,
        freeform_note: "ask about the blue bicycle".into(),
    }
}

/// Directory holding the owner key under `OWNER_LOCATOR`.
pub fn directory(owner: &KeyPair) -> MemoryDirectory {
    let dir = MemoryDirectory::new();
    dir.publish(OWNER_LOCATOR, *owner.public_key());
    dir
}

/// The bundle stored under `tests/fixtures/`, rebuilt from its seed.
pub fn golden_bundle(mode: BackupMode) -> BackupBundle {
    let owner = identity(0);
    let keys = trustees(5);
    create_backup(
        &owner,
        GOLDEN_SECRET,
        &descriptors(&keys),
        3,
        &instruction(&owner),
        mode,
        &mut rng(GOLDEN_SEED),
    )
    .expect("golden backup")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

/// All `size`-element subsets of `0..n`, in lexicographic order.
pub fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::new(), &mut out);
    out
}
