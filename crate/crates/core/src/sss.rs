//! Shamir (k, n) threshold sharing over GF(2^8).
//!
//! Secrets are shared byte-wise: every byte position gets its own random
//! polynomial of degree k - 1, and all polynomials are evaluated at the same
//! x coordinate for a given share. Shares are therefore exactly as long as
//! the secret.
//!
//! The field uses the Rijndael reduction polynomial x^8 + x^4 + x^3 + x + 1.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use rand::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::Zeroize;

/// Low byte of the reduction polynomial (0x11B).
const REDUCTION: u8 = 0x1B;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SssError {
    #[error("invalid sharing parameters: {0}")]
    InvalidParameters(String),
    #[error("insufficient shares: have {have} distinct, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("duplicate share index {0}")]
    DuplicateIndex(u8),
    #[error("share payload lengths differ")]
    PayloadLengthMismatch,
    #[error("share index 0 is not allowed")]
    ZeroIndex,
    #[error("entropy source failed")]
    Entropy,
}

/// An element of GF(2^8).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Gf256(pub u8);

impl fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf256({:#04x})", self.0)
    }
}

impl Zeroize for Gf256 {
    fn zeroize(&mut self) {
        self.0.zeroize();
    }
}

impl Gf256 {
    pub const ZERO: Gf256 = Gf256(0);
    pub const ONE: Gf256 = Gf256(1);

    /// Multiplicative inverse. Zero maps to zero.
    pub fn inverse(self) -> Gf256 {
        // a^254 = a^-1 for a != 0
        let mut result = Gf256::ONE;
        let mut base = self;
        let mut exp = 254u32;
        while exp > 0 {
            if exp & 1 == 1 {
                result = result * base;
            }
            base = base * base;
            exp >>= 1;
        }
        result
    }
}

/// Carry-less multiply with reduction. Runs in a fixed number of steps
/// regardless of operand values.
pub fn field_mul(a: u8, b: u8) -> u8 {
    let mut a = a;
    let mut b = b;
    let mut product = 0u8;
    for _ in 0..8 {
        product ^= a & 0u8.wrapping_sub(b & 1);
        let carry = 0u8.wrapping_sub(a >> 7);
        a = (a << 1) ^ (carry & REDUCTION);
        b >>= 1;
    }
    product
}

pub fn field_inv(a: u8) -> u8 {
    Gf256(a).inverse().0
}

// characteristic 2: addition and subtraction are both XOR
#[allow(clippy::suspicious_arithmetic_impl)]
impl Add for Gf256 {
    type Output = Gf256;
    fn add(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Sub for Gf256 {
    type Output = Gf256;
    fn sub(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

impl Mul for Gf256 {
    type Output = Gf256;
    fn mul(self, rhs: Gf256) -> Gf256 {
        Gf256(field_mul(self.0, rhs.0))
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Div for Gf256 {
    type Output = Gf256;
    fn div(self, rhs: Gf256) -> Gf256 {
        self * rhs.inverse()
    }
}

/// One fragment of a shared secret: the evaluation point and the
/// per-byte polynomial values at that point.
#[derive(Clone, PartialEq, Eq)]
pub struct Share {
    pub index: u8,
    pub payload: Vec<u8>,
}

impl fmt::Debug for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Share")
            .field("index", &self.index)
            .field("len", &self.payload.len())
            .finish()
    }
}

impl Drop for Share {
    fn drop(&mut self) {
        self.payload.zeroize();
    }
}

impl Share {
    pub fn new(index: u8, payload: Vec<u8>) -> Result<Share, SssError> {
        if index == 0 {
            return Err(SssError::ZeroIndex);
        }
        Ok(Share { index, payload })
    }

    /// `index ‖ payload`
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.payload.len());
        out.push(self.index);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Share, SssError> {
        match bytes.split_first() {
            Some((&index, payload)) => Share::new(index, payload.to_vec()),
            None => Err(SssError::InsufficientShares { have: 0, need: 1 }),
        }
    }
}

/// Evaluate the polynomial with the given coefficients (constant term
/// first) at `x` using Horner's rule.
fn eval_poly(coefficients: &[Gf256], x: Gf256) -> Gf256 {
    coefficients
        .iter()
        .rev()
        .fold(Gf256::ZERO, |acc, &c| acc * x + c)
}

/// Split `secret` into `n` shares, any `k` of which reconstruct it.
///
/// Shares carry indices `1..=n` in order.
pub fn split<R: RngCore + CryptoRng>(
    secret: &[u8],
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Share>, SssError> {
    if secret.is_empty() {
        return Err(SssError::InvalidParameters("secret is empty".into()));
    }
    if k < 1 || k > n || n > 255 {
        return Err(SssError::InvalidParameters(format!(
            "need 1 <= k <= n <= 255, got k={k} n={n}"
        )));
    }

    let mut payloads = vec![Vec::with_capacity(secret.len()); n];
    let mut coefficients = vec![Gf256::ZERO; k];
    let mut random = vec![0u8; k - 1];
    for &byte in secret {
        rng.try_fill_bytes(&mut random)
            .map_err(|_| SssError::Entropy)?;
        coefficients[0] = Gf256(byte);
        for (c, &r) in coefficients[1..].iter_mut().zip(&random) {
            *c = Gf256(r);
        }
        for (i, payload) in payloads.iter_mut().enumerate() {
            let x = Gf256((i + 1) as u8);
            payload.push(eval_poly(&coefficients, x).0);
        }
    }
    coefficients.zeroize();
    random.zeroize();

    Ok(payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| Share {
            index: (i + 1) as u8,
            payload,
        })
        .collect())
}

/// Reconstruct a secret from at least `k` shares via Lagrange
/// interpolation at zero. Exactly the first `k` shares are used.
pub fn combine(shares: &[Share], k: usize) -> Result<Vec<u8>, SssError> {
    if k < 1 {
        return Err(SssError::InvalidParameters("k must be at least 1".into()));
    }
    let mut seen = BTreeSet::new();
    for share in shares {
        if share.index == 0 {
            return Err(SssError::ZeroIndex);
        }
        if !seen.insert(share.index) {
            return Err(SssError::DuplicateIndex(share.index));
        }
    }
    if shares.len() < k {
        return Err(SssError::InsufficientShares {
            have: shares.len(),
            need: k,
        });
    }
    let used = &shares[..k];
    let len = used[0].payload.len();
    if shares.iter().any(|s| s.payload.len() != len) {
        return Err(SssError::PayloadLengthMismatch);
    }

    let xs: Vec<Gf256> = used.iter().map(|s| Gf256(s.index)).collect();
    // Lagrange basis values at x = 0: prod_{m != j} x_m / (x_m - x_j)
    let basis: Vec<Gf256> = xs
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            xs.iter()
                .enumerate()
                .filter(|&(m, _)| m != j)
                .fold(Gf256::ONE, |acc, (_, &xm)| acc * (xm / (xm - xj)))
        })
        .collect();

    let secret = (0..len)
        .map(|pos| {
            used.iter()
                .zip(&basis)
                .fold(Gf256::ZERO, |acc, (share, &l)| {
                    acc + Gf256(share.payload[pos]) * l
                })
                .0
        })
        .collect();
    Ok(secret)
}
