//! Failure-rate model for threshold social recovery.
//!
//! * `P`: probability an adversary who stole the backup fools `k` trustees
//!   before anyone contacted raises the alarm.
//! * `Q`: probability more than `n - k` trustees are unavailable at recovery.
//! * `F = 1 - (1 - P)(1 - Q)`: probability the backup is either broken or lost.
//!
//! The attacker model: the owner has `N` contacts, `n` of them trustees, and
//! the attacker asks contacts one at a time in uniformly random order. A
//! regular contact ignores the request with probability `p1` and otherwise
//! notifies the owner. A trustee is fooled with probability `q3`, ignores with
//! `q1`, and notifies with `q2`. Any notification ends the attack.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Average Facebook friend count.
pub const DEFAULT_CONTACTS: u32 = 404;
/// Burglary rate, 274 per 100,000 inhabitants.
pub const DEFAULT_P_STEAL: f64 = 0.00274;
/// Share of trustees fooled in social authentication experiments.
pub const DEFAULT_Q3: f64 = 0.45;
pub const DEFAULT_UNAVAILABILITY: f64 = 0.001;

/// Share of real-world passwords cracked offline.
pub const PASSWORD_GUESS_RATE: f64 = 0.4;
/// Users who forgot a password within three months.
pub const PASSWORD_FORGET_RATE: f64 = 0.0428;
pub const FINGERPRINT_SPOOF_RATE: f64 = 0.05;
pub const FINGERPRINT_FALSE_REJECT_RATE: f64 = 0.05;

/// Threshold parameters the comparison table is computed at.
pub const REFERENCE_K: u32 = 3;
pub const REFERENCE_N: u32 = 5;

/// Number of independent streams a simulation is split into.
pub const DEFAULT_WORKERS: usize = 8;

const PROB_SUM_TOLERANCE: f64 = 1e-12;
const EARLY_STOP_RATIO: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("out of range: {0}")]
    Range(String),
}

type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryModel {
    pub contacts: u32,
    pub p_steal: f64,
    /// Regular contact ignores the request.
    pub p1: f64,
    /// Regular contact notifies the owner.
    pub p2: f64,
    /// Trustee ignores the request.
    pub q1: f64,
    /// Trustee notifies the owner.
    pub q2: f64,
    /// Trustee is fooled.
    pub q3: f64,
}

fn check_probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AnalysisError::InvalidProbability(format!(
            "{name} = {value} is outside [0, 1]"
        )))
    }
}

impl AdversaryModel {
    pub fn validate(&self) -> Result<()> {
        if self.contacts < 1 {
            return Err(AnalysisError::Range("contacts must be at least 1".into()));
        }
        for (name, v) in [
            ("p_steal", self.p_steal),
            ("p1", self.p1),
            ("p2", self.p2),
            ("q1", self.q1),
            ("q2", self.q2),
            ("q3", self.q3),
        ] {
            check_probability(name, v)?;
        }
        if (self.p1 + self.p2 - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(AnalysisError::InvalidProbability(format!(
                "p1 + p2 = {} != 1",
                self.p1 + self.p2
            )));
        }
        let q = self.q1 + self.q2 + self.q3;
        if (q - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(AnalysisError::InvalidProbability(format!(
                "q1 + q2 + q3 = {q} != 1"
            )));
        }
        Ok(())
    }

    /// Same model with a different contact count.
    pub fn with_contacts(self, contacts: u32) -> AdversaryModel {
        AdversaryModel { contacts, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisParams {
    pub model: AdversaryModel,
    /// Probability a single trustee is unavailable or unwilling.
    pub unavailability: f64,
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        check_probability("U", self.unavailability)
    }
}

/// Real-world defaults: N = 404, P_steal = 0.274%, q3 = 0.45,
/// q1 = q2 = (1 - q3) / 2, p1 = q3, U = 0.1%.
pub fn default_params() -> AnalysisParams {
    let q3 = DEFAULT_Q3;
    let q1 = (1.0 - q3) / 2.0;
    let p1 = q3;
    AnalysisParams {
        model: AdversaryModel {
            contacts: DEFAULT_CONTACTS,
            p_steal: DEFAULT_P_STEAL,
            p1,
            p2: 1.0 - p1,
            q1,
            q2: q1,
            q3,
        },
        unavailability: DEFAULT_UNAVAILABILITY,
    }
}

/// `C(n, k)` by the multiplicative formula in double precision.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (1..=k).fold(1.0, |acc, i| acc * (n - k + i) as f64 / i as f64)
}

fn check_threshold(model: &AdversaryModel, k: u32, n: u32) -> Result<()> {
    model.validate()?;
    if k < 1 || k > n || n > model.contacts {
        return Err(AnalysisError::Range(format!(
            "need 1 <= k <= n <= N, got k={k} n={n} N={}",
            model.contacts
        )));
    }
    Ok(())
}

/// Probability that the attacker fools the k-th trustee exactly when asking
/// the i-th trustee, having asked j regular contacts on the way, with every
/// contacted person either fooled or ignoring.
pub fn scenario_success_probability(
    params: &AnalysisParams,
    k: u32,
    n: u32,
    i: u32,
    j: u32,
) -> Result<f64> {
    let m = &params.model;
    check_threshold(m, k, n)?;
    let big_n = m.contacts;
    if i < k || i > n || j > big_n - n {
        return Err(AnalysisError::Range(format!(
            "need k <= i <= n and 0 <= j <= N - n, got i={i} j={j}"
        )));
    }
    let (k, n, i, j, big_n) = (k as u64, n as u64, i as u64, j as u64, big_n as u64);
    let arrangement = binomial(i - 1 + j, j) * binomial(big_n - i - j, n - i) / binomial(big_n, n);
    let reactions = m.p1.powi(j as i32)
        * binomial(i - 1, i - k)
        * m.q3.powi(k as i32)
        * m.q1.powi((i - k) as i32);
    Ok(arrangement * reactions)
}

/// Sum of `P_{i,j}` over every success scenario, times `P_steal`.
///
/// For each i the j-series is generated by its term ratio
/// `p1 (i+j)/(j+1) (N-n-j)/(N-i-j)`, which is non-increasing in j; the
/// series is cut once the ratio is below one and terms fall under 1e-30 of
/// the running sum. All terms are added smallest first.
pub fn attack_success_exact(params: &AnalysisParams, k: u32, n: u32) -> Result<f64> {
    let m = &params.model;
    check_threshold(m, k, n)?;
    if m.p_steal == 0.0 || m.q3 == 0.0 {
        return Ok(0.0);
    }
    let big_n = m.contacts as f64;
    let nf = n as f64;
    let j_max = (m.contacts - n) as u64;
    let mut terms = Vec::new();
    for i in k..=n {
        let fi = i as f64;
        let reactions = binomial((i - 1) as u64, (i - k) as u64)
            * m.q3.powi(k as i32)
            * m.q1.powi((i - k) as i32);
        if reactions == 0.0 {
            continue;
        }
        // C(N-i, n-i) / C(N, n) = prod_{t<i} (n-t)/(N-t)
        let mut term = (0..i).fold(1.0, |acc, t| acc * (nf - t as f64) / (big_n - t as f64));
        let mut running = 0.0;
        for j in 0..=j_max {
            let value = term * reactions;
            terms.push(value);
            running += value;
            if j == j_max {
                break;
            }
            let jf = j as f64;
            let ratio = m.p1 * (fi + jf) / (jf + 1.0) * (big_n - nf - jf) / (big_n - fi - jf);
            term *= ratio;
            if term == 0.0 || (ratio < 1.0 && term * reactions < EARLY_STOP_RATIO * running) {
                break;
            }
        }
    }
    terms.sort_by(f64::total_cmp);
    Ok(m.p_steal * terms.iter().sum::<f64>())
}

/// `P_steal * (n q3 / N)^k`: the attacker must hit a trustee and fool them
/// on each of the first k attempts.
pub fn attack_success_approx(params: &AnalysisParams, k: u32, n: u32) -> Result<f64> {
    let m = &params.model;
    check_threshold(m, k, n)?;
    Ok(m.p_steal * (n as f64 * m.q3 / m.contacts as f64).powi(k as i32))
}

/// Probability more than `n - k` of `n` trustees are unavailable.
pub fn recovery_unreliability(unavailability: f64, k: u32, n: u32) -> Result<f64> {
    check_probability("U", unavailability)?;
    if k < 1 || k > n {
        return Err(AnalysisError::Range(format!(
            "need 1 <= k <= n, got k={k} n={n}"
        )));
    }
    let u = unavailability;
    let sum = (n - k + 1..=n)
        .rev()
        .map(|i| binomial(n as u64, i as u64) * (1.0 - u).powi((n - i) as i32) * u.powi(i as i32))
        .sum::<f64>();
    Ok(sum.min(1.0))
}

/// `P + Q - PQ`, or `P + Q` when `approximate` is set.
pub fn combined_failure(p: f64, q: f64, approximate: bool) -> Result<f64> {
    check_probability("P", p)?;
    check_probability("Q", q)?;
    Ok(if approximate { p + q } else { p + q - p * q })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureReport {
    pub n: u32,
    pub k: u32,
    pub p: f64,
    pub q: f64,
    pub f: f64,
}

pub fn failure_report(params: &AnalysisParams, k: u32, n: u32) -> Result<FailureReport> {
    params.validate()?;
    let p = attack_success_exact(params, k, n)?;
    let q = recovery_unreliability(params.unavailability, k, n)?;
    Ok(FailureReport {
        n,
        k,
        p,
        q,
        f: combined_failure(p, q, false)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOptimum {
    pub n: u32,
    pub k_star: u32,
    pub f_min: f64,
    /// Reports for k = 1..=n.
    pub curve: Vec<FailureReport>,
}

/// Evaluate F for every k and pick the minimum, preferring smaller k on ties.
pub fn optimal_threshold(params: &AnalysisParams, n: u32) -> Result<ThresholdOptimum> {
    if n < 1 {
        return Err(AnalysisError::Range("n must be at least 1".into()));
    }
    let curve = (1..=n)
        .map(|k| failure_report(params, k, n))
        .collect::<Result<Vec<_>>>()?;
    let best = curve
        .iter()
        .fold(None::<&FailureReport>, |best, r| match best {
            Some(b) if b.f <= r.f => Some(b),
            _ => Some(r),
        })
        .expect("curve is non-empty");
    Ok(ThresholdOptimum {
        n,
        k_star: best.k,
        f_min: best.f,
        curve,
    })
}

/// Optimal k and minimal F for every n in `1..=max_n`.
pub fn optimal_threshold_sweep(
    params: &AnalysisParams,
    max_n: u32,
) -> Result<Vec<ThresholdOptimum>> {
    (1..=max_n).map(|n| optimal_threshold(params, n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    LocalStorage,
    Password,
    Biometric,
    DirectEscrow,
    IndirectPermission,
}

impl Approach {
    pub const ALL: [Approach; 5] = [
        Approach::LocalStorage,
        Approach::Password,
        Approach::Biometric,
        Approach::DirectEscrow,
        Approach::IndirectPermission,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::LocalStorage => "local_storage",
            Approach::Password => "password",
            Approach::Biometric => "biometric",
            Approach::DirectEscrow => "direct_escrow",
            Approach::IndirectPermission => "indirect_permission",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub approach: Approach,
    pub p: f64,
    pub q: f64,
    /// `P + Q`.
    pub f: f64,
}

/// Insecurity of direct escrow: trustees hold the shares outright, so the
/// attacker only needs to talk k of the n known trustees into colluding and
/// then guess the share passwords.
pub fn direct_escrow_insecurity(params: &AnalysisParams, k: u32, n: u32) -> Result<f64> {
    let escrow = AnalysisParams {
        model: AdversaryModel {
            contacts: n,
            p_steal: 1.0,
            ..params.model
        },
        ..*params
    };
    Ok(PASSWORD_GUESS_RATE * attack_success_exact(&escrow, k, n)?)
}

/// Failure rates of five backup approaches at (k, n) = (3, 5), combined as
/// `F = P + Q`.
pub fn comparison_table(params: &AnalysisParams) -> Result<Vec<ComparisonRow>> {
    params.validate()?;
    let m = &params.model;
    let (k, n) = (REFERENCE_K, REFERENCE_N);
    let q_threshold = recovery_unreliability(params.unavailability, k, n)?;
    let rows = [
        // loss rate taken equal to the theft rate
        (Approach::LocalStorage, m.p_steal, m.p_steal),
        (
            Approach::Password,
            PASSWORD_GUESS_RATE * m.p_steal,
            PASSWORD_FORGET_RATE,
        ),
        (
            Approach::Biometric,
            FINGERPRINT_SPOOF_RATE * m.p_steal,
            FINGERPRINT_FALSE_REJECT_RATE,
        ),
        (
            Approach::DirectEscrow,
            direct_escrow_insecurity(params, k, n)?,
            q_threshold,
        ),
        (
            Approach::IndirectPermission,
            attack_success_exact(params, k, n)?,
            q_threshold,
        ),
    ];
    rows.into_iter()
        .map(|(approach, p, q)| {
            Ok(ComparisonRow {
                approach,
                p,
                q,
                f: combined_failure(p, q, true)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub successes: u64,
    pub trials: u64,
}

/// One attack walk. Returns true when the k-th trustee is fooled before
/// anyone notifies the owner.
fn attack_walk<R: Rng>(m: &AdversaryModel, k: u32, n: u32, rng: &mut R) -> bool {
    let mut contacts_left = m.contacts;
    let mut trustees_left = n;
    let mut fooled = 0;
    while contacts_left > 0 {
        // next contact in a uniformly random order is a trustee with
        // probability trustees_left / contacts_left
        let is_trustee = rng.gen_range(0..contacts_left) < trustees_left;
        contacts_left -= 1;
        let u: f64 = rng.gen();
        if is_trustee {
            trustees_left -= 1;
            if u < m.q3 {
                fooled += 1;
                if fooled == k {
                    return true;
                }
            } else if u >= m.q3 + m.q1 {
                return false;
            }
        } else if u >= m.p1 {
            return false;
        }
    }
    false
}

/// Monte Carlo estimate of the attack success probability.
pub fn simulate_attack(
    params: &AnalysisParams,
    k: u32,
    n: u32,
    trials: u64,
    seed: u64,
) -> Result<SimulationEstimate> {
    simulate_attack_with_workers(params, k, n, trials, seed, DEFAULT_WORKERS)
}

/// Trials are split across `workers` ChaCha8 streams derived from `seed`;
/// the result depends only on `(seed, trials, workers)`.
pub fn simulate_attack_with_workers(
    params: &AnalysisParams,
    k: u32,
    n: u32,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<SimulationEstimate> {
    let m = params.model;
    check_threshold(&m, k, n)?;
    if trials < 1 {
        return Err(AnalysisError::Range("trials must be at least 1".into()));
    }
    let workers = workers.max(1) as u64;
    let successes: u64 = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w);
            let share = trials / workers + u64::from(w < trials % workers);
            (0..share)
                .filter(|_| attack_walk(&m, k, n, &mut rng))
                .count() as u64
        })
        .sum();
    let p_hat = successes as f64 / trials as f64;
    Ok(SimulationEstimate {
        estimate: m.p_steal * p_hat,
        std_error: m.p_steal * (p_hat * (1.0 - p_hat) / trials as f64).sqrt(),
        successes,
        trials,
    })
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

pub const CURVE_HEADER: &str = "k,P,Q,F";
pub const SWEEP_HEADER: &str = "n,k_star,F_min";
pub const COMPARISON_HEADER: &str = "approach,P,Q,F";

/// F against k for a fixed n, preceded by a `# curve n=<n>` line.
pub fn curve_csv(optimum: &ThresholdOptimum) -> String {
    let mut out = format!("# curve n={}\n{CURVE_HEADER}\n", optimum.n);
    for r in &optimum.curve {
        let _ = writeln!(out, "{},{},{},{}", r.k, sci(r.p), sci(r.q), sci(r.f));
    }
    out
}

pub fn sweep_csv(sweep: &[ThresholdOptimum]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for o in sweep {
        let _ = writeln!(out, "{},{},{}", o.n, o.k_star, sci(o.f_min));
    }
    out
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.approach.as_str(),
            sci(r.p),
            sci(r.q),
            sci(r.f)
        );
    }
    out
}
