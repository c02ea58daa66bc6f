//! The normalizing constant `C_k = E[Π_{i<j} ‖z_i − z_j‖²]` with
//! `z_1..z_k` i.i.d. `N(0, I_p)`: closed form for `p = 1`, an exact recursion
//! over sign vectors for `k <= 7`, and a Monte Carlo estimate.
//!
//! The recursion writes the product of `s = k(k−1)/2` quadratic forms
//! `z'(A_ij ⊗ I_p)z` through the top-order invariant polynomial:
//!
//! ```text
//! C_k = (1/s!) Σ_υ (−1)^{|υ|} Q_s(B_υ),   B_υ = Σ_{i<j} (½ − υ_ij) A_ij ⊗ I_p
//! Q_s(B) = s! 2^s d_s(B),   d_j = (1/2j) Σ_{i=1..j} tr(B^i) d_{j−i},  d_0 = 1
//! ```
//!
//! with `A_ij = (e_i − e_j)(e_i − e_j)'`. Since `2B_υ = M_υ ⊗ I_p` for an
//! integer matrix `M_υ`, all traces are integers and the sum is carried out
//! exactly.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, ToPrimitive, Zero};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::stats::{ln_gamma, RandomStream};
use crate::{Error, ExactRatio, Result};

/// Largest `k` handled by the recursion.
pub const MAX_RECURSION_K: usize = 7;

/// How an entry of [`NormConstTable`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormConstMethod {
    ClosedForm,
    Recursion,
    MonteCarlo,
}

/// `Π_{j=1}^{k} Γ(j+1)`.
pub fn norm_const_closed_p1(k: usize) -> f64 {
    (1..=k).map(|j| ln_gamma(j as f64 + 1.0)).sum::<f64>().exp()
}

/// `Π_{j=1}^{k} j!` as an exact integer.
pub fn norm_const_closed_p1_exact(k: usize) -> BigInt {
    let mut out = BigInt::one();
    let mut fact = BigInt::one();
    for j in 1..=k {
        fact *= j;
        out *= &fact;
    }
    out
}

/// `f_s = 2^s s! d_s(M)` from the power traces `traces[i] = tr(M^i)`,
/// `i = 1..=s`, via
/// `f_j = Σ_{i=1..j} tr(M^i) f_{j−i} 2^{i−1} (j−1)!/(j−i)!`.
///
/// Works over any commutative ring that holds small integers, so the same
/// kernel serves exact big integers and floating point.
pub fn top_invariant<T>(traces: &[T], s: usize) -> T
where
    T: Clone + Num + FromPrimitive,
{
    let mut f: Vec<T> = Vec::with_capacity(s + 1);
    f.push(T::one());
    for j in 1..=s {
        let mut acc = T::zero();
        let mut coef = T::one();
        for i in 1..=j {
            acc = acc + traces[i].clone() * f[j - i].clone() * coef.clone();
            coef = coef * T::from_usize(2 * (j - i)).expect("small integer");
        }
        f.push(acc);
    }
    f.swap_remove(s)
}

/// Pairs `(a, b)`, `a < b`, in lexicographic order.
fn pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            out.push((a, b));
        }
    }
    out
}

/// `M_υ = Σ_{pairs} (1 − 2υ) (e_a − e_b)(e_a − e_b)'` as a dense `k × k`
/// integer matrix, row-major.
fn sign_matrix(k: usize, pairs: &[(usize, usize)], mask: u64) -> Vec<i64> {
    let mut m = vec![0i64; k * k];
    for (bit, &(a, b)) in pairs.iter().enumerate() {
        let c: i64 = if mask >> bit & 1 == 1 { -1 } else { 1 };
        m[a * k + a] += c;
        m[b * k + b] += c;
        m[a * k + b] -= c;
        m[b * k + a] -= c;
    }
    m
}

/// Power traces `tr(M^i)`, `i = 0..=s`, of a symmetric integer matrix.
/// The first `k` come from `tr(M^{a+b}) = ⟨M^a, M^b⟩`; the rest follow from
/// Cayley-Hamilton, with the characteristic coefficients recovered by
/// Newton's identities, so every value is exact.
fn int_power_traces(m: &[i64], k: usize, s: usize) -> Vec<i128> {
    let direct = s.min(k);
    let mut traces = vec![0i128; s + 1];
    traces[0] = k as i128;
    let half = direct.div_ceil(2);
    let mut powers: Vec<Vec<i64>> = Vec::with_capacity(half + 1);
    powers.push(m.to_vec());
    while powers.len() < half + 1 {
        let last = powers.last().expect("non-empty");
        let mut next = vec![0i64; k * k];
        for i in 0..k {
            for j in i..k {
                let acc: i64 = (0..k).map(|l| last[i * k + l] * m[l * k + j]).sum();
                next[i * k + j] = acc;
                next[j * k + i] = acc;
            }
        }
        powers.push(next);
    }
    let inner = |a: &[i64], b: &[i64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (*x as i128) * (*y as i128))
            .sum::<i128>()
    };
    for t in 1..=direct {
        traces[t] = if t == 1 {
            (0..k).map(|i| m[i * k + i] as i128).sum()
        } else {
            let a = t / 2;
            inner(&powers[a - 1], &powers[t - a - 1])
        };
    }
    if s <= k {
        return traces;
    }
    // elementary symmetric polynomials of the eigenvalues
    let mut e = vec![0i128; k + 1];
    e[0] = 1;
    for n in 1..=k {
        let mut acc = 0i128;
        for i in 1..=n {
            let term = e[n - i] * traces[i];
            acc += if i % 2 == 1 { term } else { -term };
        }
        e[n] = acc / n as i128;
    }
    for t in k + 1..=s {
        let mut acc = 0i128;
        for i in 1..=k {
            let term = e[i] * traces[t - i];
            acc += if i % 2 == 1 { term } else { -term };
        }
        traces[t] = acc;
    }
    traces
}

fn check_recursion_range(k: usize, p: usize, limit: usize) -> Result<()> {
    if p == 0 || k == 0 {
        return Err(Error::Domain(format!(
            "need k >= 1 and p >= 1, got k = {k}, p = {p}"
        )));
    }
    if k > limit {
        return Err(Error::ComplexityLimit { k, limit });
    }
    Ok(())
}

/// Exact `C_k` for `k <= 7`.
///
/// Each signed term depends on `υ` only through the spectrum of `M_υ`, so
/// sign vectors are grouped by their first `k` power traces and the big
/// integer recursion runs once per group.
pub fn norm_const_recursive_exact(k: usize, p: usize) -> Result<ExactRatio> {
    check_recursion_range(k, p, MAX_RECURSION_K)?;
    if k == 1 {
        return Ok(ExactRatio::one());
    }
    let pr = pairs(k);
    let s = pr.len();
    let mut groups: HashMap<[i128; MAX_RECURSION_K], (i64, Vec<i128>)> = HashMap::new();
    // B_{1−υ} = −B_υ and the signed terms coincide, so fix the first bit.
    for half in 0..(1u64 << (s - 1)) {
        let mask = half << 1;
        let m = sign_matrix(k, &pr, mask);
        let traces = int_power_traces(&m, k, s);
        let sign = if mask.count_ones() % 2 == 0 { 1 } else { -1 };
        let mut key = [0i128; MAX_RECURSION_K];
        let d = k.min(s);
        key[..d].copy_from_slice(&traces[1..=d]);
        groups
            .entry(key)
            .and_modify(|g| g.0 += sign)
            .or_insert((sign, traces));
    }
    let pb = BigInt::from(p);
    let mut total = BigInt::zero();
    for (_, (weight, traces)) in groups {
        if weight == 0 {
            continue;
        }
        let traces: Vec<BigInt> = traces.into_iter().map(|t| BigInt::from(t) * &pb).collect();
        total += top_invariant(&traces, s) * weight;
    }
    let denom = (1..=s).fold(BigInt::one(), |acc, j| acc * j) << (s - 1);
    Ok(BigRational::new(total, denom))
}

/// `C_k` by the recursion, rounded to double precision.
pub fn norm_const_recursive(k: usize, p: usize) -> Result<f64> {
    let r = norm_const_recursive_exact(k, p)?;
    r.to_f64()
        .ok_or_else(|| Error::Numerical("normalizing constant overflows f64".into()))
}

/// Monte Carlo estimate of `C_k` with its standard error.
pub fn norm_const_mc(
    k: usize,
    p: usize,
    n_draws: usize,
    rng: &mut RandomStream,
) -> Result<(f64, f64)> {
    if k == 0 || p == 0 || n_draws < 2 {
        return Err(Error::Domain(format!(
            "need k, p >= 1 and at least two draws, got k = {k}, p = {p}, n = {n_draws}"
        )));
    }
    let mut z = vec![0.0f64; k * p];
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for t in 0..n_draws {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let mut prod = 1.0;
        for a in 0..k {
            for b in a + 1..k {
                let d: f64 = (0..p).map(|d| (z[a * p + d] - z[b * p + d]).powi(2)).sum();
                prod *= d;
            }
        }
        let delta = prod - mean;
        mean += delta / (t + 1) as f64;
        m2 += delta * (prod - mean);
    }
    let var = m2 / (n_draws - 1) as f64;
    Ok((mean, (var / n_draws as f64).sqrt()))
}

/// One cached constant.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormConstEntry {
    pub value: f64,
    pub log_value: f64,
    pub method: NormConstMethod,
    /// Monte Carlo standard error, when estimated by simulation.
    pub std_err: Option<f64>,
}

/// `C_k` for every `(k, p)` needed by a run, computed once up front.
#[derive(Clone, Debug, Default)]
pub struct NormConstTable {
    entries: BTreeMap<(usize, usize), NormConstEntry>,
}

/// Draws used when `k` exceeds the recursion limit.
pub const FALLBACK_MC_DRAWS: usize = 1_000_000;

impl NormConstTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fills in `C_1..C_kmax` for dimension `p`.
    pub fn build(kmax: usize, p: usize, rng: &mut RandomStream) -> Result<Self> {
        let mut t = Self::new();
        for k in 1..=kmax {
            t.ensure(k, p, rng)?;
        }
        Ok(t)
    }

    pub fn ensure(&mut self, k: usize, p: usize, rng: &mut RandomStream) -> Result<NormConstEntry> {
        if let Some(e) = self.entries.get(&(k, p)) {
            return Ok(*e);
        }
        let entry = compute_entry(k, p, rng)?;
        self.entries.insert((k, p), entry);
        Ok(entry)
    }

    pub fn get(&self, k: usize, p: usize) -> Result<NormConstEntry> {
        self.entries
            .get(&(k, p))
            .copied()
            .ok_or_else(|| Error::Domain(format!("C_{k} for p = {p} was not precomputed")))
    }

    pub fn log_value(&self, k: usize, p: usize) -> Result<f64> {
        self.get(k, p).map(|e| e.log_value)
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), NormConstEntry)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }
}

fn compute_entry(k: usize, p: usize, rng: &mut RandomStream) -> Result<NormConstEntry> {
    let exact = |value: f64, method| NormConstEntry {
        value,
        log_value: value.ln(),
        method,
        std_err: None,
    };
    if k == 0 || p == 0 {
        return Err(Error::Domain(format!(
            "need k >= 1 and p >= 1, got k = {k}, p = {p}"
        )));
    }
    if k == 1 {
        return Ok(exact(1.0, NormConstMethod::ClosedForm));
    }
    if p == 1 {
        let log_value: f64 = (1..=k).map(|j| ln_gamma(j as f64 + 1.0)).sum();
        return Ok(NormConstEntry {
            value: log_value.exp(),
            log_value,
            method: NormConstMethod::ClosedForm,
            std_err: None,
        });
    }
    match norm_const_recursive(k, p) {
        Ok(v) => Ok(exact(v, NormConstMethod::Recursion)),
        Err(Error::ComplexityLimit { .. }) => {
            log::warn!("C_{k} for p = {p} estimated by Monte Carlo ({FALLBACK_MC_DRAWS} draws)");
            let (v, se) = norm_const_mc(k, p, FALLBACK_MC_DRAWS, rng)?;
            Ok(NormConstEntry {
                value: v,
                log_value: v.ln(),
                method: NormConstMethod::MonteCarlo,
                std_err: Some(se),
            })
        }
        Err(e) => Err(e),
    }
}
