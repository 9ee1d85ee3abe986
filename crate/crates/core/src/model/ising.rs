//! Ising model `P(h) ∝ exp(vech(h h^T)^T vech(Γ))` on `{0,1}^q`, with
//! exact enumeration up to a state cap and a Gibbs sampler beyond it.

use nalgebra::DMatrix;
use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::matops::unvech;

pub const DEFAULT_ENUMERATION_CAP: usize = 20;
pub const GIBBS_BURN_IN: usize = 1000;
pub const GIBBS_THIN: usize = 10;

/// Unnormalized log-weight of the state whose bits are set in `mask`.
#[inline]
pub fn energy(gamma: &DMatrix<f64>, mask: u64) -> f64 {
    let q = gamma.nrows();
    let mut e = 0.0;
    for i in 0..q {
        if mask >> i & 1 == 0 {
            continue;
        }
        e += gamma[(i, i)];
        for j in 0..i {
            if mask >> j & 1 == 1 {
                e += gamma[(i, j)];
            }
        }
    }
    e
}

pub fn state_of(mask: u64, q: usize) -> Vec<f64> {
    (0..q).map(|i| (mask >> i & 1) as f64).collect()
}

pub fn mask_of(h: &[f64]) -> Result<u64> {
    let mut mask = 0u64;
    for (column, &v) in h.iter().enumerate() {
        if v == 1.0 {
            mask |= 1 << column;
        } else if v != 0.0 {
            return Err(Error::NonBinary {
                row: 0,
                column,
                value: v,
            });
        }
    }
    Ok(mask)
}

fn check_symmetric(gamma: &DMatrix<f64>) -> Result<()> {
    if !gamma.is_square() {
        return Err(Error::Dimension("Γ must be square".into()));
    }
    Ok(())
}

/// Fully enumerated distribution. State `mask` has `h_i = bit i`.
#[derive(Debug, Clone)]
pub struct IsingTable {
    pub q: usize,
    pub log_partition: f64,
    pub probs: Vec<f64>,
}

impl IsingTable {
    pub fn new(gamma: &DMatrix<f64>) -> Result<Self> {
        Self::with_cap(gamma, DEFAULT_ENUMERATION_CAP)
    }

    pub fn with_cap(gamma: &DMatrix<f64>, cap: usize) -> Result<Self> {
        check_symmetric(gamma)?;
        let q = gamma.nrows();
        if q > cap {
            return Err(Error::EnumerationLimit { q, cap });
        }
        let states = 1usize << q;
        let mut logw: Vec<f64> = (0..states as u64).map(|m| energy(gamma, m)).collect();
        let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for w in logw.iter_mut() {
            *w = (*w - top).exp();
            total += *w;
        }
        for w in logw.iter_mut() {
            *w /= total;
        }
        Ok(Self {
            q,
            log_partition: top + total.ln(),
            probs: logw,
        })
    }

    pub fn from_vech(v: &[f64], q: usize) -> Result<Self> {
        Self::new(&unvech(v, q))
    }

    pub fn prob(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.q {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                h.len(),
                self.q
            )));
        }
        Ok(self.probs[mask_of(h)? as usize])
    }

    /// Inverse-CDF draws; returns an `n x q` matrix.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> DMatrix<f64> {
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for &p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        let mut out = DMatrix::zeros(n, self.q);
        for row in 0..n {
            let u: f64 = rng.random::<f64>() * acc;
            let mask = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            for i in 0..self.q {
                out[(row, i)] = (mask >> i & 1) as f64;
            }
        }
        out
    }
}

/// `P(h | Γ)` by exact enumeration.
pub fn ising_pmf(h: &[f64], gamma: &DMatrix<f64>) -> Result<f64> {
    IsingTable::new(gamma)?.prob(h)
}

/// `log G(Γ)`, the log normalizer.
pub fn log_partition(gamma: &DMatrix<f64>) -> Result<f64> {
    Ok(IsingTable::new(gamma)?.log_partition)
}

/// `n` draws; exact within the enumeration cap, Gibbs beyond it.
pub fn ising_sample<R: Rng + ?Sized>(
    gamma: &DMatrix<f64>,
    rng: &mut R,
    n: usize,
) -> Result<DMatrix<f64>> {
    check_symmetric(gamma)?;
    if gamma.nrows() <= DEFAULT_ENUMERATION_CAP {
        Ok(IsingTable::new(gamma)?.sample(rng, n))
    } else {
        Ok(gibbs_sample(gamma, rng, n))
    }
}

/// Single-site Gibbs chain from the all-zero state.
pub fn gibbs_sample<R: Rng + ?Sized>(gamma: &DMatrix<f64>, rng: &mut R, n: usize) -> DMatrix<f64> {
    let q = gamma.nrows();
    let mut state = vec![0.0; q];
    let sweep = |state: &mut Vec<f64>, rng: &mut R| {
        for j in 0..q {
            let mut logit = gamma[(j, j)];
            for i in 0..q {
                if i != j && state[i] == 1.0 {
                    logit += if i > j { gamma[(i, j)] } else { gamma[(j, i)] };
                }
            }
            let p = 1.0 / (1.0 + (-logit).exp());
            state[j] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        }
    };
    for _ in 0..GIBBS_BURN_IN {
        sweep(&mut state, rng);
    }
    let mut out = DMatrix::zeros(n, q);
    for row in 0..n {
        for _ in 0..GIBBS_THIN {
            sweep(&mut state, rng);
        }
        for i in 0..q {
            out[(row, i)] = state[i];
        }
    }
    out
}
