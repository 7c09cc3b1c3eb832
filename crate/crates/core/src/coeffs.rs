//! Closed-form per-frame weights for approximate rank pooling.
//!
//! Three weightings are available:
//!
//! * `Beta`: `β_t = 2t - T - 1`, the weight of each running mean `V_t` in the
//!   first gradient step of the ranking objective.
//! * `Avg`: `α_t = 2(T - t + 1) - (T + 1)(H_T - H_{t-1})`, the same step
//!   re-expressed as weights on the raw frames (`α_t = Σ_{i≥t} β_i / i`).
//! * `Direct`: `α_t = 2t - T - 1`, the step obtained when frames are ranked
//!   directly instead of through running means.
//!
//! Indices in the formulas are one-based; the returned vectors are zero-based.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoeffKind {
    Avg,
    Direct,
    Beta,
}

/// The two frame-weighting variants of approximate rank pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ArpVariant {
    #[default]
    Avg,
    Direct,
}

impl From<ArpVariant> for CoeffKind {
    fn from(v: ArpVariant) -> Self {
        match v {
            ArpVariant::Avg => CoeffKind::Avg,
            ArpVariant::Direct => CoeffKind::Direct,
        }
    }
}

impl FromStr for ArpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(ArpVariant::Avg),
            "direct" => Ok(ArpVariant::Direct),
            other => Err(Error::precondition(format!("unknown ARP variant '{other}'"))),
        }
    }
}

impl FromStr for CoeffKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(CoeffKind::Beta),
            other => other.parse::<ArpVariant>().map(Into::into),
        }
    }
}

impl fmt::Display for ArpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        CoeffKind::from(*self).fmt(f)
    }
}

impl fmt::Display for CoeffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoeffKind::Avg => "avg",
            CoeffKind::Direct => "direct",
            CoeffKind::Beta => "beta",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    kind: CoeffKind,
    values: Vec<f64>,
}

impl CoefficientVector {
    pub fn kind(&self) -> CoeffKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AsRef<[f64]> for CoefficientVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// `H_t = Σ_{i=1..t} 1/i`, summed in ascending `i`; `H_0 = 0`.
pub fn harmonic(t: usize) -> f64 {
    (1..=t).map(|i| 1.0 / i as f64).fold(0.0, |acc, x| acc + x)
}

/// `[H_0, H_1, ..., H_t]`, bitwise equal to calling [`harmonic`] for each entry.
fn harmonic_prefix(t: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t + 1);
    let mut acc = 0.0;
    out.push(acc);
    for i in 1..=t {
        acc += 1.0 / i as f64;
        out.push(acc);
    }
    out
}

fn linear_ramp(len: usize) -> Vec<f64> {
    let len = len as i64;
    (1..=len).map(|t| (2 * t - len - 1) as f64).collect()
}

fn check_len(len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::precondition("coefficients need a sequence length T >= 1"));
    }
    Ok(())
}

pub fn beta_coeffs(len: usize) -> Result<CoefficientVector> {
    check_len(len)?;
    Ok(CoefficientVector {
        kind: CoeffKind::Beta,
        values: linear_ramp(len),
    })
}

pub fn alpha_coeffs(len: usize, variant: ArpVariant) -> Result<CoefficientVector> {
    check_len(len)?;
    let values = match variant {
        ArpVariant::Direct => linear_ramp(len),
        ArpVariant::Avg => {
            let h = harmonic_prefix(len);
            let big_t = len as f64;
            (1..=len)
                .map(|t| 2.0 * (big_t - t as f64 + 1.0) - (big_t + 1.0) * (h[len] - h[t - 1]))
                .collect()
        }
    };
    Ok(CoefficientVector {
        kind: variant.into(),
        values,
    })
}

pub fn coeffs(len: usize, kind: CoeffKind) -> Result<CoefficientVector> {
    match kind {
        CoeffKind::Beta => beta_coeffs(len),
        CoeffKind::Avg => alpha_coeffs(len, ArpVariant::Avg),
        CoeffKind::Direct => alpha_coeffs(len, ArpVariant::Direct),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Weight of frame `t` in `Σ_i β_i V_i`, expanding `V_i = (1/i) Σ_{j≤i} ψ_j`.
    fn expanded_alpha(len: usize) -> Vec<f64> {
        let beta = linear_ramp(len);
        (1..=len)
            .map(|t| (t..=len).map(|i| beta[i - 1] / i as f64).sum())
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        let scale = a.abs().max(b.abs());
        if scale < 1e-300 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    }

    #[test]
    fn harmonic_values() {
        assert_eq!(harmonic(0), 0.0);
        assert_eq!(harmonic(1), 1.0);
        assert!((harmonic(3) - 11.0 / 6.0).abs() < 1e-15);
        let prefix = harmonic_prefix(50);
        for (t, &h) in prefix.iter().enumerate() {
            assert_eq!(h.to_bits(), harmonic(t).to_bits());
        }
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta_coeffs(1).unwrap().values(), &[0.0]);
        assert_eq!(beta_coeffs(3).unwrap().values(), &[-2.0, 0.0, 2.0]);
        assert_eq!(beta_coeffs(4).unwrap().values(), &[-3.0, -1.0, 1.0, 3.0]);
    }

    #[test]
    fn alpha_examples() {
        let a2 = alpha_coeffs(2, ArpVariant::Avg).unwrap();
        assert!(rel_err(a2.values()[0], -0.5) < 1e-15);
        assert!(rel_err(a2.values()[1], 0.5) < 1e-15);

        let a3 = alpha_coeffs(3, ArpVariant::Avg).unwrap();
        for (got, want) in a3.values().iter().zip([-4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]) {
            assert!(rel_err(*got, want) < 1e-14, "{got} vs {want}");
        }

        assert_eq!(
            alpha_coeffs(3, ArpVariant::Direct).unwrap().values(),
            &[-2.0, 0.0, 2.0]
        );
        assert_eq!(alpha_coeffs(1, ArpVariant::Avg).unwrap().values(), &[0.0]);
    }

    #[test]
    fn zero_length_is_rejected() {
        assert!(beta_coeffs(0).is_err());
        assert!(alpha_coeffs(0, ArpVariant::Avg).is_err());
        assert!(alpha_coeffs(0, ArpVariant::Direct).is_err());
    }

    #[test]
    fn avg_matches_expansion_of_beta() {
        for len in 1..=500 {
            let closed = alpha_coeffs(len, ArpVariant::Avg).unwrap();
            let expanded = expanded_alpha(len);
            for (a, b) in closed.values().iter().zip(&expanded) {
                assert!(rel_err(*a, *b) < 1e-9, "T={len}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn coefficients_sum_to_zero() {
        for len in 1..=1000 {
            for variant in [ArpVariant::Avg, ArpVariant::Direct] {
                let sum: f64 = alpha_coeffs(len, variant).unwrap().values().iter().sum();
                assert!(sum.abs() <= 1e-9 * len as f64, "T={len} {variant}: {sum}");
            }
        }
    }

    #[test]
    fn direct_is_antisymmetric_and_increasing() {
        for len in 1..=200 {
            let v = alpha_coeffs(len, ArpVariant::Direct).unwrap();
            let v = v.values();
            for t in 0..len {
                assert_eq!(v[t], -v[len - 1 - t]);
            }
            assert!(v.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn avg_has_single_sign_change() {
        for len in 3..=300 {
            let v = alpha_coeffs(len, ArpVariant::Avg).unwrap();
            let v = v.values();
            let first_nonneg = v.iter().position(|&x| x >= 0.0).unwrap();
            assert!(first_nonneg > 0, "T={len}: first coefficient not negative");
            assert!(v[..first_nonneg].iter().all(|&x| x < 0.0));
            let rest = &v[first_nonneg..];
            let zeros = rest.iter().filter(|&&x| x == 0.0).count();
            assert!(zeros <= 1);
            if zeros == 1 {
                assert_eq!(rest[0], 0.0);
            }
            assert!(rest.iter().all(|&x| x >= 0.0), "T={len}: {v:?}");
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("avg".parse::<CoeffKind>().unwrap(), CoeffKind::Avg);
        assert_eq!("beta".parse::<CoeffKind>().unwrap(), CoeffKind::Beta);
        assert!("beta".parse::<ArpVariant>().is_err());
        assert_eq!(ArpVariant::Direct.to_string(), "direct");
    }
}
