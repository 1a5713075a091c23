//! Algebraic manipulation detection code over GF(q^r).
//!
//! A message `s ∈ GF(q^r)^d` is protected by a random seed `x` and the tag
//! `h = x^(d+2) + Σ_{i=1..d} s_i x^i`. Any additive tampering of `(s, x, h)`
//! is detected except with probability at most `(d+1)/q^r`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{ExtElement, ExtField, GfError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmdError {
    #[error("message length d must be at least 1")]
    EmptyMessage,
    #[error("d + 2 = {d_plus_2} is divisible by the characteristic {q}")]
    DivisibleLength { d_plus_2: usize, q: u64 },
    #[error("message has {got} symbols, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("perturbation (s' - s, dx, dh) is all zero")]
    TrivialAttack,
    #[error(transparent)]
    Field(#[from] GfError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmdParams {
    field: ExtField,
    d: usize,
}

/// A protected message `{s, x, h}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmdCodeword {
    pub s: Vec<ExtElement>,
    pub x: ExtElement,
    pub h: ExtElement,
}

impl AmdParams {
    pub fn new(field: ExtField, d: usize) -> Result<Self, AmdError> {
        if d == 0 {
            return Err(AmdError::EmptyMessage);
        }
        let q = field.characteristic();
        if (d as u64 + 2).is_multiple_of(q) {
            return Err(AmdError::DivisibleLength { d_plus_2: d + 2, q });
        }
        Ok(Self { field, d })
    }

    pub fn field(&self) -> &ExtField {
        &self.field
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn check_message(&self, s: &[ExtElement]) -> Result<(), AmdError> {
        if s.len() != self.d {
            return Err(AmdError::Length {
                expected: self.d,
                got: s.len(),
            });
        }
        Ok(())
    }

    /// `h = x^(d+2) + Σ s_i x^i`.
    pub fn tag(&self, s: &[ExtElement], x: &ExtElement) -> Result<ExtElement, AmdError> {
        self.check_message(s)?;
        let f = &self.field;
        let mut acc = f.zero();
        let mut power = x.clone();
        for si in s {
            acc = f.add(&acc, &f.mul(si, &power)?)?;
            power = f.mul(&power, x)?;
        }
        // power is now x^(d+1)
        let lead = f.mul(&power, x)?;
        Ok(f.add(&acc, &lead)?)
    }

    pub fn encode(&self, s: Vec<ExtElement>, x: ExtElement) -> Result<AmdCodeword, AmdError> {
        let h = self.tag(&s, &x)?;
        Ok(AmdCodeword { s, x, h })
    }

    /// Whether `h'` is the tag of `(s', x')`. Malformed inputs never verify.
    pub fn verify(&self, s: &[ExtElement], x: &ExtElement, h: &ExtElement) -> bool {
        matches!(self.tag(s, x), Ok(t) if &t == h)
    }

    /// d / (d + 2).
    pub fn rate(&self) -> f64 {
        amd_rate(self.d)
    }

    /// (d + 1) / q^r.
    pub fn win_bound(&self) -> f64 {
        win_bound(self.d, self.field.order())
    }

    /// Number of seeds `x` for which the tampered codeword
    /// `(s', x + Δx, tag(s, x) + Δh)` passes verification, and the field order.
    pub fn attack_hits(
        &self,
        s: &[ExtElement],
        s_prime: &[ExtElement],
        dx: &ExtElement,
        dh: &ExtElement,
    ) -> Result<(u64, u64), AmdError> {
        self.check_message(s)?;
        self.check_message(s_prime)?;
        let f = &self.field;
        f.check(dx)?;
        f.check(dh)?;
        if s == s_prime && dx.is_zero() && dh.is_zero() {
            return Err(AmdError::TrivialAttack);
        }
        let mut hits = 0;
        for x in f.elements() {
            let h = f.add(&self.tag(s, &x)?, dh)?;
            let x_t = f.add(&x, dx)?;
            if self.verify(s_prime, &x_t, &h) {
                hits += 1;
            }
        }
        Ok((hits, f.order()))
    }

    /// Probability over a uniform seed that the additive attack succeeds.
    pub fn exhaustive_attack_success(
        &self,
        s: &[ExtElement],
        s_prime: &[ExtElement],
        dx: &ExtElement,
        dh: &ExtElement,
    ) -> Result<f64, AmdError> {
        let (hits, total) = self.attack_hits(s, s_prime, dx, dh)?;
        Ok(hits as f64 / total as f64)
    }
}

pub fn amd_rate(d: usize) -> f64 {
    d as f64 / (d as f64 + 2.0)
}

pub fn win_bound(d: usize, field_order: u64) -> f64 {
    (d as f64 + 1.0) / field_order as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(q: u64, r: usize, d: usize) -> AmdParams {
        AmdParams::new(ExtField::new(q, r).unwrap(), d).unwrap()
    }

    fn el(p: &AmdParams, v: &[u64]) -> ExtElement {
        p.field().element(v.to_vec()).unwrap()
    }

    #[test]
    fn tag_examples() {
        let p = params(5, 1, 1);
        assert_eq!(p.tag(&[el(&p, &[2])], &el(&p, &[3])).unwrap(), el(&p, &[3]));
        assert_eq!(p.tag(&[el(&p, &[0])], &el(&p, &[0])).unwrap(), el(&p, &[0]));
        let p = params(5, 1, 2);
        let s = [el(&p, &[1]), el(&p, &[1])];
        assert_eq!(p.tag(&s, &el(&p, &[2])).unwrap(), el(&p, &[2]));
        assert!(matches!(
            p.tag(&s[..1], &el(&p, &[2])),
            Err(AmdError::Length { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn verify_examples() {
        let p = params(5, 1, 1);
        let three = el(&p, &[3]);
        assert!(!p.verify(&[el(&p, &[3])], &three, &three));
        assert_eq!(p.tag(&[el(&p, &[3])], &three).unwrap(), el(&p, &[1]));
        assert!(p.verify(&[el(&p, &[2])], &three, &three));
    }

    #[test]
    fn honest_codewords_verify() {
        for d in 1..=2 {
            let p = params(5, 1, d);
            let f = p.field().clone();
            let msgs: Vec<Vec<ExtElement>> = (0..f.order().pow(d as u32))
                .map(|i| {
                    (0..d)
                        .map(|j| f.from_index(i / f.order().pow(j as u32) % f.order()))
                        .collect()
                })
                .collect();
            for s in &msgs {
                for x in f.elements() {
                    let cw = p.encode(s.clone(), x).unwrap();
                    assert!(p.verify(&cw.s, &cw.x, &cw.h));
                }
            }
        }
    }

    #[test]
    fn divisible_length_rejected() {
        let f = ExtField::new(5, 1).unwrap();
        assert_eq!(
            AmdParams::new(f.clone(), 3),
            Err(AmdError::DivisibleLength { d_plus_2: 5, q: 5 })
        );
        assert_eq!(AmdParams::new(f, 0), Err(AmdError::EmptyMessage));
        assert!(AmdParams::new(ExtField::new(2, 3).unwrap(), 2).is_err());
    }

    #[test]
    fn rate_and_bound() {
        assert!((amd_rate(8) - 0.8).abs() < 1e-15);
        assert!((amd_rate(1) - 1.0 / 3.0).abs() < 1e-15);
        for d in 1..100 {
            assert!(amd_rate(d + 1) > amd_rate(d));
            assert!(amd_rate(d) < 1.0);
        }
        assert!((params(5, 2, 2).win_bound() - 0.12).abs() < 1e-15);
        assert!((params(5, 1, 1).win_bound() - 0.4).abs() < 1e-15);
        let bounds: Vec<f64> = (1..=4).map(|r| params(5, r, 2).win_bound()).collect();
        assert!(bounds.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn attack_success_examples() {
        let p = params(5, 1, 1);
        let zero = el(&p, &[0]);
        let prob = p
            .exhaustive_attack_success(std::slice::from_ref(&zero), &[el(&p, &[1])], &zero, &zero)
            .unwrap();
        assert!((prob - 0.2).abs() < 1e-15);
        assert_eq!(
            p.exhaustive_attack_success(std::slice::from_ref(&zero), std::slice::from_ref(&zero), &zero, &zero),
            Err(AmdError::TrivialAttack)
        );
    }

    #[test]
    fn detection_is_complement_of_success() {
        let p = params(5, 1, 1);
        let f = p.field().clone();
        for s in f.elements() {
            for sp in f.elements() {
                for dx in f.elements() {
                    let dh = f.from_index(1);
                    let (hits, total) = p
                        .attack_hits(std::slice::from_ref(&s), std::slice::from_ref(&sp), &dx, &dh)
                        .unwrap();
                    let detected = f
                        .elements()
                        .filter(|x| {
                            let h = f.add(&p.tag(std::slice::from_ref(&s), x).unwrap(), &dh).unwrap();
                            !p.verify(std::slice::from_ref(&sp), &f.add(x, &dx).unwrap(), &h)
                        })
                        .count() as u64;
                    assert_eq!(hits + detected, total);
                }
            }
        }
    }

    #[test]
    fn small_field_worst_case_within_bound() {
        let p = params(5, 1, 1);
        let f = p.field().clone();
        let mut worst = 0u64;
        for s in f.elements() {
            for sp in f.elements() {
                for dx in f.elements() {
                    for dh in f.elements() {
                        if s == sp && dx.is_zero() && dh.is_zero() {
                            continue;
                        }
                        let (hits, _) = p
                            .attack_hits(std::slice::from_ref(&s), std::slice::from_ref(&sp), &dx, &dh)
                            .unwrap();
                        worst = worst.max(hits);
                    }
                }
            }
        }
        assert!(worst <= 2, "worst = {worst}");
    }
}
