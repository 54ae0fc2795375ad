//! Multi-indices labelling the derivative blocks.
//!
//! A [`MultiIndexTable`] enumerates every `ν ∈ ℕ^q` with `|ν| ≤ r` in graded
//! order: total order first, then descending lexicographic inside one order,
//! so the first-order indices come out as `e_1, e_2, …, e_q`. Under this
//! labelling every proper split `ν = μ + (ν − μ)` with `μ ≠ 0` has
//! `label(ν − μ) < label(ν)`, which makes the step block lower-triangular.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(q: usize) -> Self {
        MultiIndex(vec![0; q])
    }

    /// The unit index `e_k`.
    pub fn unit(q: usize, k: usize) -> Self {
        let mut v = vec![0; q];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total order `|ν|`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Componentwise `self ≤ other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.le(self) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.0.len(), other.0.len(), "multi-index dimension mismatch");
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

/// One ordered Leibniz split `ν = μ + (ν − μ)`, stored by table labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    /// Label of `μ`.
    pub mu: usize,
    /// Label of `ν − μ`.
    pub rest: usize,
    /// `ν! / (μ! (ν − μ)!)`.
    pub coeff: u64,
}

#[derive(Debug, Clone)]
pub struct MultiIndexTable {
    q: usize,
    r: usize,
    indices: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
    splits: Vec<Vec<Split>>,
}

fn checked_binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at each step
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of multi-indices `ν ∈ ℕ^q` with `|ν| ≤ r`, i.e. `(r+q)! / (r! q!)`.
pub fn table_size(q: usize, r: usize) -> Option<usize> {
    let n = (r as u64).checked_add(q as u64)?;
    let k = checked_binomial(n, q as u64)?;
    usize::try_from(k).ok()
}

/// `Π_d binom(ν_d, μ_d)`.
pub fn multinomial_coeff(nu: &MultiIndex, mu: &MultiIndex) -> Result<u64> {
    if !mu.le(nu) {
        return Err(Error::NotDominated {
            nu: nu.0.clone(),
            mu: mu.0.clone(),
        });
    }
    let mut acc: u64 = 1;
    for (&n, &m) in nu.0.iter().zip(&mu.0) {
        let b = checked_binomial(n as u64, m as u64).ok_or(Error::InvalidArgument(format!(
            "binomial coefficient overflow for {nu} over {mu}"
        )))?;
        acc = acc.checked_mul(b).ok_or(Error::InvalidArgument(format!(
            "multinomial coefficient overflow for {nu} over {mu}"
        )))?;
    }
    Ok(acc)
}

// All compositions of `total` into `parts` nonnegative parts, first component descending.
fn push_compositions(total: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if parts == 1 {
        prefix.push(total);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

impl MultiIndexTable {
    pub fn new(q: usize, r: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidArgument(
                "parameter dimension q must be at least 1".into(),
            ));
        }
        let k = table_size(q, r).ok_or(Error::TableOverflow { q, r })?;
        if u32::try_from(r).is_err() {
            return Err(Error::TableOverflow { q, r });
        }

        let mut indices = Vec::with_capacity(k);
        let mut prefix = Vec::with_capacity(q);
        for order in 0..=r as u32 {
            push_compositions(order, q, &mut prefix, &mut indices);
        }
        debug_assert_eq!(indices.len(), k);

        let position: HashMap<MultiIndex, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, nu)| (nu.clone(), i))
            .collect();

        let mut splits = Vec::with_capacity(k);
        for nu in &indices {
            let mut row = Vec::new();
            // every μ ≤ ν has |μ| ≤ |ν| ≤ r, so it is in the table; scanning
            // in label order keeps the splits graded by μ
            for (mu_label, mu) in indices.iter().enumerate() {
                if let Some(rest) = nu.checked_sub(mu) {
                    row.push(Split {
                        mu: mu_label,
                        rest: position[&rest],
                        coeff: multinomial_coeff(nu, mu)?,
                    });
                }
            }
            splits.push(row);
        }

        Ok(MultiIndexTable {
            q,
            r,
            indices,
            position,
            splits,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Number of labels `K`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index(&self, label: usize) -> &MultiIndex {
        &self.indices[label]
    }

    pub fn label(&self, nu: &MultiIndex) -> Option<usize> {
        self.position.get(nu).copied()
    }

    pub fn try_label(&self, nu: &MultiIndex) -> Result<usize> {
        self.label(nu)
            .ok_or_else(|| Error::UnknownIndex(nu.exponents().to_vec()))
    }

    /// Label of `e_k`. Requires `r ≥ 1`.
    pub fn unit_label(&self, k: usize) -> usize {
        debug_assert!(self.r >= 1 && k < self.q);
        1 + k
    }

    /// Label of `e_k + e_l`. Requires `r ≥ 2`.
    pub fn pair_label(&self, k: usize, l: usize) -> usize {
        debug_assert!(self.r >= 2);
        let mut v = vec![0u32; self.q];
        v[k] += 1;
        v[l] += 1;
        self.position[&MultiIndex(v)]
    }

    /// Ordered Leibniz splits of the index at `label`.
    pub fn splits(&self, label: usize) -> &[Split] {
        &self.splits[label]
    }

    /// Splits as `(μ, ν − μ, coeff)` triples.
    pub fn decompositions(&self, nu: &MultiIndex) -> Result<Vec<(MultiIndex, MultiIndex, u64)>> {
        let label = self.try_label(nu)?;
        Ok(self.splits[label]
            .iter()
            .map(|s| {
                (
                    self.indices[s.mu].clone(),
                    self.indices[s.rest].clone(),
                    s.coeff,
                )
            })
            .collect())
    }

    /// Table restricted to orders `≤ r'`; its labels coincide with the first
    /// `K'` labels of `self`.
    pub fn truncated(&self, r: usize) -> Result<MultiIndexTable> {
        MultiIndexTable::new(self.q, r.min(self.r))
    }
}

/// Convenience wrapper matching the table constructor.
pub fn build_table(q: usize, r: usize) -> Result<MultiIndexTable> {
    MultiIndexTable::new(q, r)
}
