//! Exact combinatorics on the subset lattice of `n` input variables.
//!
//! Every lattice-shaped table (model outputs, component tables, interaction
//! effects) is a dense `Vec<f64>` of length `2^n` indexed by the numeric value
//! of the [`Mask`] bit pattern: bit `i` stands for the `i`-th annotated word
//! in reading order. A mask `T` denotes the masked sample `x_T` in which the
//! variables in `T` are kept and the variables in `N \ T` are masked.
//!
//! The transforms here are the `O(n 2^n)` butterfly forms of the subset
//! zeta/Möbius pair. AND effects are the Möbius transform of the AND
//! component; OR effects are the negated Möbius transform of the OR component
//! read through the complement reflection `T -> N \ T`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported variable count. Tables are materialized densely.
pub const MAX_VARIABLES: usize = 20;

/// Value of the `order` field in serialized lattice documents.
pub const INDEX_ORDER: &str = "numeric-bitmask";

/// Validates `n` and returns the table length `2^n`.
pub fn table_len(n: usize) -> Result<usize> {
    if n == 0 || n > MAX_VARIABLES {
        return Err(Error::Config(format!(
            "variable count must be in 1..={MAX_VARIABLES}, got {n}"
        )));
    }
    Ok(1usize << n)
}

/// Recovers `n` from a table length, which must be `2^n` with `1 <= n <= 20`.
pub fn variables_for_len(len: usize) -> Result<usize> {
    if !len.is_power_of_two() || len < 2 {
        return Err(Error::Shape(format!(
            "table length {len} is not 2^n for any n >= 1"
        )));
    }
    let n = len.trailing_zeros() as usize;
    table_len(n)?;
    Ok(n)
}

/// A subset of the `n` annotated input variables.
///
/// Ordering is the numeric order of the bit pattern, which is also the
/// position of the mask in every lattice table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mask {
    bits: u32,
    n: u8,
}

impl Mask {
    pub fn new(bits: u32, n: usize) -> Result<Self> {
        let len = table_len(n)?;
        if bits as usize >= len {
            return Err(Error::Config(format!(
                "mask {bits:#b} has bits above position {}",
                n - 1
            )));
        }
        Ok(Self { bits, n: n as u8 })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(0, n)
    }

    pub fn full(n: usize) -> Result<Self> {
        let len = table_len(n)?;
        Self::new((len - 1) as u32, n)
    }

    pub fn from_indices(indices: &[usize], n: usize) -> Result<Self> {
        table_len(n)?;
        let mut bits = 0u32;
        for &i in indices {
            if i >= n {
                return Err(Error::Config(format!(
                    "variable index {i} out of range for n = {n}"
                )));
            }
            bits |= 1 << i;
        }
        Self::new(bits, n)
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn index(self) -> usize {
        self.bits as usize
    }

    #[inline]
    pub fn n(self) -> usize {
        self.n as usize
    }

    /// Interaction order `|S|`.
    #[inline]
    pub fn order(self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        i < self.n() && self.bits & (1 << i) != 0
    }

    #[inline]
    pub fn is_subset_of(self, other: Mask) -> bool {
        self.bits & !other.bits == 0
    }

    #[inline]
    pub fn intersects(self, other: Mask) -> bool {
        self.bits & other.bits != 0
    }

    /// `N \ self`.
    pub fn complement(self) -> Mask {
        let full = ((1u64 << self.n) - 1) as u32;
        Mask {
            bits: full ^ self.bits,
            n: self.n,
        }
    }

    /// Member variable indices in increasing order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.n()).filter(move |i| bits & (1 << i) != 0)
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.indices().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

/// All `2^n` masks in canonical numeric order.
pub fn enumerate_masks(n: usize) -> Result<Vec<Mask>> {
    let len = table_len(n)?;
    Ok((0..len)
        .map(|bits| Mask {
            bits: bits as u32,
            n: n as u8,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    And,
    Or,
}

impl Family {
    pub const BOTH: [Family; 2] = [Family::And, Family::Or];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::And => "and",
            Family::Or => "or",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite {
            mask: i as u32,
            value: values[i],
        }),
        None => Ok(()),
    }
}

/// Model outputs `v(x_T)` on all `2^n` masked samples of one prompt variant.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    n: usize,
    values: Vec<f64>,
    variant_id: String,
}

impl ValueTable {
    pub fn new(variant_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let n = variables_for_len(values.len())?;
        check_finite(&values)?;
        Ok(Self {
            n,
            values,
            variant_id: variant_id.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn variant_id(&self) -> &str {
        &self.variant_id
    }

    pub fn get(&self, mask: Mask) -> f64 {
        self.values[mask.index()]
    }

    /// `v(x_∅)`, the output with every annotated variable masked.
    pub fn baseline(&self) -> f64 {
        self.values[0]
    }

    /// `u(x_T) = v(x_T) - v(x_∅)`.
    pub fn shifted(&self) -> Vec<f64> {
        let b = self.baseline();
        self.values.iter().map(|v| v - b).collect()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn to_document(&self) -> LatticeDocument {
        LatticeDocument {
            n: self.n,
            variant_id: self.variant_id.clone(),
            family: None,
            order: INDEX_ORDER.to_string(),
            values: self.values.clone(),
        }
    }

    pub fn from_document(doc: LatticeDocument) -> Result<Self> {
        doc.check()?;
        Self::new(doc.variant_id, doc.values)
    }
}

/// Signed interaction effects, one per subset, for one family.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionVector {
    n: usize,
    family: Family,
    effects: Vec<f64>,
}

impl InteractionVector {
    /// Wraps raw effects. The entry at the empty mask must be exactly zero.
    pub fn new(family: Family, effects: Vec<f64>) -> Result<Self> {
        let n = variables_for_len(effects.len())?;
        check_finite(&effects)?;
        if effects[0] != 0.0 {
            return Err(Error::NonzeroEmptyEntry(effects[0]));
        }
        Ok(Self { n, family, effects })
    }

    pub fn zeros(family: Family, n: usize) -> Result<Self> {
        let len = table_len(n)?;
        Ok(Self {
            n,
            family,
            effects: vec![0.0; len],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn effects(&self) -> &[f64] {
        &self.effects
    }

    pub fn get(&self, mask: Mask) -> f64 {
        self.effects[mask.index()]
    }

    pub fn l1_norm(&self) -> f64 {
        self.effects.iter().map(|e| e.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.effects.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    pub fn to_document(&self, variant_id: &str) -> LatticeDocument {
        LatticeDocument {
            n: self.n,
            variant_id: variant_id.to_string(),
            family: Some(self.family),
            order: INDEX_ORDER.to_string(),
            values: self.effects.clone(),
        }
    }

    pub fn from_document(doc: LatticeDocument) -> Result<(String, Self)> {
        doc.check()?;
        let family = doc
            .family
            .ok_or_else(|| Error::Shape("interaction document has no family".into()))?;
        let iv = Self::new(family, doc.values)?;
        Ok((doc.variant_id, iv))
    }
}

/// On-disk form of value tables and interaction vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeDocument {
    pub n: usize,
    pub variant_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    pub order: String,
    pub values: Vec<f64>,
}

impl LatticeDocument {
    fn check(&self) -> Result<()> {
        if self.order != INDEX_ORDER {
            return Err(Error::Shape(format!(
                "unsupported index order {:?}",
                self.order
            )));
        }
        let len = table_len(self.n)?;
        if self.values.len() != len {
            return Err(Error::Shape(format!(
                "document declares n = {} but holds {} values",
                self.n,
                self.values.len()
            )));
        }
        Ok(())
    }
}

// --- in-place butterflies -------------------------------------------------

/// `x[T] <- Σ_{S ⊆ T} x[S]`.
pub fn subset_zeta_in_place(x: &mut [f64]) {
    let len = x.len();
    let mut bit = 1;
    while bit < len {
        for block in x.chunks_exact_mut(bit << 1) {
            let (lo, hi) = block.split_at_mut(bit);
            for (h, l) in hi.iter_mut().zip(lo.iter()) {
                *h += *l;
            }
        }
        bit <<= 1;
    }
}

/// `x[S] <- Σ_{T ⊆ S} (-1)^{|S|-|T|} x[T]`, the inverse of [`subset_zeta_in_place`].
pub fn subset_mobius_in_place(x: &mut [f64]) {
    let len = x.len();
    let mut bit = 1;
    while bit < len {
        for block in x.chunks_exact_mut(bit << 1) {
            let (lo, hi) = block.split_at_mut(bit);
            for (h, l) in hi.iter_mut().zip(lo.iter()) {
                *h -= *l;
            }
        }
        bit <<= 1;
    }
}

/// `x[T] <- Σ_{S ⊇ T} (-1)^{|S|-|T|} x[S]`, the transpose of the subset Möbius map.
pub fn superset_mobius_in_place(x: &mut [f64]) {
    let len = x.len();
    let mut bit = 1;
    while bit < len {
        for block in x.chunks_exact_mut(bit << 1) {
            let (lo, hi) = block.split_at_mut(bit);
            for (l, h) in lo.iter_mut().zip(hi.iter()) {
                *l -= *h;
            }
        }
        bit <<= 1;
    }
}

/// `x[T] <- Σ_{S ⊇ T} x[S]`, the transpose of the subset zeta map.
pub fn superset_zeta_in_place(x: &mut [f64]) {
    let len = x.len();
    let mut bit = 1;
    while bit < len {
        for block in x.chunks_exact_mut(bit << 1) {
            let (lo, hi) = block.split_at_mut(bit);
            for (l, h) in lo.iter_mut().zip(hi.iter()) {
                *l += *h;
            }
        }
        bit <<= 1;
    }
}

/// `out[T] = x[N \ T]`.
pub fn reflect(x: &[f64]) -> Vec<f64> {
    let full = x.len() - 1;
    (0..x.len()).map(|t| x[full ^ t]).collect()
}

fn check_table(table: &[f64]) -> Result<usize> {
    let n = variables_for_len(table.len())?;
    check_finite(table)?;
    Ok(n)
}

/// AND effects of a baseline-shifted component table:
/// `I_and(S) = Σ_{T ⊆ S} (-1)^{|S|-|T|} table[T]`.
pub fn mobius_and(component: &[f64]) -> Result<InteractionVector> {
    let n = check_table(component)?;
    if component[0] != 0.0 {
        return Err(Error::NonzeroEmptyEntry(component[0]));
    }
    let mut effects = component.to_vec();
    subset_mobius_in_place(&mut effects);
    effects[0] = 0.0;
    Ok(InteractionVector {
        n,
        family: Family::And,
        effects,
    })
}

/// OR effects of a baseline-shifted component table:
/// `I_or(S) = -Σ_{T ⊆ S} (-1)^{|S|-|T|} table[N \ T]` for `S ≠ ∅`, computed as
/// the negated AND transform of the reflected table.
pub fn mobius_or(component: &[f64]) -> Result<InteractionVector> {
    let n = check_table(component)?;
    if component[0] != 0.0 {
        return Err(Error::NonzeroEmptyEntry(component[0]));
    }
    let mut effects = reflect(component);
    subset_mobius_in_place(&mut effects);
    for e in effects.iter_mut() {
        *e = -*e;
    }
    effects[0] = 0.0;
    Ok(InteractionVector {
        n,
        family: Family::Or,
        effects,
    })
}

/// Component table rebuilt from AND effects: `Σ_{S ⊆ T} I_and(S)`.
pub fn zeta_and(iv: &InteractionVector) -> Result<Vec<f64>> {
    if iv.family != Family::And {
        return Err(Error::WrongFamily {
            expected: Family::And,
            found: iv.family,
        });
    }
    let mut out = iv.effects.clone();
    subset_zeta_in_place(&mut out);
    Ok(out)
}

/// Component table rebuilt from OR effects: `Σ_{S ∩ T ≠ ∅} I_or(S)`.
pub fn zeta_or(iv: &InteractionVector) -> Result<Vec<f64>> {
    if iv.family != Family::Or {
        return Err(Error::WrongFamily {
            expected: Family::Or,
            found: iv.family,
        });
    }
    let total: f64 = iv.effects.iter().sum();
    let mut inside = iv.effects.clone();
    subset_zeta_in_place(&mut inside);
    // Σ_{S ∩ T ≠ ∅} = total - Σ_{S ⊆ N \ T}
    let full = inside.len() - 1;
    Ok((0..inside.len())
        .map(|t| total - inside[full ^ t])
        .collect())
}

fn check_pair(and_iv: &InteractionVector, or_iv: &InteractionVector) -> Result<()> {
    if and_iv.family != Family::And {
        return Err(Error::WrongFamily {
            expected: Family::And,
            found: and_iv.family,
        });
    }
    if or_iv.family != Family::Or {
        return Err(Error::WrongFamily {
            expected: Family::Or,
            found: or_iv.family,
        });
    }
    if and_iv.n != or_iv.n {
        return Err(Error::Shape(format!(
            "AND vector has n = {}, OR vector has n = {}",
            and_iv.n, or_iv.n
        )));
    }
    Ok(())
}

/// Surrogate output on one masked sample:
/// `baseline + Σ_{∅≠S⊆T} I_and(S) + Σ_{S∩T≠∅} I_or(S)`.
pub fn zeta_reconstruct(
    and_iv: &InteractionVector,
    or_iv: &InteractionVector,
    baseline: f64,
    mask: Mask,
) -> Result<f64> {
    check_pair(and_iv, or_iv)?;
    if mask.n() != and_iv.n {
        return Err(Error::Shape(format!(
            "mask over {} variables used with n = {} vectors",
            mask.n(),
            and_iv.n
        )));
    }
    let t = mask.bits() as usize;
    let mut and_sum = 0.0;
    // submask enumeration of T, including ∅ (which holds 0)
    let mut s = t;
    loop {
        and_sum += and_iv.effects[s];
        if s == 0 {
            break;
        }
        s = (s - 1) & t;
    }
    let or_sum: f64 = or_iv
        .effects
        .iter()
        .enumerate()
        .filter(|(s, _)| s & t != 0)
        .map(|(_, e)| e)
        .sum();
    Ok(baseline + and_sum + or_sum)
}

/// Surrogate outputs on all `2^n` masked samples at once.
pub fn reconstruct_all(
    and_iv: &InteractionVector,
    or_iv: &InteractionVector,
    baseline: f64,
) -> Result<Vec<f64>> {
    check_pair(and_iv, or_iv)?;
    let and_part = zeta_and(and_iv)?;
    let or_part = zeta_or(or_iv)?;
    Ok(and_part
        .iter()
        .zip(&or_part)
        .map(|(a, o)| baseline + a + o)
        .collect())
}

/// Transpose of the linear map `component table -> effects` of `family`.
///
/// Used to pull an effect-space (sub)gradient back to table space.
pub fn adjoint_zeta(grad: &[f64], family: Family) -> Result<Vec<f64>> {
    check_table(grad)?;
    let mut out = grad.to_vec();
    adjoint_in_place(&mut out, family);
    Ok(out)
}

/// Unchecked in-place form of [`adjoint_zeta`].
pub(crate) fn adjoint_in_place(buf: &mut [f64], family: Family) {
    match family {
        Family::And => superset_mobius_in_place(buf),
        Family::Or => {
            // effects = P (-M R) table, where P zeroes the ∅ entry
            buf[0] = 0.0;
            superset_mobius_in_place(buf);
            let full = buf.len() - 1;
            for t in 0..buf.len() / 2 {
                buf.swap(t, full ^ t);
            }
            for v in buf.iter_mut() {
                *v = -*v;
            }
        }
    }
}
