//! Memorization/reasoning decomposition of interaction effects.
//!
//! For every subset `S` and family, three interaction vectors are compared:
//! the full prompt `I(S|x)`, the average over logically equivalent prompts
//! `I(S|𝕏)` and the question alone `I(S|x_q)`. They telescope into
//!
//! * foundational memorization `J^f = I(S|x_q)`,
//! * chaotic memorization `J^c = I(S|x) - I(S|𝕏)`,
//! * in-context reasoning `K = I(S|𝕏) - I(S|x_q)`,
//!
//! so `J^f + J^c + K = I(S|x)` exactly. Salient records are further classified
//! by how `K` acts on the total memorization `J = J^f + J^c`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Family, InteractionVector};
use crate::sparsifier::SalientSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternClass {
    Enhanced,
    Eliminated,
    Reversed,
    Unclassified,
}

impl PatternClass {
    pub const REASONING: [PatternClass; 3] = [
        PatternClass::Enhanced,
        PatternClass::Eliminated,
        PatternClass::Reversed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PatternClass::Enhanced => "enhanced",
            PatternClass::Eliminated => "eliminated",
            PatternClass::Reversed => "reversed",
            PatternClass::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies how the reasoning effect `k` acts on the memorization effect `j`.
///
/// `j·k > 0` is enhanced; `j·k < 0` is eliminated when `|j| >= |k|` and
/// reversed otherwise. On the boundary `j·k = 0` a lone nonzero term counts as
/// enhanced (the interaction's strength grows from the other term's zero) and
/// `j = k = 0` is unclassified.
pub fn classify_pattern(j_total: f64, k_reason: f64) -> PatternClass {
    let prod = j_total * k_reason;
    if prod > 0.0 {
        PatternClass::Enhanced
    } else if prod < 0.0 {
        if j_total.abs() >= k_reason.abs() {
            PatternClass::Eliminated
        } else {
            PatternClass::Reversed
        }
    } else if j_total != 0.0 || k_reason != 0.0 {
        PatternClass::Enhanced
    } else {
        PatternClass::Unclassified
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectRecord {
    pub mask: u32,
    pub order: usize,
    pub family: Family,
    pub salient: bool,
    pub i_full: f64,
    pub i_avg: f64,
    pub i_question: f64,
    pub j_found: f64,
    pub j_chaotic: f64,
    pub k_reason: f64,
    pub class_label: PatternClass,
}

impl EffectRecord {
    /// Total memorization `J^f + J^c`.
    pub fn j_total(&self) -> f64 {
        self.j_found + self.j_chaotic
    }

    /// `|J^f| / (|J^f| + |J^c| + |K|)`, or 0 when all three vanish.
    pub fn memorization_share(&self) -> f64 {
        let denom = self.j_found.abs() + self.j_chaotic.abs() + self.k_reason.abs();
        if denom == 0.0 {
            0.0
        } else {
            self.j_found.abs() / denom
        }
    }
}

/// Interaction vectors of one family for the full prompt, the equivalent-prompt
/// average and the question-only prompt.
#[derive(Clone, Copy, Debug)]
pub struct InteractionTriple<'a> {
    pub full: &'a InteractionVector,
    pub avg: &'a InteractionVector,
    pub question: &'a InteractionVector,
}

impl InteractionTriple<'_> {
    fn check(&self, family: Family) -> Result<usize> {
        let n = self.full.n();
        for (name, iv) in [("average", self.avg), ("question-only", self.question)] {
            if iv.n() != n {
                return Err(Error::Alignment(format!(
                    "{family} {name} vector has n = {}, full prompt has n = {n}",
                    iv.n()
                )));
            }
        }
        for iv in [self.full, self.avg, self.question] {
            if iv.family() != family {
                return Err(Error::WrongFamily {
                    expected: family,
                    found: iv.family(),
                });
            }
        }
        Ok(n)
    }
}

/// One record per mask per family (AND records first), classified where salient.
pub fn decompose_effects(
    and: InteractionTriple<'_>,
    or: InteractionTriple<'_>,
    salient_and: &SalientSet,
    salient_or: &SalientSet,
) -> Result<Vec<EffectRecord>> {
    let n = and.check(Family::And)?;
    let n_or = or.check(Family::Or)?;
    if n != n_or {
        return Err(Error::Alignment(format!(
            "AND vectors have n = {n}, OR vectors have n = {n_or}"
        )));
    }
    for (set, family) in [(salient_and, Family::And), (salient_or, Family::Or)] {
        if set.family != family {
            return Err(Error::WrongFamily {
                expected: family,
                found: set.family,
            });
        }
    }

    let len = 1usize << n;
    let mut records = Vec::with_capacity(2 * len);
    for (triple, salient) in [(and, salient_and), (or, salient_or)] {
        for s in 0..len {
            let i_full = triple.full.effects()[s];
            let i_avg = triple.avg.effects()[s];
            let i_question = triple.question.effects()[s];
            let j_found = i_question;
            let j_chaotic = i_full - i_avg;
            let k_reason = i_avg - i_question;
            let is_salient = salient.contains(s as u32);
            let class_label = if is_salient {
                classify_pattern(j_found + j_chaotic, k_reason)
            } else {
                PatternClass::Unclassified
            };
            records.push(EffectRecord {
                mask: s as u32,
                order: (s as u32).count_ones() as usize,
                family: triple.full.family(),
                salient: is_salient,
                i_full,
                i_avg,
                i_question,
                j_found,
                j_chaotic,
                k_reason,
                class_label,
            });
        }
    }
    Ok(records)
}

/// `max_S |J^f + J^c + K - I(S|x)|`.
pub fn verify_additivity(records: &[EffectRecord]) -> f64 {
    records
        .iter()
        .map(|r| (r.j_found + r.j_chaotic + r.k_reason - r.i_full).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PosNeg {
    pub pos: f64,
    pub neg: f64,
}

impl PosNeg {
    fn add(&mut self, x: f64) {
        if x > 0.0 {
            self.pos += x;
        } else {
            self.neg -= x;
        }
    }

    pub fn total(&self) -> f64 {
        self.pos + self.neg
    }
}

/// `E^{m,pos}` / `E^{m,neg}` for each effect kind, indexed by order `m`.
/// Index 0 exists for convenience and is always zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderStrengths {
    pub n: usize,
    pub foundational: Vec<PosNeg>,
    pub chaotic: Vec<PosNeg>,
    pub reasoning: Vec<PosNeg>,
}

impl OrderStrengths {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            foundational: vec![PosNeg::default(); n + 1],
            chaotic: vec![PosNeg::default(); n + 1],
            reasoning: vec![PosNeg::default(); n + 1],
        }
    }

    pub fn total(kind: &[PosNeg]) -> f64 {
        kind.iter().map(PosNeg::total).sum()
    }

    /// `(m, kind, pos, neg)` rows for `m = 1..=n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,kind,pos,neg\n");
        for m in 1..=self.n {
            for (kind, v) in [
                ("foundational", &self.foundational),
                ("chaotic", &self.chaotic),
                ("reasoning", &self.reasoning),
            ] {
                out.push_str(&format!("{m},{kind},{},{}\n", v[m].pos, v[m].neg));
            }
        }
        out
    }
}

fn order_count(records: &[EffectRecord]) -> usize {
    records.iter().map(|r| r.order).max().unwrap_or(0)
}

/// Per-order positive/negative strengths of `J^f`, `J^c` and `K` over both
/// families; with `salient_only` only salient records contribute.
pub fn order_strengths(records: &[EffectRecord], salient_only: bool) -> OrderStrengths {
    let mut out = OrderStrengths::zeros(order_count(records));
    for r in records.iter().filter(|r| !salient_only || r.salient) {
        if r.order == 0 {
            continue;
        }
        out.foundational[r.order].add(r.j_found);
        out.chaotic[r.order].add(r.j_chaotic);
        out.reasoning[r.order].add(r.k_reason);
    }
    out
}

/// `G^{m,pos}` / `G^{m,neg}` of `K` per reasoning pattern class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasoningOrderStrengths {
    pub n: usize,
    pub enhanced: Vec<PosNeg>,
    pub eliminated: Vec<PosNeg>,
    pub reversed: Vec<PosNeg>,
}

impl ReasoningOrderStrengths {
    pub fn class(&self, class: PatternClass) -> Option<&[PosNeg]> {
        match class {
            PatternClass::Enhanced => Some(&self.enhanced),
            PatternClass::Eliminated => Some(&self.eliminated),
            PatternClass::Reversed => Some(&self.reversed),
            PatternClass::Unclassified => None,
        }
    }

    /// `(m, class, pos, neg)` rows for `m = 1..=n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,class,pos,neg\n");
        for m in 1..=self.n {
            for class in PatternClass::REASONING {
                let v = self.class(class).unwrap();
                out.push_str(&format!("{m},{class},{},{}\n", v[m].pos, v[m].neg));
            }
        }
        out
    }
}

pub fn reasoning_order_strengths(records: &[EffectRecord]) -> ReasoningOrderStrengths {
    let n = order_count(records);
    let mut out = ReasoningOrderStrengths {
        n,
        enhanced: vec![PosNeg::default(); n + 1],
        eliminated: vec![PosNeg::default(); n + 1],
        reversed: vec![PosNeg::default(); n + 1],
    };
    for r in records {
        let slot = match r.class_label {
            PatternClass::Enhanced => &mut out.enhanced,
            PatternClass::Eliminated => &mut out.eliminated,
            PatternClass::Reversed => &mut out.reversed,
            PatternClass::Unclassified => continue,
        };
        slot[r.order].add(r.k_reason);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectRatios {
    pub rho_r: f64,
    pub rho_c: f64,
    pub e_all: f64,
}

/// `ρ_r = ΣE_K / E_all`, `ρ_c = ΣE_c / E_all`.
pub fn effect_ratios(strengths: &OrderStrengths) -> Result<EffectRatios> {
    let f = OrderStrengths::total(&strengths.foundational);
    let c = OrderStrengths::total(&strengths.chaotic);
    let k = OrderStrengths::total(&strengths.reasoning);
    let e_all = f + c + k;
    if !(e_all > 0.0) {
        return Err(Error::UndefinedRatio);
    }
    Ok(EffectRatios {
        rho_r: k / e_all,
        rho_c: c / e_all,
        e_all,
    })
}

/// Flat CSV of effect records.
pub fn records_to_csv(records: &[EffectRecord]) -> String {
    let mut out = String::from(
        "family,mask,order,I_full,I_avg,I_question,Jf,Jc,K,class,memorization_share\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.family,
            r.mask,
            r.order,
            r.i_full,
            r.i_avg,
            r.i_question,
            r.j_found,
            r.j_chaotic,
            r.k_reason,
            r.class_label,
            r.memorization_share()
        ));
    }
    out
}
