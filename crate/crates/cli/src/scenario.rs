//! Synthetic stand-ins for a language model: one planted model per prompt
//! variant, built so that the premise adds, strengthens, removes and flips
//! known interactions.

use std::collections::{BTreeMap, BTreeSet};

use memreason_core::dataset::{bundled_dataset, SampleSpec};
use memreason_core::lattice::Mask;
use memreason_oracle::{cache_key, synthetic_eval, SyntheticModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

// word slots of the bundled sample:
// Emily is the colleague of Caren , Emily works as a
const EMILY: u32 = 1 << 0;
const IS: u32 = 1 << 1;
const THE: u32 = 1 << 2;
const COLLEAGUE: u32 = 1 << 3;
const CAREN: u32 = 1 << 5;
const EMILY2: u32 = 1 << 6;
const WORKS: u32 = 1 << 7;
const AS: u32 = 1 << 8;
const A: u32 = 1 << 9;

/// Planted `(mask, weight)` pairs, AND then OR.
pub type PlantedEffects = (Vec<(u32, f64)>, Vec<(u32, f64)>);

#[derive(Clone, Debug)]
pub struct Scenario {
    pub sample: SampleSpec,
    /// Planted model per variant id.
    pub models: BTreeMap<String, SyntheticModel>,
}

/// Effects present with or without the premise.
pub fn question_effects() -> PlantedEffects {
    let and = vec![
        (WORKS | AS | A, 1.2),
        (AS | A, 0.8),
        (EMILY2 | WORKS, 0.6),
        (EMILY, 0.4),
        (IS | THE, -0.3),
    ];
    let or = vec![(COLLEAGUE | WORKS, 0.5)];
    (and, or)
}

/// What the premise changes: two new AND patterns, one strengthened, one
/// mostly cancelled and one OR pattern flipped.
pub fn premise_effects() -> PlantedEffects {
    let and = vec![
        (COLLEAGUE | CAREN, 1.5),
        (CAREN | WORKS | AS, 0.9),
        (WORKS | AS | A, 0.6),
        (EMILY2 | WORKS, -0.45),
    ];
    let or = vec![(COLLEAGUE | WORKS, -1.0)];
    (and, or)
}

impl Scenario {
    /// The bundled sample with planted models. `chaos` scales the small
    /// variant-specific effects each member of the equivalence set gets on
    /// top of the shared ones; 0 makes all members identical.
    pub fn demo(seed: u64, chaos: f64) -> Self {
        let sample = bundled_dataset().remove(0);
        let n = sample.n;
        let (q_and, q_or) = question_effects();
        let (p_and, p_or) = premise_effects();

        let mut question = SyntheticModel::new(n, -3.0);
        for &(s, w) in &q_and {
            question = question.with_and(s, w);
        }
        for &(s, w) in &q_or {
            question = question.with_or(s, w);
        }
        let mut full = question.clone();
        full.baseline = -2.0;
        for &(s, w) in &p_and {
            *full.planted_and.entry(s).or_insert(0.0) += w;
        }
        for &(s, w) in &p_or {
            *full.planted_or.entry(s).or_insert(0.0) += w;
        }
        full.planted_and.retain(|_, w| *w != 0.0);
        full.planted_or.retain(|_, w| *w != 0.0);

        // chaotic terms avoid every planted mask and every single word
        let taken: BTreeSet<u32> = q_and
            .iter()
            .chain(&q_or)
            .chain(&p_and)
            .chain(&p_or)
            .map(|e| e.0)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut models = BTreeMap::new();
        models.insert(sample.question_only.variant_id.clone(), question);
        for member in sample.equivalence_set() {
            let mut m = full.clone();
            m.baseline += chaos * rng.random_range(-0.5..0.5);
            if chaos > 0.0 {
                let mut added = 0;
                while added < 3 {
                    let s: u32 = rng.random_range(1..1u32 << n);
                    if s.count_ones() < 2
                        || s.count_ones() > 3
                        || taken.contains(&s)
                        || m.planted_and.contains_key(&s)
                    {
                        continue;
                    }
                    m.planted_and.insert(
                        s,
                        chaos
                            * rng.random_range(0.05..0.2)
                            * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    );
                    added += 1;
                }
            }
            models.insert(member.variant_id.clone(), m);
        }
        Self { sample, models }
    }

    pub fn model(&self, variant_id: &str) -> Result<&SyntheticModel> {
        self.models.get(variant_id).ok_or_else(|| {
            Error::Usage(format!("scenario has no model for variant {variant_id:?}"))
        })
    }

    /// Probabilities a server would return if its log-odds were the planted
    /// values, keyed like the probability cache.
    pub fn probability_cache(&self, model_id: &str) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for v in self.sample.variants() {
            let model = self.model(&v.variant_id)?;
            for t in 0..1u32 << model.n {
                let value = synthetic_eval(model, Mask::new(t, model.n)?);
                let key = cache_key(&v.variant_id, t, &self.sample.target_token, model_id)?;
                out.insert(key, 1.0 / (1.0 + (-value).exp()));
            }
        }
        Ok(out)
    }
}

/// Twelve planted effects at n = 10: seven AND and five OR, magnitudes in
/// [0.5, 2.0] with random signs. OR effects have order 2 or more, since an
/// order-one OR effect is the same function as an order-one AND effect.
pub fn planted_recovery_model(seed: u64) -> SyntheticModel {
    let n = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SyntheticModel::new(n, 0.3);
    let mut used = BTreeSet::new();
    let mut draw = |rng: &mut ChaCha8Rng, min_order: u32| loop {
        let s: u32 = rng.random_range(1..1u32 << n);
        let order = s.count_ones();
        if order >= min_order && order <= 4 && used.insert(s) {
            break s;
        }
    };
    for _ in 0..7 {
        let s = draw(&mut rng, 1);
        let w = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        model = model.with_and(s, w);
    }
    for _ in 0..5 {
        let s = draw(&mut rng, 2);
        let w = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        model = model.with_or(s, w);
    }
    model
}

/// A smooth low-order model: every word contributes on its own, and each
/// neighbouring pair interacts, alternately as AND and as OR. All weights are
/// positive, so the mean output falls steadily as words are masked.
pub fn smooth_family(n: usize, seed: u64) -> SyntheticModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9));
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
    let mut model = SyntheticModel::new(n, 0.0);
    for (i, &w) in weights.iter().enumerate() {
        model = model.with_and(1 << i, w);
        if i + 1 < n {
            let pair = 0b11 << i;
            model = if i % 2 == 0 {
                model.with_and(pair, 0.5 * w)
            } else {
                model.with_or(pair, 0.5 * w)
            };
        }
    }
    model
}
