use memreason_core::effects::{
    decompose_effects, effect_ratios, order_strengths, reasoning_order_strengths, records_to_csv,
    verify_additivity, EffectRecord, InteractionTriple, OrderStrengths, PatternClass, PosNeg,
};
use memreason_core::error::Error;
use memreason_core::lattice::{Family, InteractionVector};
use memreason_core::sparsifier::{extract_salient_pair, SalientSet, TauPolicy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vector(family: Family, rng: &mut impl Rng, n: usize) -> InteractionVector {
    let mut e: Vec<f64> = (0..1usize << n)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    e[0] = 0.0;
    InteractionVector::new(family, e).unwrap()
}

struct Analysis {
    and: [InteractionVector; 3],
    or: [InteractionVector; 3],
}

impl Analysis {
    fn random(seed: u64, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            and: [0, 1, 2].map(|_| vector(Family::And, &mut rng, n)),
            or: [0, 1, 2].map(|_| vector(Family::Or, &mut rng, n)),
        }
    }

    fn scaled(&self, c: f64) -> Self {
        let s = |iv: &InteractionVector| {
            InteractionVector::new(iv.family(), iv.effects().iter().map(|e| c * e).collect())
                .unwrap()
        };
        Self {
            and: [s(&self.and[0]), s(&self.and[1]), s(&self.and[2])],
            or: [s(&self.or[0]), s(&self.or[1]), s(&self.or[2])],
        }
    }

    fn salient(&self, policy: TauPolicy) -> (SalientSet, SalientSet) {
        extract_salient_pair(&self.and[0], &self.or[0], policy).unwrap()
    }

    fn records(&self, policy: TauPolicy) -> Vec<EffectRecord> {
        let (sa, so) = self.salient(policy);
        decompose_effects(triple(&self.and), triple(&self.or), &sa, &so).unwrap()
    }
}

/// Full prompt, equivalence average, question only.
fn triple(v: &[InteractionVector; 3]) -> InteractionTriple<'_> {
    InteractionTriple {
        full: &v[0],
        avg: &v[1],
        question: &v[2],
    }
}

fn brute_strengths(records: &[EffectRecord], n: usize) -> [[Vec<f64>; 2]; 3] {
    let mut out = [
        [vec![0.0; n + 1], vec![0.0; n + 1]],
        [vec![0.0; n + 1], vec![0.0; n + 1]],
        [vec![0.0; n + 1], vec![0.0; n + 1]],
    ];
    for r in records.iter().filter(|r| r.salient) {
        for (kind, v) in [r.j_found, r.j_chaotic, r.k_reason].into_iter().enumerate() {
            if v > 0.0 {
                out[kind][0][r.order] += v;
            } else {
                out[kind][1][r.order] -= v;
            }
        }
    }
    out
}

#[test]
fn order_strengths_match_one_pass_accumulation() {
    let analysis = Analysis::random(1, 4);
    let records = analysis.records(TauPolicy::Relative(0.3));
    let s = order_strengths(&records, true);
    let oracle = brute_strengths(&records, 4);
    for (kind, got) in [&s.foundational, &s.chaotic, &s.reasoning]
        .into_iter()
        .enumerate()
    {
        for m in 0..=4 {
            assert!((got[m].pos - oracle[kind][0][m]).abs() < 1e-12);
            assert!((got[m].neg - oracle[kind][1][m]).abs() < 1e-12);
        }
    }
}

#[test]
fn six_random_records_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let records: Vec<EffectRecord> = (0..6)
        .map(|i| {
            let mask = rng.random_range(1u32..16);
            let (q, a, f) = (
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let (jf, jc, k) = (q, f - a, a - q);
            EffectRecord {
                mask,
                order: mask.count_ones() as usize,
                family: if i % 2 == 0 { Family::And } else { Family::Or },
                salient: true,
                i_full: f,
                i_avg: a,
                i_question: q,
                j_found: jf,
                j_chaotic: jc,
                k_reason: k,
                class_label: memreason_core::effects::classify_pattern(jf + jc, k),
            }
        })
        .collect();
    let s = order_strengths(&records, true);
    let oracle = brute_strengths(&records, 4);
    // strengths are sized by the highest order present
    let top = records.iter().map(|r| r.order).max().unwrap();
    assert_eq!(s.chaotic.len(), top + 1);
    assert!((top + 1..=4).all(|m| oracle[1][0][m] == 0.0 && oracle[2][1][m] == 0.0));
    for m in 0..=top {
        assert!((s.chaotic[m].pos - oracle[1][0][m]).abs() < 1e-12);
        assert!((s.reasoning[m].neg - oracle[2][1][m]).abs() < 1e-12);
    }

    let g = reasoning_order_strengths(&records);
    for class in [
        PatternClass::Enhanced,
        PatternClass::Eliminated,
        PatternClass::Reversed,
    ] {
        let mut pos = vec![0.0; 5];
        let mut neg = vec![0.0; 5];
        for r in records.iter().filter(|r| r.class_label == class) {
            pos[r.order] += r.k_reason.max(0.0);
            neg[r.order] += (-r.k_reason).max(0.0);
        }
        let got = g.class(class).unwrap();
        for m in 0..=top {
            assert!((got[m].pos - pos[m]).abs() < 1e-12 && (got[m].neg - neg[m]).abs() < 1e-12);
        }
    }
}

#[test]
fn prompt_without_premise_has_no_reasoning_or_chaotic_effects() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q_and = vector(Family::And, &mut rng, 3);
    let q_or = vector(Family::Or, &mut rng, 3);
    let (sa, so) = extract_salient_pair(&q_and, &q_or, TauPolicy::Relative(0.05)).unwrap();
    let same = |v| InteractionTriple {
        full: v,
        avg: v,
        question: v,
    };
    let records = decompose_effects(same(&q_and), same(&q_or), &sa, &so).unwrap();
    assert!(records
        .iter()
        .all(|r| r.k_reason == 0.0 && r.j_chaotic == 0.0));
}

#[test]
fn single_member_equivalence_set_has_no_chaotic_effects() {
    let a = Analysis::random(3, 3);
    let (sa, so) = a.salient(TauPolicy::Relative(0.05));
    let and = InteractionTriple {
        full: &a.and[0],
        avg: &a.and[0],
        question: &a.and[2],
    };
    let or = InteractionTriple {
        full: &a.or[0],
        avg: &a.or[0],
        question: &a.or[2],
    };
    let records = decompose_effects(and, or, &sa, &so).unwrap();
    assert!(records.iter().all(|r| r.j_chaotic == 0.0));
}

#[test]
fn misaligned_triples_are_rejected() {
    let a = Analysis::random(4, 3);
    let b = Analysis::random(4, 4);
    let (sa, so) = a.salient(TauPolicy::Relative(0.05));
    let and = InteractionTriple {
        full: &a.and[0],
        avg: &b.and[1],
        question: &a.and[2],
    };
    let or = InteractionTriple {
        full: &a.or[0],
        avg: &a.or[1],
        question: &a.or[2],
    };
    assert!(matches!(
        decompose_effects(and, or, &sa, &so),
        Err(Error::Alignment(_))
    ));
}

#[test]
fn table_two_fixture_ratios() {
    // foundational 53.51, chaotic 7.37, reasoning 39.12 over a total of 100
    let mut s = OrderStrengths::zeros(3);
    s.foundational[1] = PosNeg {
        pos: 40.0,
        neg: 13.51,
    };
    s.chaotic[2] = PosNeg {
        pos: 5.0,
        neg: 2.37,
    };
    s.reasoning[2] = PosNeg {
        pos: 30.0,
        neg: 0.0,
    };
    s.reasoning[3] = PosNeg {
        pos: 0.0,
        neg: 9.12,
    };
    let r = effect_ratios(&s).unwrap();
    assert!((r.e_all - 100.0).abs() < 1e-12);
    assert_eq!(format!("{:.2}%", 100.0 * r.rho_r), "39.12%");
    assert_eq!(format!("{:.2}%", 100.0 * r.rho_c), "7.37%");
}

#[test]
fn records_csv_has_one_row_per_record() {
    let records = Analysis::random(5, 2).records(TauPolicy::Relative(0.05));
    let csv = records_to_csv(&records);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "family,mask,order,I_full,I_avg,I_question,Jf,Jc,K,class,memorization_share"
    );
    assert_eq!(lines.count(), records.len());
}

proptest! {
    #[test]
    fn decomposition_telescopes(seed in any::<u64>(), n in 1usize..=5) {
        let records = Analysis::random(seed, n).records(TauPolicy::Relative(0.05));
        prop_assert_eq!(records.len(), 2 << n);
        prop_assert!(verify_additivity(&records) <= 1e-12);
        for r in &records {
            prop_assert_eq!(r.j_found, r.i_question);
            prop_assert_eq!(r.j_chaotic, r.i_full - r.i_avg);
            prop_assert_eq!(r.k_reason, r.i_avg - r.i_question);
        }
    }

    #[test]
    fn classes_partition_the_salient_set(seed in any::<u64>(), n in 1usize..=5, frac in 0.01f64..0.9) {
        let a = Analysis::random(seed, n);
        let (sa, so) = a.salient(TauPolicy::Relative(frac));
        let records = a.records(TauPolicy::Relative(frac));
        for r in &records {
            let set = if r.family == Family::And { &sa } else { &so };
            let labelled = r.class_label != PatternClass::Unclassified;
            prop_assert_eq!(labelled, set.contains(r.mask));
            prop_assert_eq!(r.salient, set.contains(r.mask));
        }
        let count = |c| records.iter().filter(|r| r.class_label == c).count();
        prop_assert_eq!(
            count(PatternClass::Enhanced) + count(PatternClass::Eliminated) + count(PatternClass::Reversed),
            sa.len() + so.len()
        );
    }

    #[test]
    fn scaling_preserves_classes_and_ratios(seed in any::<u64>(), c in 0.01f64..100.0) {
        let a = Analysis::random(seed, 4);
        let base = a.records(TauPolicy::Relative(0.1));
        let scaled = a.scaled(c).records(TauPolicy::Relative(0.1));
        for (x, y) in base.iter().zip(&scaled) {
            prop_assert_eq!(x.class_label, y.class_label);
            prop_assert!((y.k_reason - c * x.k_reason).abs() <= 1e-9 * (1.0 + c));
            prop_assert!((y.j_chaotic - c * x.j_chaotic).abs() <= 1e-9 * (1.0 + c));
        }
        let r1 = effect_ratios(&order_strengths(&base, true)).unwrap();
        let r2 = effect_ratios(&order_strengths(&scaled, true)).unwrap();
        prop_assert!((r1.rho_r - r2.rho_r).abs() < 1e-9);
        prop_assert!((r1.rho_c - r2.rho_c).abs() < 1e-9);
        prop_assert!(r1.rho_r >= 0.0 && r1.rho_c >= 0.0 && r1.rho_r + r1.rho_c <= 1.0 + 1e-12);
    }
}
