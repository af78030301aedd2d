use memreason_core::lattice::{
    adjoint_zeta, enumerate_masks, mobius_and, mobius_or, reconstruct_all, reflect, zeta_and,
    zeta_or, zeta_reconstruct, Family, InteractionVector, Mask, ValueTable,
};
use memreason_core::sparsifier::{split_components, ThetaVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_mobius_and(table: &[f64]) -> Vec<f64> {
    let len = table.len();
    let mut out = vec![0.0; len];
    for s in 0..len {
        for t in 0..len {
            if t & !s == 0 {
                let sign = if (s.count_ones() - t.count_ones()) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                out[s] += sign * table[t];
            }
        }
    }
    out
}

fn brute_mobius_or(table: &[f64]) -> Vec<f64> {
    let len = table.len();
    let full = len - 1;
    let mut out = vec![0.0; len];
    for s in 1..len {
        for t in 0..len {
            if t & !s == 0 {
                let sign = if (s.count_ones() - t.count_ones()) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                out[s] -= sign * table[full & !t];
            }
        }
    }
    out
}

/// Dense matrix of `table ↦ effects`, row = effect index.
fn dense_matrix(n: usize, family: Family) -> Vec<Vec<f64>> {
    let len = 1 << n;
    let mut rows = vec![vec![0.0; len]; len];
    for j in 1..len {
        let mut e = vec![0.0; len];
        e[j] = 1.0;
        let iv = match family {
            Family::And => mobius_and(&e).unwrap(),
            Family::Or => mobius_or(&e).unwrap(),
        };
        for (i, row) in rows.iter_mut().enumerate() {
            row[j] = iv.effects()[i];
        }
    }
    rows
}

fn random_table(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..1usize << n)
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    t[0] = 0.0;
    t
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn enumerate_sizes_and_order() {
    assert_eq!(enumerate_masks(10).unwrap().len(), 1024);
    for (i, m) in enumerate_masks(3).unwrap().iter().enumerate() {
        assert_eq!(m.index(), i);
    }
    let err = enumerate_masks(21).unwrap_err().to_string();
    assert!(err.contains("20"), "{err}");
    assert!(enumerate_masks(0).is_err());
}

#[test]
fn mobius_matches_double_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=5 {
        let table = random_table(&mut rng, n);
        let fast_and = mobius_and(&table).unwrap();
        let fast_or = mobius_or(&table).unwrap();
        for (a, b) in fast_and.effects().iter().zip(brute_mobius_and(&table)) {
            assert!(close(*a, b, 1e-12));
        }
        for (a, b) in fast_or.effects().iter().zip(brute_mobius_or(&table)) {
            assert!(close(*a, b, 1e-12));
        }
        // zeta undoes mobius
        let back = zeta_and(&fast_and).unwrap();
        for (a, b) in back.iter().zip(&table) {
            assert!(close(*a, *b, 1e-12));
        }
    }
}

#[test]
fn adjoint_matches_dense_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 3;
    for family in Family::BOTH {
        let mat = dense_matrix(n, family);
        let g: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = adjoint_zeta(&g, family).unwrap();
        // column 0 of the map is structurally zero (component tables vanish at ∅)
        for j in 1..8 {
            let expected: f64 = (0..8).map(|i| mat[i][j] * g[i]).sum();
            assert!(
                close(fast[j], expected, 1e-12),
                "{family:?} {j}: {} vs {expected}",
                fast[j]
            );
        }
    }
}

#[test]
fn reconstruction_matches_brute_force_on_random_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 4;
    let raw: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
    let table = ValueTable::new("r", raw.clone()).unwrap();
    let mut theta: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    theta[0] = 0.0;
    let split = split_components(&table, &ThetaVector::new(theta).unwrap(), None).unwrap();
    let (a, o) = (split.and_effects().unwrap(), split.or_effects().unwrap());
    for t in 0..16u32 {
        let mut v = raw[0];
        for s in 1..16u32 {
            if s & !t == 0 {
                v += a.effects()[s as usize];
            }
            if s & t != 0 {
                v += o.effects()[s as usize];
            }
        }
        assert!(close(v, raw[t as usize], 1e-10));
        let m = Mask::new(t, n).unwrap();
        assert!(close(
            zeta_reconstruct(&a, &o, raw[0], m).unwrap(),
            raw[t as usize],
            1e-10
        ));
    }
}

fn table_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=6).prop_flat_map(|n| {
        prop::collection::vec(-100.0f64..100.0, 1 << n).prop_map(move |mut v| {
            v[0] = 0.0;
            (n, v)
        })
    })
}

proptest! {
    #[test]
    fn inversion_round_trip((_, table) in table_strategy()) {
        let back = zeta_and(&mobius_and(&table).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&table) {
            prop_assert!(close(*a, *b, 1e-12));
        }
        let back = zeta_or(&mobius_or(&table).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&table) {
            prop_assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn reconstruction_is_independent_of_theta(
        (n, raw) in (1usize..=6).prop_flat_map(|n| (Just(n), prop::collection::vec(-10.0f64..10.0, 1 << n))),
        seed in any::<u64>(),
        width in 0.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta: Vec<f64> = (0..1usize << n).map(|_| rng.random_range(-1.0..=1.0) * width).collect();
        theta[0] = 0.0;
        let table = ValueTable::new("p", raw.clone()).unwrap();
        let split = split_components(&table, &ThetaVector::new(theta).unwrap(), None).unwrap();
        let (a, o) = (split.and_effects().unwrap(), split.or_effects().unwrap());
        let rebuilt = reconstruct_all(&a, &o, table.baseline()).unwrap();
        let scale = 1.0 + width;
        for (r, v) in rebuilt.iter().zip(&raw) {
            prop_assert!((r - v).abs() <= 1e-10 * scale * 10.0, "{} vs {}", r, v);
        }
    }

    #[test]
    fn component_identities((n, raw) in table_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta: Vec<f64> = (0..1usize << n).map(|_| rng.random_range(-5.0..5.0)).collect();
        theta[0] = 0.0;
        let table = ValueTable::new("p", raw).unwrap();
        let split = split_components(&table, &ThetaVector::new(theta).unwrap(), None).unwrap();
        let a = split.and_effects().unwrap();
        let o = split.or_effects().unwrap();
        let len = 1usize << n;
        for t in 0..len {
            let and_sum: f64 = (0..len).filter(|s| s & !t == 0).map(|s| a.effects()[s]).sum();
            let or_sum: f64 = (0..len).filter(|s| s & t != 0).map(|s| o.effects()[s]).sum();
            prop_assert!(close(and_sum, split.and_table[t], 1e-10));
            prop_assert!(close(or_sum, split.or_table[t], 1e-10));
        }
    }

    #[test]
    fn or_is_negated_and_of_reflection((_, table) in table_strategy()) {
        let or = mobius_or(&table).unwrap();
        let and = brute_mobius_and(&reflect(&table));
        for s in 1..table.len() {
            prop_assert!(close(or.effects()[s], -and[s], 1e-12), "{}: {} vs {}", s, or.effects()[s], -and[s]);
        }
    }

    #[test]
    fn mobius_is_linear(
        (x, y) in (1usize..=6).prop_flat_map(|n| (
            prop::collection::vec(-10.0f64..10.0, 1 << n),
            prop::collection::vec(-10.0f64..10.0, 1 << n),
        )),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let mut x = x;
        let mut y = y;
        x[0] = 0.0;
        y[0] = 0.0;
        let mix: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let lhs = mobius_and(&mix).unwrap();
        let (mx, my) = (mobius_and(&x).unwrap(), mobius_and(&y).unwrap());
        for s in 0..x.len() {
            let rhs = a * mx.effects()[s] + b * my.effects()[s];
            prop_assert!((lhs.effects()[s] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn document_round_trip_preserves_bits((_, table) in table_strategy()) {
        let iv = InteractionVector::new(Family::Or, mobius_or(&table).unwrap().effects().to_vec()).unwrap();
        let json = serde_json::to_string(&iv.to_document("v")).unwrap();
        let (_, back) = InteractionVector::from_document(serde_json::from_str(&json).unwrap()).unwrap();
        prop_assert_eq!(back, iv);
    }
}
