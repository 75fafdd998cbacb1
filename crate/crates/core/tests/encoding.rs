use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpolicy_core::generate::erdos_renyi;
use qpolicy_core::oracle::{brute_force_qubo_min, exact_mis};
use qpolicy_core::problem::{
    cvrp_gap, ising_to_qubo, is_independent_set, mis_gap, mis_to_qubo, qubo_to_ising, GraphInstance, QuboProblem,
};
use qpolicy_core::Bitstring;

mod common;

/// Every maximum independent set of `g`, by enumeration.
fn all_maximum_sets(g: &GraphInstance) -> Vec<Bitstring> {
    let n = g.n();
    let sets: Vec<Bitstring> = (0..1u64 << n)
        .map(|k| Bitstring::from_index(k, n))
        .filter(|b| is_independent_set(g, b))
        .collect();
    let best = sets.iter().map(Bitstring::count_ones).max().unwrap_or(0);
    let mut out: Vec<Bitstring> = sets.into_iter().filter(|b| b.count_ones() == best).collect();
    out.sort();
    out
}

#[test]
fn mis_qubo_minimizers_are_the_maximum_independent_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..50u64 {
        let n = 4 + (k as usize % 9);
        let p = [0.2, 0.35, 0.5][k as usize % 3];
        let g = erdos_renyi("er", n, p, rand::Rng::gen(&mut rng));
        let q = mis_to_qubo(&g, 2.0).unwrap();
        let (min, mut argmins) = brute_force_qubo_min(&q).unwrap();
        argmins.sort();
        let (size, witness) = exact_mis(&g).unwrap();
        assert_eq!(argmins, all_maximum_sets(&g), "graph {k}");
        assert_eq!(min, -(size as f64));
        assert!(argmins.contains(&witness));
    }
}

#[test]
fn reference_gap_values() {
    assert!((cvrp_gap(287.0, 247.0).unwrap().value - 0.139373).abs() < 1e-6);
    assert!((cvrp_gap(311.0, 247.0).unwrap().value - 0.205788).abs() < 1e-6);
    let g = GraphInstance::path(3);
    assert_eq!(mis_gap(&g, &"101".parse().unwrap(), 2).unwrap().value, 0.0);
    assert_eq!(mis_gap(&g, &"110".parse().unwrap(), 2).unwrap().value, 1.0);
}

fn arb_qubo() -> impl Strategy<Value = QuboProblem> {
    (1usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec((0..n, 0..n, -3.0f64..3.0), 0..12),
            -2.0f64..2.0,
        )
            .prop_map(move |(lin, quad, off)| {
                let mut q = QuboProblem::new(n);
                for (i, a) in lin.into_iter().enumerate() {
                    q.add_linear(i, a);
                }
                for (i, j, b) in quad {
                    q.add_quadratic(i, j, b);
                }
                q.add_offset(off);
                q
            })
    })
}

proptest! {
    #[test]
    fn ising_and_qubo_agree_on_every_assignment(q in arb_qubo()) {
        let h = qubo_to_ising(&q);
        let back = ising_to_qubo(&h);
        for k in 0..1u64 << q.n() {
            let b = Bitstring::from_index(k, q.n());
            let e = q.evaluate(&b).unwrap();
            prop_assert!((h.energy_of_bits(&b) - e).abs() < 1e-9);
            prop_assert!((back.evaluate(&b).unwrap() - e).abs() < 1e-9);
        }
    }

    #[test]
    fn gap_is_bounded_and_infeasible_scores_one(seed in any::<u64>(), mask in any::<u64>()) {
        let g = erdos_renyi("er", 8, 0.3, seed);
        let (opt, _) = exact_mis(&g).unwrap();
        let b = Bitstring::from_index(mask & 0xff, 8);
        let s = mis_gap(&g, &b, opt).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.value));
        if !is_independent_set(&g, &b) {
            prop_assert_eq!(s.value, 1.0);
            prop_assert!(!s.feasible);
        }
    }

    #[test]
    fn cvrp_gap_is_monotone(reference in 1.0f64..500.0, extra in 0.0f64..500.0, more in 0.0f64..100.0) {
        let a = cvrp_gap(reference + extra, reference).unwrap().value;
        let b = cvrp_gap(reference + extra + more, reference).unwrap().value;
        prop_assert!((0.0..1.0).contains(&a));
        prop_assert!(b >= a - 1e-12);
    }
}
