use infoscreen_core::costs::{exp_quality_cost, QualityCost};
use infoscreen_core::dist::Grid;
use infoscreen_core::mechanism::{
    buyer_value, canonicalize, envelope_transfers, pointwise_profit, transfer, validate_ic_ir, Allocation, Mechanism,
};
use proptest::prelude::*;

fn kappas() -> impl Strategy<Value = QualityCost> {
    prop_oneof![Just(exp_quality_cost(1.0)), (0.5f64..3.0).prop_map(|s| QualityCost::Quadratic { slope: s, q_bar: 2.0 * s })]
}

/// Random increasing cells on a random grid in `[0, 1]`, with node values inside their
/// one-sided limits.
fn allocations(q_bar: f64) -> impl Strategy<Value = Allocation> {
    (3usize..30).prop_flat_map(move |n| {
        (
            prop::collection::vec(0.01f64..1.0, n - 1),
            prop::collection::vec(0.0f64..1.0, n - 1),
            prop::collection::vec(0.0f64..=1.0, n),
        )
            .prop_map(move |(widths, steps, mix)| {
                let total: f64 = widths.iter().sum();
                let mut nodes = vec![0.0];
                for w in &widths {
                    nodes.push(nodes.last().unwrap() + w / total);
                }
                *nodes.last_mut().unwrap() = 1.0;
                let grid = Grid::new(nodes).unwrap();
                let scale: f64 = steps.iter().sum::<f64>().max(1e-9);
                let mut cells = Vec::new();
                let mut acc = 0.0;
                for s in &steps {
                    acc += s / scale * q_bar * 0.9;
                    cells.push(acc.min(q_bar));
                }
                let points = (0..n)
                    .map(|k| {
                        let lo = if k == 0 { 0.0 } else { cells[k - 1] };
                        let hi = if k == n - 1 { q_bar } else { cells[k] };
                        lo + mix[k] * (hi - lo)
                    })
                    .collect();
                Allocation::new(grid, cells, points, q_bar).unwrap()
            })
    })
}

fn instance() -> impl Strategy<Value = (Allocation, QualityCost, f64)> {
    kappas().prop_flat_map(|k| (allocations(k.q_bar()), Just(k), 0.0f64..0.5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn envelope_transfers_are_incentive_compatible((alloc, _kappa, u) in instance()) {
        let grid = alloc.grid().clone();
        let node_q: Vec<f64> = alloc.points().to_vec();
        let t = envelope_transfers(&grid, &node_q, u);
        prop_assert!(validate_ic_ir(&grid, &node_q, &t).passes(1e-10));
        let mech = Mechanism::new(alloc, u).unwrap();
        let report = validate_ic_ir(&grid, mech.allocation.points(), &mech.transfers());
        prop_assert!(report.passes(1e-10), "{report:?}");
    }

    #[test]
    fn profit_is_transfer_minus_cost((alloc, kappa, u) in instance()) {
        let mech = Mechanism::new(alloc, u).unwrap();
        for k in 0..mech.grid().len() {
            let q = mech.allocation.at(k);
            prop_assert_eq!(transfer(&mech, k) - kappa.kappa(q), pointwise_profit(&mech, &kappa, k));
        }
    }

    #[test]
    fn buyer_value_is_convex((alloc, _kappa, u) in instance()) {
        let mech = Mechanism::new(alloc, u).unwrap();
        let grid = mech.grid().clone();
        let slopes: Vec<f64> = (0..grid.len() - 1)
            .map(|k| (buyer_value(&mech, k + 1) - buyer_value(&mech, k)) / grid.width(k))
            .collect();
        for w in slopes.windows(2) {
            prop_assert!(w[1] - w[0] >= -1e-12);
        }
    }

    #[test]
    fn canonicalize_is_idempotent_and_keeps_values((alloc, kappa, u) in instance()) {
        let once = canonicalize(&alloc, &kappa).unwrap();
        let twice = canonicalize(&once, &kappa).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(Mechanism::new(once, u).unwrap().values(), Mechanism::new(alloc, u).unwrap().values());
    }
}
