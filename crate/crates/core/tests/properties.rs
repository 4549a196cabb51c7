//! Property tests for the projection, link, and dataset invariants.

mod common;

use common::three_way_dims;
use glmfe::demean::{map_project, MapSettings};
use glmfe::link::{link_eval, LinkFamily, WeightMode};
use glmfe::panel::{build_dataset, DatasetOptions, RawObs};
use proptest::prelude::*;

fn base_rows() -> Vec<RawObs> {
    let mut raws = Vec::new();
    for i in 1..=3i64 {
        for j in 1..=3i64 {
            if i == j {
                continue;
            }
            for t in 1..=2i64 {
                raws.push(RawObs {
                    i,
                    j,
                    t,
                    y: f64::from((i + j + t) % 2 == 0),
                    x: vec![(i * 2 + j * 3 + t) as f64 * 0.1],
                });
            }
        }
    }
    raws
}

fn settings() -> MapSettings {
    MapSettings {
        tol: 1e-12,
        max_sweeps: 200_000,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_idempotent_orthogonal_linear(
        v in prop::collection::vec(-5.0f64..5.0, 12),
        u in prop::collection::vec(-5.0f64..5.0, 12),
        w in prop::collection::vec(0.05f64..4.0, 12),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let ds = build_dataset(&base_rows(), &DatasetOptions::new(three_way_dims())).unwrap();
        let mv = map_project(&ds, &v, &w, settings()).unwrap();

        // Idempotence.
        let mmv = map_project(&ds, &mv, &w, settings()).unwrap();
        for (x, y) in mv.iter().zip(&mmv) {
            prop_assert!((x - y).abs() < 1e-8);
        }

        // Ω-orthogonality within every level of every dimension.
        for d in 0..3 {
            let mut acc = vec![0.0; ds.fe().count(d)];
            for (r, &c) in ds.fe().codes(d).iter().enumerate() {
                acc[c as usize] += w[r] * mv[r];
            }
            for s in acc {
                prop_assert!(s.abs() < 1e-8, "orthogonality violated: {s}");
            }
        }

        // Linearity.
        let mu = map_project(&ds, &u, &w, settings()).unwrap();
        let combo: Vec<f64> = v.iter().zip(&u).map(|(x, y)| a * x + b * y).collect();
        let mcombo = map_project(&ds, &combo, &w, settings()).unwrap();
        for r in 0..12 {
            prop_assert!((mcombo[r] - (a * mv[r] + b * mu[r])).abs() < 1e-7);
        }
    }

    #[test]
    fn dataset_construction_is_permutation_invariant(seed in 0u64..1000) {
        let mut rows = base_rows();
        // Deterministic shuffle driven by the seed.
        let n = rows.len();
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        for k in (1..n).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            rows.swap(k, (state as usize) % (k + 1));
        }
        let shuffled = build_dataset(&rows, &DatasetOptions::new(three_way_dims())).unwrap();
        let canonical = build_dataset(&base_rows(), &DatasetOptions::new(three_way_dims())).unwrap();
        prop_assert_eq!(shuffled.rows(), canonical.rows());
        prop_assert_eq!(shuffled.y(), canonical.y());
        prop_assert_eq!(shuffled.x(), canonical.x());
        for d in 0..3 {
            prop_assert_eq!(shuffled.fe().count(d), canonical.fe().count(d));
            prop_assert_eq!(shuffled.fe().codes(d), canonical.fe().codes(d));
        }
    }

    #[test]
    fn link_identities_hold_for_all_eta(eta in -8.0f64..8.0, y in prop::bool::ANY) {
        let yv = f64::from(y);
        for link in [LinkFamily::Logit, LinkFamily::Probit] {
            let cols = link_eval(link, &[eta], &[yv], WeightMode::Table);
            // Probabilities and slopes stay inside their ranges.
            prop_assert!(cols.f[0] > 0.0 && cols.f[0] < 1.0);
            prop_assert!(cols.df[0] > 0.0);
            // ν·∂F recovers the residual.
            prop_assert!((cols.nu[0] * cols.df[0] - (yv - cols.f[0])).abs() < 1e-12);
            // ω·ν equals the score for the expected-information weights.
            prop_assert!((cols.omega[0] * cols.nu[0] - cols.dl[0]).abs() < 1e-12);
        }
        // Exact curvature identities.
        let logit = LinkFamily::Logit;
        prop_assert_eq!(
            logit.density_deriv(eta),
            logit.density(eta) * (1.0 - 2.0 * logit.cdf(eta))
        );
        let probit = LinkFamily::Probit;
        prop_assert_eq!(probit.density_deriv(eta), -eta * probit.density(eta));
    }
}
