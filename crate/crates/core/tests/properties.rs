use proptest::prelude::*;

use cpm_dd::band::build_band;
use cpm_dd::linalg::{lu_factor, CsrMatrix};
use cpm_dd::operators::{interp_weights_1d, GlobalOperators};
use cpm_dd::partition::{build_graph, edge_cut, partition, PartitionOptions};
use cpm_dd::subdomain::{build_subdomains, grow_subdomain, TransmissionCondition};
use cpm_dd::Surface;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_weights_reproduce_polynomials(p in 1usize..=6, t in 0.0f64..1.0) {
        let w = interp_weights_1d(p, t + (p as f64 - 1.0) / 2.0);
        let x0 = t + (p as f64 - 1.0) / 2.0;
        for k in 0..=p {
            let v: f64 = w.iter().enumerate().map(|(j, wj)| wj * (j as f64).powi(k as i32)).sum();
            prop_assert!((v - x0.powi(k as i32)).abs() < 1e-9 * (1.0 + x0.powi(k as i32).abs()));
        }
    }

    #[test]
    fn sparse_matvec_matches_dense(
        entries in prop::collection::vec((0usize..7, 0usize..5, -10.0f64..10.0), 0..30),
        x in prop::collection::vec(-5.0f64..5.0, 5),
    ) {
        let a = CsrMatrix::from_triplets(7, 5, &entries);
        let mut dense = vec![vec![0.0; 5]; 7];
        for &(r, c, v) in &entries {
            dense[r][c] += v;
        }
        let y = a.spmv(&x).unwrap();
        for r in 0..7 {
            let expect: f64 = dense[r].iter().zip(&x).map(|(p, q)| p * q).sum();
            prop_assert!((y[r] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn lu_solves_diagonally_dominant(
        n in 1usize..25,
        off in prop::collection::vec((0usize..25, 0usize..25, -1.0f64..1.0), 0..60),
        seed in 0u64..1000,
    ) {
        let mut t: Vec<(usize, usize, f64)> = off.into_iter().filter(|&(r, c, _)| r < n && c < n && r != c).collect();
        let mut row_abs = vec![0.0; n];
        for &(r, _, v) in &t {
            row_abs[r] += f64::abs(v);
        }
        for (i, s) in row_abs.iter().enumerate() {
            t.push((i, i, s + 1.0 + (seed % 7) as f64));
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 31 + seed) % 17) as f64 - 8.0).collect();
        let y = lu_factor(&a).unwrap().solve(&a.spmv(&x).unwrap());
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-9 * (1.0 + p.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn partitions_are_balanced_and_deterministic(
        dx in 0.06f64..0.15,
        n_parts in 1usize..12,
        seed in 0u64..50,
    ) {
        let s = Surface::circle([0.0, 0.0], 1.0).unwrap();
        let band = build_band(&s, dx, 2, &s.default_seeds()).unwrap();
        let g = build_graph(&band);
        let opts = PartitionOptions { seed, ..PartitionOptions::default() };
        let a = partition(&g, n_parts, &opts).unwrap();
        prop_assert_eq!(a.labels().len(), band.n_active());
        prop_assert!(a.part_sizes().iter().all(|&s| s > 0));
        prop_assert!(a.balance() <= 1.2 + 1e-12);
        prop_assert!(a.components_per_part(&g).iter().all(|&c| c == 1));
        let b = partition(&g, n_parts, &opts).unwrap();
        prop_assert_eq!(a.labels(), b.labels());
        prop_assert_eq!(edge_cut(&g, a.labels()), edge_cut(&g, b.labels()));
    }

    #[test]
    fn robin_scales_lie_in_unit_interval(alpha in 1e-3f64..1e3, n_overlap in 2usize..5) {
        let s = Surface::circle([0.0, 0.0], 1.0).unwrap();
        let band = build_band(&s, 0.1, 2, &s.default_seeds()).unwrap();
        let part = partition(&build_graph(&band), 6, &PartitionOptions::default()).unwrap();
        for j in 0..6 {
            let sets = grow_subdomain(&band, &part, j, n_overlap, &TransmissionCondition::Robin { alpha }).unwrap();
            for b in &sets.bc {
                prop_assert!(b.robin_scale > 0.0 && b.robin_scale <= 1.0);
            }
        }
    }

    #[test]
    fn one_schwarz_sweep_is_exact_for_one_part(c in 0.1f64..10.0) {
        let s = Surface::circle([0.0, 0.0], 1.0).unwrap();
        let band = build_band(&s, 0.1, 2, &s.default_seeds()).unwrap();
        let ops = GlobalOperators::assemble(&band, c).unwrap();
        let part = partition(&build_graph(&band), 1, &PartitionOptions::default()).unwrap();
        let subs = build_subdomains(&band, &ops, &part, 2, TransmissionCondition::Dirichlet).unwrap();
        let f: Vec<f64> = (0..band.n_active()).map(|i| (i as f64 * 0.37).sin()).collect();
        let local = subs[0].local_solve(&subs[0].local_rhs(&f)).unwrap();
        let mut u = vec![0.0; band.n_active()];
        subs[0].scatter_owned(&local, &mut u);
        let r = ops.helmholtz.spmv(&u).unwrap();
        let err = r.iter().zip(&f).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9);
    }
}
