use std::collections::HashSet;

use cpm_dd_web::{alpha_scan, partition_roles, solve};

#[test]
fn roles_cover_every_category() {
    let v = partition_roles(0.1, 8, 4, 0, false).unwrap();
    assert_eq!(v.nodes.len(), v.n_active + v.n_ghost);
    let roles: HashSet<&str> = v.nodes.iter().map(|n| n.role).collect();
    for r in ["disjoint", "overlap", "ghost", "boundary", "outside"] {
        assert!(roles.contains(r), "role {r} missing");
    }
    assert_eq!(v.part_sizes.iter().sum::<usize>(), v.n_active);
    assert!(v.balance <= 1.2);
}

#[test]
fn solve_converges_to_exact_solution() {
    for mode in ["stationary", "gmres-preconditioned", "block-jacobi-gmres"] {
        let v = solve(0.1, 6, 3, true, 4.0, mode).unwrap();
        assert!(v.converged, "{mode}");
        assert_eq!(v.residuals.len(), v.iterations + 1);
        assert!(v.max_error < 1e-2, "{mode}: {}", v.max_error);
        assert!(v.angle.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn scan_reports_each_alpha() {
    let v = alpha_scan(0.1, 8, 4, &[1.0, 4.0, 16.0]).unwrap();
    assert_eq!(v.points.len(), 3);
    assert!(v.ras_iterations > 0);
    assert_eq!(v.points.iter().map(|p| p.alpha).collect::<Vec<_>>(), [1.0, 4.0, 16.0]);
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(solve(0.5, 4, 2, false, 1.0, "stationary").is_err());
    assert!(solve(0.1, 4, 2, true, 0.0, "stationary").is_err());
    assert!(solve(0.1, 4, 2, false, 1.0, "jacobi").is_err());
    assert!(partition_roles(0.1, 4, 2, 4, false).is_err());
    assert!(alpha_scan(0.1, 4, 2, &[]).is_err());
    assert!(alpha_scan(0.1, 4, 2, &[-1.0]).is_err());
}
