use mpet_core::config::parse_config;
use mpet_core::krylov::{minres_mpet, BlockPreconditioner};
use mpet_core::report::SolverKind;
use mpet_core::runner::{run, Problem};
use mpet_core::sparse::dot;
use mpet_core::splitsolve::{FixedStress, FixedStressOptions};
use mpet_core::sweep::{grid, run_table_sweep, TableId};
use mpet_core::verify::{compare_with_oracle, conservation_residual, dense_oracle, reference_solve};
use proptest::prelude::*;

fn b_distance(text: &str) -> f64 {
    let cfg = parse_config(text).unwrap();
    let prob = Problem::new(&cfg).unwrap();
    let pc = BlockPreconditioner::from_model(&prob.sys, &prob.model).unwrap();
    let (xr, _) = reference_solve(&prob.sys, &pc).unwrap();
    let opts = FixedStressOptions { reduction: 1e10, max_iter: 500, reference: None };
    let (xf, rep) = FixedStress::new(&prob.sys, &prob.model).unwrap().solve(&pc, &opts).unwrap();
    assert!(rep.converged);
    let d: Vec<f64> = xf.data.iter().zip(&xr.data).map(|(a, b)| a - b).collect();
    (dot(&d, &pc.multiply(&d).unwrap()) / dot(&xr.data, &pc.multiply(&xr.data).unwrap())).sqrt()
}

#[test]
fn fixed_stress_reaches_the_direct_solution() {
    assert!(b_distance("N = 4\n") < 1e-7);
    assert!(b_distance("benchmark = mpet4\nN = 4\n") < 1e-7);
}

#[test]
fn minres_reaches_the_direct_solution() {
    let cfg = parse_config("benchmark = mpet4\nN = 4\n").unwrap();
    let prob = Problem::new(&cfg).unwrap();
    let pc = BlockPreconditioner::from_model(&prob.sys, &prob.model).unwrap();
    let (xr, _) = reference_solve(&prob.sys, &pc).unwrap();
    let (xm, rep) = minres_mpet(&prob.sys, &pc, 1e10, 500).unwrap();
    assert!(rep.converged);
    let err: f64 = xm.data.iter().zip(&xr.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let size: f64 = xr.data.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(err / size < 1e-6, "relative error {}", err / size);
    assert!(conservation_residual(&prob.sys, &xr) < 1e-10);
}

#[test]
fn coarse_sweep_converges_everywhere() {
    let base = parse_config("max_iter = 300\n").unwrap();
    let sweep = run_table_sweep(TableId::T4, &base, &[4]);
    assert_eq!(sweep.results.len(), grid(TableId::T4, &[4]).len());
    assert!(!sweep.any_failed());
    for r in &sweep.results {
        let fs = r.solve(SolverKind::FixedStress).unwrap().iterations;
        let mr = r.solve(SolverKind::Minres).unwrap().iterations;
        assert!(fs <= mr, "fixed-stress {fs} > MinRes {mr} at {:?}", r.cell);
    }
    let mut csv = Vec::new();
    sweep.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * sweep.results.len());
}

#[test]
fn audit_holds_with_unnormalized_units() {
    let rep = run(&parse_config("N = 4\nnormalization = none\nunits = paper_raw\naudit = true\n").unwrap()).unwrap();
    let a = rep.audit.unwrap();
    assert_eq!(a.contraction_violations, 0);
    assert!(a.max_ratio <= a.rate_bound);
}

#[test]
fn unnormalized_form_matches_oracle() {
    for text in ["normalization = none\nN = 2\n", "normalization = none\nbenchmark = mpet4\nN = 1\n"] {
        let cfg = parse_config(text).unwrap();
        let prob = Problem::new(&cfg).unwrap();
        let dense = dense_oracle(&prob.mesh, &cfg.model_params().unwrap(), cfg.eta, &prob.bc).unwrap();
        for (block, err) in compare_with_oracle(&prob.sys, &dense) {
            assert!(err <= 1e-12, "{block}: {err:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // The split iterates converge to the monolithic solution for any
    // admissible coefficient scaling.
    #[test]
    fn splitting_is_consistent(k1 in -2i32..=2, k2 in -2i32..=6, lam in 0i32..=4, tau in -3i32..=3) {
        let text = format!(
            "N = 3\nK1_scale = 1e{k1}\nK2_scale = 1e{k2}\nlambda_scale = 1e{lam}\ntau = 1e{tau}\n"
        );
        prop_assert!(b_distance(&text) < 1e-6);
    }
}
