//! Shared fixtures for the criterion benches.

use mpet_core::config::{parse_config, RunConfig};
use mpet_core::krylov::BlockPreconditioner;
use mpet_core::runner::Problem;

/// Default two-network problem on an `n x n` mesh.
pub fn barenblatt(n: usize) -> (RunConfig, Problem) {
    config_problem(&format!("N = {n}\n"))
}

/// Default four-network problem on an `n x n` mesh.
pub fn mpet4(n: usize) -> (RunConfig, Problem) {
    config_problem(&format!("benchmark = mpet4\nN = {n}\n"))
}

fn config_problem(text: &str) -> (RunConfig, Problem) {
    let cfg = parse_config(text).expect("fixture configuration is valid");
    let prob = Problem::new(&cfg).expect("fixture assembles");
    (cfg, prob)
}

pub fn preconditioner(prob: &Problem) -> BlockPreconditioner {
    BlockPreconditioner::from_model(&prob.sys, &prob.model).expect("preconditioner factors")
}
