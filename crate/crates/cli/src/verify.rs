//! `mpet verify`: oracle agreement, parameter-matrix orderings and
//! convergence audits on small problems.

use std::process::ExitCode;

use mpet_core::config::{parse_config, RunConfig};
use mpet_core::model::{rescale, LMode};
use mpet_core::runner::{self, Problem};
use mpet_core::verify::{check_coupling_orderings, compare_with_oracle, dense_oracle, relative_asymmetry};

const ONE_NETWORK: &str = "benchmark = custom\nlambda = 2\nmu = 1\n[network 1]\nK = 1\nc_p = 0.1\nalpha = 1\npressure = 1\n";

struct Check {
    name: String,
    ok: bool,
    detail: String,
}

fn oracle_check(text: &str, n: usize) -> Check {
    let name = format!("oracle {} N={n}", text.lines().next().unwrap_or(""));
    let outcome = (|| -> mpet_core::Result<(bool, String)> {
        let mut cfg: RunConfig = parse_config(text)?;
        cfg.n = n;
        let prob = Problem::new(&cfg)?;
        let dense = dense_oracle(&prob.mesh, &cfg.model_params()?, cfg.eta, &prob.bc)?;
        let worst = compare_with_oracle(&prob.sys, &dense).into_iter().map(|(_, e)| e).fold(0.0, f64::max);
        let asym = relative_asymmetry(prob.sys.monolithic());
        Ok((worst <= 1e-12 && asym <= 1e-13, format!("max block error {worst:.1e}, asymmetry {asym:.1e}")))
    })();
    match outcome {
        Ok((ok, detail)) => Check { name, ok, detail },
        Err(e) => Check { name, ok: false, detail: e.to_string() },
    }
}

fn ordering_check(text: &str, samples: usize) -> Check {
    let name = format!("orderings {}", text.lines().next().unwrap_or("defaults"));
    let outcome = (|| -> mpet_core::Result<(bool, String)> {
        let cfg = parse_config(text)?;
        let m = rescale(&cfg.model_params()?, LMode::Paper, cfg.eta)?;
        let r = check_coupling_orderings(&m, samples, 11)?;
        Ok((r.passed(), format!("{} violations in {} samples", r.violations, r.samples)))
    })();
    match outcome {
        Ok((ok, detail)) => Check { name, ok, detail },
        Err(e) => Check { name, ok: false, detail: e.to_string() },
    }
}

fn audit_check(text: &str) -> Check {
    let name = format!("audit {}", text.replace('\n', " ").trim());
    match parse_config(&format!("{text}\naudit = true\n")).and_then(|c| runner::run(&c)) {
        Ok(rep) => {
            let a = rep.audit.expect("audit requested");
            let slack = a.energy_max_slack.unwrap_or(0.0);
            let converged = rep.solves.iter().all(|s| s.converged);
            let energy_ok = slack <= 1e-8 || !a.l_admissible;
            let ok = converged && a.contraction_violations == 0 && energy_ok && a.conservation <= 1e-10;
            Check {
                name,
                ok,
                detail: format!(
                    "max ratio {:.3} vs bound {:.3}, energy slack {slack:.1e}{}, conservation {:.1e}",
                    a.max_ratio,
                    a.rate_bound,
                    if a.l_admissible { "" } else { " (L below threshold)" },
                    a.conservation
                ),
            }
        }
        Err(e) => Check { name, ok: false, detail: e.to_string() },
    }
}

fn run_checks(full: bool) -> Vec<Check> {
    let mut checks = Vec::new();
    for text in [ONE_NETWORK, "benchmark = barenblatt\n", "benchmark = mpet4\n"] {
        for n in [1, 2] {
            checks.push(oracle_check(text, n));
        }
    }
    let samples = if full { 1000 } else { 200 };
    for text in [
        "units = si\n",
        "units = paper_raw\n",
        "benchmark = mpet4\n",
        "beta = 0\n[network 1]\nc_p = 0\n[network 2]\nc_p = 0\n",
    ] {
        checks.push(ordering_check(text, samples));
    }
    let mesh = if full { 16 } else { 4 };
    for extra in ["", "units = paper_raw", "lambda_scale = 100", "lambda_scale = 0.01", "benchmark = mpet4"] {
        checks.push(audit_check(&format!("N = {mesh}\n{extra}")));
    }
    checks
}

pub fn run(full: bool) -> ExitCode {
    let checks = run_checks(full);
    for c in &checks {
        println!("{} {:<48} {}", if c.ok { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if checks.iter().all(|c| c.ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(super::EXIT_CELL_FAILURE)
    }
}
