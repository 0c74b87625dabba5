//! Run configuration: a line-based `key = value` format with `[network i]`
//! sections for per-network values.
//!
//! Top-level keys:
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `benchmark` | `barenblatt`, `mpet4`, `custom` | `barenblatt` |
//! | `N` | subdivisions per side, 1..=256 | 16 |
//! | `solver` | `fixed_stress`, `minres`, `both` | `both` |
//! | `units` | `si`, `paper_raw` | `si` |
//! | `normalization` | `shear`, `none` | `shear` |
//! | `L` | `paper`, `theory` (needs `cK2`), or a number | `paper` |
//! | `cK2` | positive number | unset |
//! | `eta`, `tau` | positive numbers | 10, 1 |
//! | `reduction` | residual reduction factor, > 1 | 1e8 |
//! | `max_iter` | outer iteration cap | 500 |
//! | `lambda`, `mu` | base elastic moduli (required for `custom`) | preset |
//! | `lambda_scale`, `K1_scale` .. `K4_scale` | positive factors | 1 |
//! | `beta` | two-network transfer coefficient | 5e-10 |
//! | `audit` | `true`/`false`: reference solve plus contraction and energy audits | `false` |
//! | `output` | JSON-lines report path | unset |
//!
//! Section keys (`[network i]`, 1-based): `K`, `K_scale`, `c_p`, `alpha`,
//! `pressure` and `beta_j` for the transfer coefficient to network `j`.
//! `#` starts a comment.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{DEFAULT_MAX_ITER, DEFAULT_REDUCTION};
use crate::model::{
    barenblatt_params, boundary_pressures, mpet4_params, BenchmarkId, LMode, Normalization, PhysicalParams,
    UnitMode, BARENBLATT_BETAS,
};

pub const MAX_SUBDIVISIONS: usize = 256;
pub const MAX_NETWORKS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    FixedStress,
    Minres,
    Both,
}

impl SolverChoice {
    pub fn fixed_stress(self) -> bool {
        matches!(self, SolverChoice::FixedStress | SolverChoice::Both)
    }

    pub fn minres(self) -> bool {
        matches!(self, SolverChoice::Minres | SolverChoice::Both)
    }
}

/// Per-network overrides from a `[network i]` section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkOverride {
    pub k: Option<f64>,
    pub k_scale: Option<f64>,
    pub c_p: Option<f64>,
    pub alpha: Option<f64>,
    pub pressure: Option<f64>,
    /// `(j, beta_ij)` with `j` zero-based.
    pub beta: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub benchmark: BenchmarkId,
    pub n: usize,
    pub solver: SolverChoice,
    pub units: UnitMode,
    pub normalization: Normalization,
    pub l_mode: LMode,
    pub eta: f64,
    pub tau: f64,
    pub reduction: f64,
    pub max_iter: usize,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub lambda_scale: f64,
    /// `K{i}_scale` keys; missing entries are 1.
    pub k_scale: Vec<f64>,
    pub beta: f64,
    pub audit: bool,
    pub output: Option<PathBuf>,
    pub networks: Vec<NetworkOverride>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmark: BenchmarkId::Barenblatt,
            n: 16,
            solver: SolverChoice::Both,
            units: UnitMode::Si,
            normalization: Normalization::Shear,
            l_mode: LMode::Paper,
            eta: 10.0,
            tau: 1.0,
            reduction: DEFAULT_REDUCTION,
            max_iter: DEFAULT_MAX_ITER,
            lambda: None,
            mu: None,
            lambda_scale: 1.0,
            k_scale: Vec::new(),
            beta: BARENBLATT_BETAS[0],
            audit: false,
            output: None,
            networks: Vec::new(),
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

fn number(line: usize, key: &str, value: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| err(line, format!("`{key}` expects a number, got `{value}`")))?;
    if !v.is_finite() {
        return Err(err(line, format!("`{key}` must be finite")));
    }
    Ok(v)
}

fn positive(line: usize, key: &str, value: &str) -> Result<f64> {
    let v = number(line, key, value)?;
    if v <= 0.0 {
        return Err(err(line, format!("`{key}` must be positive, got {v}")));
    }
    Ok(v)
}

fn nonnegative(line: usize, key: &str, value: &str) -> Result<f64> {
    let v = number(line, key, value)?;
    if v < 0.0 {
        return Err(err(line, format!("`{key}` must be nonnegative, got {v}")));
    }
    Ok(v)
}

fn count(line: usize, key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| err(line, format!("`{key}` expects a nonnegative integer, got `{value}`")))
}

/// Index `i` in `prefix{i}suffix`, one-based in the text.
fn indexed(key: &str, prefix: &str, suffix: &str) -> Option<usize> {
    let i: usize = key.strip_prefix(prefix)?.strip_suffix(suffix)?.parse().ok()?;
    (1..=MAX_NETWORKS).contains(&i).then(|| i - 1)
}

/// Parses a configuration, filling defaults. Errors carry the one-based line
/// number; errors found after reading the whole text use line 0.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section: Option<usize> = None;
    let mut ck2_value: Option<f64> = None;
    let mut l_theory_line = None;
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(head) = line.strip_prefix('[') {
            let head = head
                .strip_suffix(']')
                .ok_or_else(|| err(ln, format!("unterminated section header `{line}`")))?;
            let mut parts = head.split_whitespace();
            let i = match (parts.next(), parts.next(), parts.next()) {
                (Some("network"), Some(i), None) => i
                    .parse::<usize>()
                    .ok()
                    .filter(|i| (1..=MAX_NETWORKS).contains(i))
                    .ok_or_else(|| err(ln, format!("network index must lie in 1..={MAX_NETWORKS}, got `{i}`")))?,
                _ => return Err(err(ln, format!("unknown section `[{head}]`"))),
            };
            if cfg.networks.len() < i {
                cfg.networks.resize(i, NetworkOverride::default());
            }
            section = Some(i - 1);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(ln, format!("expected `key = value`, got `{line}`")))?;
        if value.is_empty() {
            return Err(err(ln, format!("`{key}` has no value")));
        }
        if let Some(i) = section {
            let net = &mut cfg.networks[i];
            match key {
                "K" => net.k = Some(positive(ln, key, value)?),
                "K_scale" => net.k_scale = Some(positive(ln, key, value)?),
                "c_p" => net.c_p = Some(nonnegative(ln, key, value)?),
                "alpha" => {
                    let a = positive(ln, key, value)?;
                    if a > 1.0 {
                        return Err(err(ln, format!("`alpha` must lie in (0, 1], got {a}")));
                    }
                    net.alpha = Some(a);
                }
                "pressure" => net.pressure = Some(number(ln, key, value)?),
                _ => match indexed(key, "beta_", "") {
                    Some(j) if j == i => return Err(err(ln, "a network has no transfer to itself")),
                    Some(j) => {
                        let b = nonnegative(ln, key, value)?;
                        net.beta.retain(|(k, _)| *k != j);
                        net.beta.push((j, b));
                    }
                    None => return Err(err(ln, format!("unknown key `{key}` in [network {}]", i + 1))),
                },
            }
            continue;
        }
        match key {
            "benchmark" => {
                cfg.benchmark = match value {
                    "barenblatt" => BenchmarkId::Barenblatt,
                    "mpet4" => BenchmarkId::Mpet4,
                    "custom" => BenchmarkId::Custom,
                    _ => return Err(err(ln, format!("unknown benchmark `{value}`"))),
                }
            }
            "N" => {
                let n = count(ln, key, value)?;
                if !(1..=MAX_SUBDIVISIONS).contains(&n) {
                    return Err(err(ln, format!("`N` must lie in 1..={MAX_SUBDIVISIONS}, got {n}")));
                }
                cfg.n = n;
            }
            "solver" => {
                cfg.solver = match value {
                    "fixed_stress" => SolverChoice::FixedStress,
                    "minres" => SolverChoice::Minres,
                    "both" => SolverChoice::Both,
                    _ => return Err(err(ln, format!("unknown solver `{value}`"))),
                }
            }
            "units" => cfg.units = parse_units(value).ok_or_else(|| err(ln, format!("unknown units `{value}`")))?,
            "normalization" => {
                cfg.normalization = match value {
                    "shear" => Normalization::Shear,
                    "none" => Normalization::None,
                    _ => return Err(err(ln, format!("unknown normalization `{value}`"))),
                }
            }
            "L" => match value {
                "paper" => cfg.l_mode = LMode::Paper,
                "theory" => l_theory_line = Some(ln),
                _ => cfg.l_mode = LMode::Explicit(nonnegative(ln, key, value)?),
            },
            "cK2" => ck2_value = Some(positive(ln, key, value)?),
            "eta" => cfg.eta = positive(ln, key, value)?,
            "tau" => cfg.tau = positive(ln, key, value)?,
            "reduction" => {
                let r = number(ln, key, value)?;
                if r <= 1.0 {
                    return Err(err(ln, format!("`reduction` must exceed 1, got {r}")));
                }
                cfg.reduction = r;
            }
            "max_iter" => {
                cfg.max_iter = count(ln, key, value)?;
                if cfg.max_iter == 0 {
                    return Err(err(ln, "`max_iter` must be at least 1"));
                }
            }
            "lambda" => cfg.lambda = Some(positive(ln, key, value)?),
            "mu" => cfg.mu = Some(positive(ln, key, value)?),
            "lambda_scale" => cfg.lambda_scale = positive(ln, key, value)?,
            "beta" => cfg.beta = nonnegative(ln, key, value)?,
            "audit" => {
                cfg.audit = value
                    .parse()
                    .map_err(|_| err(ln, format!("`audit` expects true or false, got `{value}`")))?
            }
            "output" => cfg.output = Some(PathBuf::from(value)),
            _ => match indexed(key, "K", "_scale") {
                Some(i) => {
                    if cfg.k_scale.len() <= i {
                        cfg.k_scale.resize(i + 1, 1.0);
                    }
                    cfg.k_scale[i] = positive(ln, key, value)?;
                }
                None => return Err(err(ln, format!("unknown key `{key}`"))),
            },
        }
    }
    if let Some(ln) = l_theory_line {
        let ck2 = ck2_value.ok_or_else(|| err(ln, "`L = theory` needs `cK2`"))?;
        cfg.l_mode = LMode::Theory { ck2 };
    }
    // surface missing custom data and size mismatches now rather than at run time
    cfg.physical_params()?;
    Ok(cfg)
}

pub fn parse_units(s: &str) -> Option<UnitMode> {
    match s {
        "si" => Some(UnitMode::Si),
        "paper_raw" => Some(UnitMode::PaperRaw),
        _ => None,
    }
}

impl RunConfig {
    /// Number of fluid networks.
    pub fn networks(&self) -> usize {
        match self.benchmark {
            BenchmarkId::Barenblatt => 2,
            BenchmarkId::Mpet4 => 4,
            BenchmarkId::Custom => self.networks.len(),
        }
    }

    /// Physical parameters after overrides and scalings, before
    /// normalization.
    pub fn physical_params(&self) -> Result<PhysicalParams> {
        let n = self.networks();
        let mut p = match self.benchmark {
            BenchmarkId::Barenblatt => barenblatt_params(self.units, self.beta),
            BenchmarkId::Mpet4 => mpet4_params(self.units),
            BenchmarkId::Custom => {
                if n == 0 {
                    return Err(err(0, "custom benchmark needs at least one [network i] section"));
                }
                let need = |v: Option<f64>, what: &str| v.ok_or_else(|| err(0, format!("custom benchmark needs `{what}`")));
                let mut p = PhysicalParams {
                    lambda: need(self.lambda, "lambda")?,
                    mu: need(self.mu, "mu")?,
                    c_p: vec![0.0; n],
                    alpha: vec![0.0; n],
                    beta: vec![vec![0.0; n]; n],
                    k: vec![0.0; n],
                    tau: self.tau,
                };
                for (i, net) in self.networks.iter().enumerate() {
                    let what = |k: &str| format!("{k}` in [network {}", i + 1);
                    p.k[i] = need(net.k, &what("K"))?;
                    p.c_p[i] = need(net.c_p, &what("c_p"))?;
                    p.alpha[i] = need(net.alpha, &what("alpha"))?;
                    need(net.pressure, &what("pressure"))?;
                }
                p
            }
        };
        if self.networks.len() > n {
            return Err(err(0, format!("[network {}] exceeds the {n} networks of the benchmark", self.networks.len())));
        }
        if self.k_scale.len() > n {
            return Err(err(0, format!("K{}_scale exceeds the {n} networks of the benchmark", self.k_scale.len())));
        }
        if let Some(l) = self.lambda {
            p.lambda = l;
        }
        if let Some(m) = self.mu {
            p.mu = m;
        }
        p.lambda *= self.lambda_scale;
        p.tau = self.tau;
        for (i, net) in self.networks.iter().enumerate() {
            if let Some(k) = net.k {
                p.k[i] = k;
            }
            if let Some(c) = net.c_p {
                p.c_p[i] = c;
            }
            if let Some(a) = net.alpha {
                p.alpha[i] = a;
            }
            for &(j, b) in &net.beta {
                if j >= n {
                    return Err(err(0, format!("beta_{} in [network {}] names a missing network", j + 1, i + 1)));
                }
                p.beta[i][j] = b;
                p.beta[j][i] = b;
            }
            p.k[i] *= net.k_scale.unwrap_or(1.0);
        }
        for (i, s) in self.k_scale.iter().enumerate() {
            p.k[i] *= s;
        }
        p.validate().map_err(|e| err(0, e.to_string()))?;
        Ok(p)
    }

    /// Parameters handed to the discretization.
    pub fn model_params(&self) -> Result<PhysicalParams> {
        let p = self.physical_params()?;
        Ok(match self.normalization {
            Normalization::Shear => p.shear_normalized(),
            Normalization::None => p,
        })
    }

    /// Dirichlet pressure per network.
    pub fn pressures(&self) -> Vec<f64> {
        let mut p = boundary_pressures(self.benchmark);
        p.resize(self.networks(), 0.0);
        for (i, net) in self.networks.iter().enumerate() {
            if let Some(v) = net.pressure {
                p[i] = v;
            }
        }
        p
    }
}
