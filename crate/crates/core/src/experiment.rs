//! Concentration experiments: a JSON config expands into `(n, β)` cells, each
//! cell runs independent chains, and every cell yields one CSV row per radius.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::concentration::{
    equilibrium_measure, estimate_tail, fit_theorem_constant, theorem1_exponent, ConcentrationRow,
    EquilibriumMeasure, FittedConstant, TailEstimate, LOG_TERM_CONSTANT,
};
use crate::error::Result;
use crate::gas::{GibbsParams, Potential};
use crate::manifold::{ManifoldId, QuadratureGrid};
use crate::regularize::regularization_grid;
use crate::rng::RngState;
use crate::spectral::SpectralModel;

/// How `β` depends on `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaRule {
    Named(NamedBetaRule),
    /// Every listed value is run at every `n`.
    Explicit(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedBetaRule {
    #[serde(rename = "n2")]
    NSquared,
    #[serde(rename = "4pi_n2")]
    FourPiNSquared,
}

impl BetaRule {
    /// The `β` values used at size `n`.
    pub fn betas(&self, n: usize) -> Vec<f64> {
        let n2 = (n * n) as f64;
        match self {
            BetaRule::Named(NamedBetaRule::NSquared) => vec![n2],
            BetaRule::Named(NamedBetaRule::FourPiNSquared) => vec![4.0 * std::f64::consts::PI * n2],
            BetaRule::Explicit(list) => list.clone(),
        }
    }
}

fn default_step() -> f64 {
    0.25
}

fn default_fit_trials() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: ManifoldId,
    pub n_list: Vec<usize>,
    pub beta_rule: BetaRule,
    pub r_list: Vec<f64>,
    pub chains: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Resolution of the grid carrying the equilibrium measure.
    pub grid_resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    /// Frozen bound constant; fitted at run time when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_c: Option<f64>,
    /// Initial proposal scale before burn-in tuning.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Trials per size when fitting the constant.
    #[serde(default = "default_fit_trials")]
    pub fit_trials: usize,
}

impl ExperimentConfig {
    /// Parse and validate; errors name the offending field path.
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            format!("{path}: {}", e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return Err("n_list: needs at least one entry, each >= 2".into());
        }
        if self.r_list.is_empty() || self.r_list.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err("r_list: needs at least one finite entry >= 0".into());
        }
        if let BetaRule::Explicit(list) = &self.beta_rule {
            if list.is_empty() || list.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err("beta_rule: explicit list needs finite entries >= 0".into());
            }
        }
        if self.chains < 4 {
            return Err("chains: at least 4 are needed for the mixing diagnostic".into());
        }
        if self.sweeps < 2 {
            return Err("sweeps: at least 2".into());
        }
        if self.grid_resolution < 2 {
            return Err("grid_resolution: at least 2".into());
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err("step: must be positive".into());
        }
        if let Some(c) = self.fitted_c {
            if !c.is_finite() {
                return Err("fitted_c: must be finite".into());
            }
        }
        if let Some(p) = &self.potential {
            p.check(self.manifold).map_err(|e| format!("potential: {e}"))?;
        }
        Ok(())
    }

    /// Canonical JSON, the input of the config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// `(n, β)` cells in run order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n_list {
            for (rule_index, beta) in self.beta_rule.betas(n).into_iter().enumerate() {
                out.push(Cell {
                    index: out.len(),
                    n,
                    beta,
                    rule_index,
                });
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub beta: f64,
    /// Position in the β list; cells sharing it form one trend series.
    pub rule_index: usize,
}

/// Per-cell checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config_hash: String,
    pub cell: Cell,
    pub tail: TailEstimate,
}

/// Everything shared by the cells of one experiment.
pub struct ExperimentSetup {
    pub config: ExperimentConfig,
    pub model: SpectralModel,
    pub grid: QuadratureGrid,
    pub equilibrium: EquilibriumMeasure,
    pub fitted: FittedConstant,
    /// False when the constant came from the config.
    pub fitted_now: bool,
}

impl ExperimentSetup {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let model = SpectralModel::new(config.manifold);
        let grid = regularization_grid(config.manifold, config.grid_resolution)?;
        let equilibrium = equilibrium_measure(config.manifold, config.potential.as_ref(), &grid)?;
        let (fitted, fitted_now) = match config.fitted_c {
            Some(c) => (FittedConstant { c_a: f64::NAN, c_b: f64::NAN, c }, false),
            None => {
                let mut rng = RngState::from_seed(config.seed).split(u64::MAX);
                let f = fit_theorem_constant(
                    &model,
                    &config.n_list,
                    config.fit_trials,
                    config.potential.as_ref(),
                    config.grid_resolution,
                    &mut rng,
                )?;
                (f, true)
            }
        };
        Ok(ExperimentSetup {
            config,
            model,
            grid,
            equilibrium,
            fitted,
            fitted_now,
        })
    }

    pub fn run_cell(&self, cell: &Cell) -> Result<TailEstimate> {
        let cfg = &self.config;
        let params = GibbsParams {
            beta: cell.beta,
            n: cell.n,
            step: cfg.step,
            potential: cfg.potential,
        };
        let rng = RngState::from_seed(cfg.seed).split(cell.index as u64);
        estimate_tail(
            &self.model,
            &params,
            cfg.chains,
            cfg.sweeps,
            cfg.burn_in,
            &self.grid,
            &self.equilibrium.measure,
            &rng,
        )
    }

    /// Bound exponent at radius `r` with constant `c`, including the entropy
    /// term when a potential is present.
    pub fn bound_exponent(&self, cell: &Cell, r: f64, c: f64) -> f64 {
        let d = self.config.manifold.dimension();
        let e = theorem1_exponent(cell.n, cell.beta, r, d, LOG_TERM_CONSTANT, c);
        e + cell.n as f64 * self.equilibrium.entropy
    }

    pub fn rows(&self, cell: &Cell, tail: &TailEstimate) -> Vec<ConcentrationRow> {
        self.config
            .r_list
            .iter()
            .map(|&r| {
                let (p_hat, ci_lo, ci_hi) = tail.exceedance(r);
                let bound_fitted = self.bound_exponent(cell, r, self.fitted.c).exp();
                let bound_c1 = self.bound_exponent(cell, r, 1.0).exp();
                let mut flags = Vec::new();
                if !tail.mixed() {
                    flags.push("rhat");
                }
                if bound_fitted >= 1.0 {
                    flags.push("vacuous");
                }
                if ci_hi > bound_fitted {
                    flags.push("violation");
                }
                ConcentrationRow {
                    manifold: self.config.manifold,
                    n: cell.n,
                    beta: cell.beta,
                    r,
                    bound_fitted,
                    bound_c1,
                    p_hat,
                    ci_lo,
                    ci_hi,
                    flags: if flags.is_empty() { "-".into() } else { flags.join("|") },
                }
            })
            .collect()
    }
}

pub const RESULTS_HEADER: &str = "manifold,n,beta,r,bound_fitted,bound_Ceq1,p_hat,ci_lo,ci_hi,flags";

pub fn write_rows<W: Write>(mut w: W, rows: &[ConcentrationRow]) -> Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.9e},{:.9e},{},{:.9e},{:.9e},{}",
            r.manifold, r.n, r.beta, r.r, r.bound_fitted, r.bound_c1, r.p_hat, r.ci_lo, r.ci_hi, r.flags
        )?;
    }
    Ok(())
}

/// Gnuplot script drawing bound and estimate against `r`, one panel line
/// pair per `(n, β)` cell.
pub fn gnuplot_script(results_csv: &str, cells: &[Cell], manifold: ManifoldId) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(s, "set logscale y");
    let _ = writeln!(s, "set yrange [1e-4:10]");
    let _ = writeln!(s, "set xlabel 'r'");
    let _ = writeln!(s, "set ylabel 'P(W1 >= r)'");
    let _ = writeln!(s, "set title 'concentration on {manifold}'");
    let _ = writeln!(s, "set terminal pngcairo size 1000,700");
    let _ = writeln!(s, "set output 'concentration.png'");
    let mut parts = Vec::new();
    for (k, c) in cells.iter().enumerate() {
        let sel = format!("(($2=={} && abs($3-{})<1e-9*{}) ? ", c.n, c.beta, c.beta.max(1.0));
        let label = format!("n={} beta={}", c.n, c.beta);
        let lt = k + 1;
        parts.push(format!(
            "'{results_csv}' skip 1 using 4:{sel}$5 : 1/0) with lines lt {lt} title 'bound {label}'"
        ));
        parts.push(format!(
            "'{results_csv}' skip 1 using 4:{sel}$7 : 1/0):8:9 with yerrorbars lt {lt} pt 7 title 'estimate {label}'"
        ));
    }
    let _ = writeln!(s, "plot \\\n    {}", parts.join(", \\\n    "));
    s
}

/// Empirical rate `-ln p̂/β` against `r²/4` for rows with `0 < p̂ < 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub beta: f64,
    pub rule_index: usize,
    pub r: f64,
    pub rate: f64,
    /// From the upper and lower Wilson limits.
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub quarter_r2: f64,
    /// Lower-order terms of the bound exponent divided by `β`.
    pub slack: f64,
}

pub fn rate_rows(setup: &ExperimentSetup, cells: &[(Cell, TailEstimate)]) -> Vec<RateRow> {
    let mut out = Vec::new();
    for (cell, tail) in cells {
        if cell.beta <= 0.0 {
            continue;
        }
        for &r in &setup.config.r_list {
            let (p, lo, hi) = tail.exceedance(r);
            if p <= 0.0 || p >= 1.0 {
                continue;
            }
            let quarter_r2 = r * r / 4.0;
            out.push(RateRow {
                n: cell.n,
                beta: cell.beta,
                rule_index: cell.rule_index,
                r,
                rate: -p.ln() / cell.beta + 0.0,
                rate_lo: -hi.ln() / cell.beta + 0.0,
                rate_hi: if lo > 0.0 { -lo.ln() / cell.beta } else { f64::INFINITY },
                quarter_r2,
                slack: setup.bound_exponent(cell, r, setup.fitted.c) / cell.beta + quarter_r2,
            });
        }
    }
    out
}

pub const RATE_HEADER: &str = "n,beta,r,rate,rate_lo,rate_hi,r2_over_4,slack";

pub fn write_rate_rows<W: Write>(mut w: W, rows: &[RateRow]) -> Result<()> {
    writeln!(w, "{RATE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            r.n, r.beta, r.r, r.rate, r.rate_lo, r.rate_hi, r.quarter_r2, r.slack
        )?;
    }
    Ok(())
}

/// Pairs `(smaller n, larger n, r)` in one β series where the rate at the
/// larger `n` lies entirely below the interval at the smaller one, i.e. the
/// rate decreases in `n` beyond what the confidence intervals allow.
pub fn rate_trend_breaks(rows: &[RateRow]) -> Vec<(usize, usize, f64)> {
    let mut breaks = Vec::new();
    for a in rows {
        for b in rows {
            if a.rule_index == b.rule_index && a.r == b.r && b.n > a.n && b.rate_hi < a.rate_lo {
                breaks.push((a.n, b.n, a.r));
            }
        }
    }
    breaks
}

/// Run every cell in memory (no checkpoints) and return the rows.
pub fn run_in_memory(setup: &ExperimentSetup) -> Result<Vec<(Cell, TailEstimate)>> {
    setup
        .config
        .cells()
        .iter()
        .map(|c| Ok((*c, setup.run_cell(c)?)))
        .collect()
}

pub fn violations(rows: &[ConcentrationRow]) -> usize {
    rows.iter().filter(|r| r.flags.contains("violation")).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "manifold": "torus2", "n_list": [4, 6], "beta_rule": "n2",
        "r_list": [0.0, 0.1, 0.3, 2.0], "chains": 8, "sweeps": 20, "burn_in": 20,
        "seed": 7, "grid_resolution": 16, "fitted_c": 1.4
    }"#;

    #[test]
    fn beta_rules() {
        let cfg = ExperimentConfig::from_json(SMALL).unwrap();
        assert_eq!(cfg.beta_rule.betas(4), vec![16.0]);
        let four_pi: BetaRule = serde_json::from_str("\"4pi_n2\"").unwrap();
        assert!((four_pi.betas(2)[0] - 16.0 * std::f64::consts::PI).abs() < 1e-12);
        let list: BetaRule = serde_json::from_str("[1.0, 2.5]").unwrap();
        assert_eq!(list.betas(9), vec![1.0, 2.5]);
        assert!(serde_json::from_str::<BetaRule>("\"n3\"").is_err());
    }

    #[test]
    fn explicit_list_is_crossed_with_sizes() {
        let text = SMALL.replace("\"n2\"", "[1.0, 2.0, 3.0]");
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[4].n, 6);
        assert_eq!(cells[4].beta, 2.0);
        assert_eq!(cells[4].rule_index, 1);
        assert_eq!(cells[4].index, 4);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = SMALL.replace("\"chains\": 8", "\"chains\": \"many\"");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.starts_with("chains"), "{err}");
        let text = SMALL.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.contains("colour"), "{err}");
        let text = SMALL.replace("[4, 6]", "[1, 6]");
        assert!(ExperimentConfig::from_json(&text).unwrap_err().starts_with("n_list"));
    }

    #[test]
    fn tiny_experiment_rows() {
        let cfg = ExperimentConfig::from_json(SMALL).unwrap();
        let setup = ExperimentSetup::new(cfg).unwrap();
        let cells = run_in_memory(&setup).unwrap();
        let rows: Vec<_> = cells.iter().flat_map(|(c, t)| setup.rows(c, t)).collect();
        assert_eq!(rows.len(), 8);
        for row in &rows {
            assert!((0.0..=1.0).contains(&row.p_hat));
            assert!(row.ci_lo <= row.p_hat + 1e-12 && row.p_hat <= row.ci_hi + 1e-12);
            if row.r == 0.0 {
                assert_eq!(row.p_hat, 1.0);
            }
            if row.r == 2.0 {
                // beyond the diameter of the torus
                assert_eq!(row.p_hat, 0.0);
            }
        }
        let mut a = Vec::new();
        write_rows(&mut a, &rows).unwrap();
        let again = run_in_memory(&setup).unwrap();
        let rows2: Vec<_> = again.iter().flat_map(|(c, t)| setup.rows(c, t)).collect();
        let mut b = Vec::new();
        write_rows(&mut b, &rows2).unwrap();
        assert_eq!(a, b);
        let script = gnuplot_script("results.csv", &setup.config.cells(), setup.config.manifold);
        assert!(script.contains("n=6 beta=36"));
    }

    #[test]
    fn trend_breaks_need_disjoint_intervals() {
        let row = |n, rate: f64, half: f64| RateRow {
            n,
            beta: 1.0,
            rule_index: 0,
            r: 0.2,
            rate,
            rate_lo: rate - half,
            rate_hi: rate + half,
            quarter_r2: 0.01,
            slack: 0.0,
        };
        assert!(rate_trend_breaks(&[row(8, 0.02, 0.005), row(16, 0.018, 0.005)]).is_empty());
        assert_eq!(rate_trend_breaks(&[row(8, 0.02, 0.001), row(16, 0.01, 0.001)]), vec![(8, 16, 0.2)]);
    }
}
