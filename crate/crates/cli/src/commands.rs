use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use coulomb_core::concentration::{equilibrium_measure, euler_lagrange_residual};
use coulomb_core::gas::{ChainCheckpoint, GibbsChain, GibbsParams, ParticleConfiguration, Potential, ProposalKind};
use coulomb_core::manifold::sample_uniform;
use coulomb_core::measure::MeasureFile;
use coulomb_core::regularize::regularization_grid;
use coulomb_core::transport::{w1_dual_certificate, w1_entropic, w1_exact};
use coulomb_core::verify::{heat_grid, run_suites, Suite};
use coulomb_core::{DiscreteMeasure, ManifoldId, ManifoldPoint, RngState};

use crate::cache::load_model;
use crate::{CliError, CliResult, EquilibriumArgs, KernelTableArgs, SampleArgs, TransportArgs, VerifyArgs};

fn output_writer(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Usage(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn parse_potential(text: Option<&str>, m: ManifoldId) -> CliResult<Option<Potential>> {
    let Some(text) = text else { return Ok(None) };
    let pot: Potential =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("--potential: {e}")))?;
    pot.check(m).map_err(|e| CliError::Usage(format!("--potential: {e}")))?;
    Ok(Some(pot))
}

fn parse_point(m: ManifoldId, text: &str) -> CliResult<ManifoldPoint> {
    let coords = text
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("bad coordinate in '{text}': {e}")))?;
    m.point(&coords).map_err(|e| CliError::Usage(e.to_string()))
}

fn fmt_point(m: ManifoldId, p: &ManifoldPoint) -> String {
    p.as_slice(m).iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn kernel_table(a: KernelTableArgs) -> CliResult<()> {
    let m = a.manifold;
    if a.t.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(CliError::Usage("--t values must be positive".into()));
    }
    let mut pairs = Vec::new();
    for spec in &a.pairs {
        let (x, y) = spec
            .split_once(';')
            .ok_or_else(|| CliError::Usage(format!("--pair '{spec}' is not of the form x1,x2;y1,y2")))?;
        pairs.push((parse_point(m, x)?, parse_point(m, y)?));
    }
    if pairs.is_empty() {
        let mut rng = RngState::from_seed(a.seed);
        for _ in 0..a.random_pairs {
            pairs.push((sample_uniform(m, &mut rng), sample_uniform(m, &mut rng)));
        }
    }
    let sm = load_model(m)?;
    let grid = heat_grid(m)?;
    let mut w = output_writer(a.output.as_deref())?;
    writeln!(w, "t,x,y,p_t,truncation_bound,mass,G,G_t")?;
    for (x, y) in &pairs {
        let g = sm.green_value(x, y);
        for &t in &a.t {
            let p = sm.heat_kernel(t, x, y)?;
            let mass: f64 = grid
                .nodes
                .iter()
                .zip(&grid.weights)
                .map(|(z, wt)| sm.heat_kernel(t, x, z).map(|k| wt * k.value))
                .sum::<coulomb_core::Result<f64>>()?;
            let gt = sm.regularized_green(t, x, y)?;
            writeln!(
                w,
                "{t},{},{},{:.15e},{:.3e},{:.15e},{:.15e},{:.15e}",
                fmt_point(m, x),
                fmt_point(m, y),
                p.value,
                p.truncation_bound,
                mass,
                g,
                gt.value
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn verify(a: VerifyArgs) -> CliResult<()> {
    let suites = Suite::parse(&a.suite).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown suite '{}' (valid: spectral, transport, regularize, all)",
            a.suite
        ))
    })?;
    let manifolds = match a.manifold {
        Some(m) => vec![m],
        None => vec![ManifoldId::Torus2, ManifoldId::Torus3, ManifoldId::Sphere2],
    };
    let models = manifolds.into_iter().map(load_model).collect::<CliResult<Vec<_>>>()?;
    let mut rng = RngState::from_seed(a.seed);
    let start = std::time::Instant::now();
    let checks = run_suites(&suites, &models, &mut rng)?;
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed()).collect();
    println!("{} checks, {} failed, {:.1?}", checks.len(), failed.len(), start.elapsed());
    if failed.is_empty() {
        Ok(())
    } else {
        let names: Vec<String> = failed.iter().map(|c| c.name.clone()).collect();
        Err(CliError::Failure(format!("failing checks: {}", names.join("; "))))
    }
}

pub fn sample(a: SampleArgs) -> CliResult<()> {
    let (ck, added) = if let Some(path) = &a.resume {
        let prev: ChainCheckpoint = serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let sm = load_model(prev.manifold)?;
        let cfg = prev.configuration().map_err(|e| CliError::Usage(e.to_string()))?;
        let mut rng = prev.rng().map_err(|e| CliError::Usage(e.to_string()))?;
        let mut chain = GibbsChain::new(&sm, prev.params(), &cfg, ProposalKind::Continuous)?;
        for _ in 0..a.sweeps {
            chain.sweep(&mut rng);
        }
        (ChainCheckpoint::capture(&chain, &rng, prev.sweeps + a.sweeps as u64), a.sweeps)
    } else {
        let m = a.manifold.expect("required by clap");
        let params = GibbsParams {
            beta: a.beta.expect("required by clap"),
            n: a.n.expect("required by clap"),
            step: a.step,
            potential: parse_potential(a.potential.as_deref(), m)?,
        };
        params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let sm = load_model(m)?;
        let mut rng = RngState::from_seed(a.seed);
        let init = ParticleConfiguration::sample_uniform(m, params.n, &mut rng)?;
        let mut chain = GibbsChain::new(&sm, params, &init, ProposalKind::Continuous)?;
        chain.burn_in(a.burn_in, &mut rng);
        for _ in 0..a.sweeps {
            chain.sweep(&mut rng);
        }
        (ChainCheckpoint::capture(&chain, &rng, (a.burn_in + a.sweeps) as u64), a.burn_in + a.sweeps)
    };
    let mut w = output_writer(Some(&a.output))?;
    serde_json::to_writer_pretty(&mut w, &ck).map_err(coulomb_core::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    println!(
        "{} sweeps (total {}), acceptance {:.3}, step {:.4}, H_n {:.6e}",
        added, ck.sweeps, ck.acceptance_rate, ck.step, ck.energy
    );
    Ok(())
}

fn read_measure(path: &Path, fallback: Option<ManifoldId>) -> CliResult<DiscreteMeasure> {
    let file: MeasureFile =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    DiscreteMeasure::from_file(&file, fallback).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn transport(a: TransportArgs) -> CliResult<()> {
    let mu = read_measure(&a.mu, a.manifold)?;
    let nu = read_measure(&a.nu, a.manifold)?;
    if mu.manifold != nu.manifold {
        return Err(CliError::Usage(format!(
            "measures live on different manifolds ({} and {})",
            mu.manifold, nu.manifold
        )));
    }
    let (w1, plan) = w1_exact(&mu, &nu)?;
    let cert = w1_dual_certificate(&mu, &nu, &plan)?;
    println!("w1 {w1:.15e}");
    println!("duality_gap {:.3e}", cert.duality_gap);
    println!("lipschitz_excess {:.3e}", cert.lipschitz_excess);
    if let Some(eps) = a.entropic {
        let b = w1_entropic(&mu, &nu, eps)?;
        println!("entropic_bracket {:.15e} {:.15e} ({} iterations)", b.lower, b.upper, b.iterations);
    }
    if let Some(path) = &a.plan {
        let mut w = output_writer(Some(path))?;
        plan.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn equilibrium(a: EquilibriumArgs) -> CliResult<()> {
    let m = a.manifold;
    let pot = parse_potential(a.potential.as_deref(), m)?;
    let grid = regularization_grid(m, a.resolution).map_err(|e| CliError::Usage(e.to_string()))?;
    let eq = equilibrium_measure(m, pot.as_ref(), &grid)?;
    let sm = load_model(m)?;
    let residual = euler_lagrange_residual(&sm, pot.as_ref(), &grid, a.residual_samples)?;
    let min = eq.density.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("entropy {:.12e}", eq.entropy);
    println!("min_density {min:.12e}");
    println!("euler_lagrange_residual {residual:.3e}");
    if let Some(path) = &a.output {
        let mut w = output_writer(Some(path))?;
        writeln!(w, "x,weight,density")?;
        for ((x, wt), rho) in grid.nodes.iter().zip(&grid.weights).zip(&eq.density) {
            writeln!(w, "{},{wt:.15e},{rho:.15e}", fmt_point(m, x))?;
        }
        w.flush()?;
    }
    Ok(())
}
