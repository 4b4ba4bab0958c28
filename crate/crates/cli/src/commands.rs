//! Subcommand implementations. Each returns the exit code after writing its
//! artifacts into the run directory.

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use oprg::fock::{ccr_residual, pull_through_residual};
use oprg::initial::InitialStage;
use oprg::kernels::{operator_symmetric, reconstruct, Frame};
use oprg::linalg::{hermiticity_residual, re};
use oprg::oracle::{
    cauchy_coefficients, ed_ground_ops, overlap, parity_check, second_order_energy, sweep, truncation_study,
};
use oprg::perturb::{
    coefficient_match, rg_circle, rs_coefficients, sigma_continuity_scan, MatchOptions, ScanOptions,
    DEFAULT_MAX_ORDER,
};
use oprg::rg::{eigenvector, iterate, RGConfig};
use oprg::{DiscretizedModel, Error, ModelConfig, Result, C64};

use crate::rundir::RunDir;

/// Sigma used by the series commands when neither the flag nor the config gives one.
const DEFAULT_SERIES_SIGMA: f64 = 0.3;
/// Largest model dimension for which `rg` also runs exact diagonalization.
const ED_DIM_LIMIT: usize = 4096;
const SIGMA_GRID: [f64; 6] = [0.8, 0.4, 0.2, 0.1, 0.05, 0.0];

pub struct Context {
    pub config: ModelConfig,
    pub rg: RGConfig,
    pub g: Vec<f64>,
    pub sigma: Vec<f64>,
    pub orders: Option<usize>,
    pub run: RunDir,
}

impl Context {
    /// The configured model with `g` and `sigma` overridden in physical units.
    pub fn model(&self, g: Option<f64>, sigma: Option<f64>) -> Result<(DiscretizedModel, f64)> {
        let mut cfg = self.config.clone();
        if let Some(g) = g {
            cfg.parameters.g = g;
            cfg.parameters.g_im = 0.0;
        }
        if let Some(s) = sigma {
            cfg.parameters.sigma = s;
        }
        cfg.to_model_scaled()
    }

    fn g_values(&self) -> Vec<Option<f64>> {
        if self.g.is_empty() {
            vec![None]
        } else {
            self.g.iter().copied().map(Some).collect()
        }
    }

    /// Sigma for the Rayleigh-Schroedinger series, in normalized units.
    fn series_sigma(&self, model: &DiscretizedModel, scale: f64) -> f64 {
        if let Some(s) = self.sigma.first() {
            return s / scale;
        }
        if model.modes.ir_cutoff > 0.0 {
            return model.modes.ir_cutoff;
        }
        info!("no infrared cutoff configured, using sigma {DEFAULT_SERIES_SIGMA} for the series");
        DEFAULT_SERIES_SIGMA
    }
}

#[derive(Debug, Serialize)]
struct Invariant {
    name: &'static str,
    value: f64,
    bound: f64,
    pass: bool,
}

fn invariant(name: &'static str, value: f64, bound: f64) -> Invariant {
    let value = value.abs();
    Invariant { name, value, bound, pass: value <= bound }
}

pub fn validate(ctx: &Context) -> Result<u8> {
    let (model, _) = ctx.model(None, None)?;
    let stage = InitialStage::new(&model, ctx.rg.xi)?;
    let g = model.g;
    let mut rows = Vec::new();

    rows.push(invariant("hamiltonian_hermitian", hermiticity_residual(&stage.ops.hamiltonian(re(g.re))), 1e-14));
    let parity = parity_check(&model, &[g.re.abs().max(1e-3)])?;
    rows.push(invariant("parity_conjugation", parity.conjugation_residual, 1e-14));
    rows.push(invariant("parity_energy", parity.max_energy_asymmetry, oprg::tolerances::ED_RESIDUAL));

    let f = |x: f64| 1.0 / (1.0 + x) + x * x;
    let frame = Frame::from_modes(&model.modes, model.n_max)?;
    let mut commutation: f64 = 0.0;
    for basis in [&stage.ops.basis, &frame.basis] {
        for i in 0..basis.modes() {
            commutation = commutation.max(pull_through_residual(basis, &f, i));
            for j in 0..basis.modes() {
                commutation = commutation.max(ccr_residual(basis, i, j));
            }
        }
    }
    rows.push(invariant("pull_through_and_ccr", commutation, oprg::tolerances::PULL_THROUGH));

    let z_grid: Vec<C64> = (0..8)
        .flat_map(|k| (0..8).map(move |j| C64::from_polar(0.06 * k as f64, std::f64::consts::PI * j as f64 / 4.0)))
        .collect();
    let resolvent = z_grid
        .par_iter()
        .map(|&z| stage.pair(re(0.0), z).map(|p| p.resolvent_norm))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    rows.push(invariant("free_resolvent_bound", resolvent, 4.0));

    let mut linear: f64 = 0.0;
    let mut round_trip: f64 = 0.0;
    let mut symmetric = true;
    for z in [C64::new(0.0, 0.0), C64::new(0.1, 0.2), C64::new(-0.2, 0.1)] {
        let w = stage.kernel(re(g.re), z)?.w;
        let wbar = stage.kernel(re(g.re), z.conj())?.w;
        linear = linear.max(w.linear_norm());
        let back = reconstruct(&w.assemble()?, w.frame.clone(), w.z, w.xi)?;
        round_trip = round_trip.max(back.distance(&w));
        symmetric &= operator_symmetric(&[(w, wbar)], oprg::tolerances::EXACT)?;
    }
    rows.push(invariant("initial_linear_component", linear, oprg::tolerances::ZERO_LINEAR));
    rows.push(invariant("kernel_round_trip", round_trip, oprg::tolerances::ROUND_TRIP));
    rows.push(invariant("kernel_symmetry", if symmetric { 0.0 } else { 1.0 }, 0.0));

    ctx.run.write_csv("invariants.csv", &rows).map_err(io)?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.name).collect();
    for r in &rows {
        println!("{:<28} {:>10.3e} <= {:<9.1e} {}", r.name, r.value, r.bound, if r.pass { "pass" } else { "FAIL" });
    }
    if failed.is_empty() {
        info!("all {} invariants pass", rows.len());
        Ok(0)
    } else {
        warn!("failed invariants: {}", failed.join(", "));
        Ok(1)
    }
}

#[derive(Debug, Serialize)]
struct RgRow {
    g: f64,
    g_normalized: f64,
    energy: f64,
    energy_im: f64,
    energy_physical: f64,
    steps: usize,
    terminal: &'static str,
    max_gamma_ratio: f64,
    psi0_norm: f64,
    residual: f64,
    energy_ed: Option<f64>,
    overlap_ed: Option<f64>,
}

pub fn rg(ctx: &Context) -> Result<u8> {
    let points = ctx.g_values();
    let results: Vec<Result<(RgRow, oprg::rg::RGTrace, oprg::kernels::KernelSnapshot)>> = points
        .par_iter()
        .map(|&g| {
            let (model, scale) = ctx.model(g, None)?;
            let stage = InitialStage::new(&model, ctx.rg.xi)?;
            let outcome = iterate(&stage, model.g, &ctx.rg)?;
            let vector = eigenvector(&stage, &outcome, model.g)?;
            let ed = (model.g.im == 0.0 && stage.ops.dim() <= ED_DIM_LIMIT)
                .then(|| ed_ground_ops(&stage.ops, model.g.re))
                .transpose()?;
            let row = RgRow {
                g: g.unwrap_or(ctx.config.parameters.g),
                g_normalized: model.g.re,
                energy: outcome.energy.re,
                energy_im: outcome.energy.im,
                energy_physical: outcome.energy.re * scale,
                steps: outcome.trace.steps.len(),
                terminal: outcome.trace.certificate.terminal_reason,
                max_gamma_ratio: outcome.trace.certificate.max_gamma_ratio,
                psi0_norm: vector.psi0_norm,
                residual: vector.residual,
                energy_ed: ed.as_ref().map(|e| e.energy),
                overlap_ed: ed.as_ref().map(|e| overlap(&e.vector, &vector.psi)),
            };
            Ok((row, outcome.trace, outcome.chain.last().snapshot()))
        })
        .collect();
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut snapshots = Vec::new();
    for r in results {
        let (row, trace, snap) = r?;
        info!("g = {}: E = {:.12} after {} steps ({})", row.g, row.energy, row.steps, row.terminal);
        println!("g = {:<10} E = {:.15} steps = {:<3} {}", row.g, row.energy, row.steps, row.terminal);
        rows.push(row);
        traces.push(trace);
        snapshots.push(snap);
    }
    ctx.run.write_csv("energies.csv", &rows).map_err(io)?;
    ctx.run.write_json("trace.json", &traces).map_err(io)?;
    ctx.run.write_json("terminal_kernels.json", &snapshots).map_err(io)?;
    let steps: Vec<_> = traces
        .iter()
        .zip(&rows)
        .flat_map(|(t, r)| t.steps.iter().map(move |s| StepRow::new(r.g, s)))
        .collect();
    ctx.run.write_csv("steps.csv", &steps).map_err(io)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct StepRow {
    g: f64,
    step: usize,
    modes: usize,
    dim_in: usize,
    dim_out: usize,
    z_in: f64,
    z_out: f64,
    gamma_in: f64,
    gamma_out: f64,
    gamma_ratio: f64,
    linear_out: f64,
    neumann_tail: f64,
}

impl StepRow {
    fn new(g: f64, s: &oprg::rg::StepRecord) -> Self {
        StepRow {
            g,
            step: s.step,
            modes: s.modes,
            dim_in: s.dim_in,
            dim_out: s.dim_out,
            z_in: s.z_in.re,
            z_out: s.z_out.re,
            gamma_in: s.gamma_in,
            gamma_out: s.gamma_out,
            gamma_ratio: s.gamma_ratio,
            linear_out: s.linear_out,
            neumann_tail: s.neumann_tail,
        }
    }
}

#[derive(Debug, Serialize)]
struct CoefficientRow {
    order: usize,
    energy: f64,
    energy_im: f64,
    denominator: f64,
    numerator: f64,
}

pub fn perturb(ctx: &Context) -> Result<u8> {
    let (model, scale) = ctx.model(None, None)?;
    let sigma = ctx.series_sigma(&model, scale);
    let order = ctx.orders.unwrap_or(DEFAULT_MAX_ORDER);
    let series = rs_coefficients(&model, sigma, order)?;
    let rows: Vec<CoefficientRow> = (0..=order)
        .map(|n| CoefficientRow {
            order: n,
            energy: series.energies[n].re,
            energy_im: series.energies[n].im,
            denominator: series.denominators[n].re,
            numerator: series.numerators[n].re,
        })
        .collect();
    for r in &rows {
        println!("E({:>2}) = {:>24.16e}", r.order, r.energy);
    }
    ctx.run.write_csv("coefficients.csv", &rows).map_err(io)?;
    ctx.run.write_json("series.json", &series).map_err(io)?;

    let g = model.g.re;
    if g == 0.0 {
        info!("g = 0, skipping the sigma scan");
        return Ok(0);
    }
    let grid: Vec<f64> = if ctx.sigma.len() > 1 {
        ctx.sigma.iter().map(|s| s / scale).collect()
    } else {
        SIGMA_GRID.to_vec()
    };
    let options = ScanOptions { rg: ctx.rg, ..ScanOptions::default() };
    let scan = sigma_continuity_scan(&model, g, &grid, &options)?;
    for r in &scan.rows {
        println!("sigma = {:<6} E = {:.15} |dE| = {:.3e}", r.sigma, r.energy, r.difference);
    }
    ctx.run.write_csv("sigma_scan.csv", &scan.rows).map_err(io)?;
    ctx.run.write_json("sigma_scan.json", &scan).map_err(io)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct MatchCsvRow {
    order: usize,
    rg: f64,
    rg_im: f64,
    rs: f64,
    rs_im: f64,
    discrepancy: f64,
}

pub fn matching(ctx: &Context) -> Result<u8> {
    let (model, scale) = ctx.model(None, None)?;
    let sigma = ctx.series_sigma(&model, scale);
    let options = MatchOptions { rg: ctx.rg, ..MatchOptions::default() };
    let report = coefficient_match(&model, sigma, ctx.orders.unwrap_or(4), &options)?;
    let rows: Vec<MatchCsvRow> = report
        .rows
        .iter()
        .map(|r| MatchCsvRow {
            order: r.order,
            rg: r.rg.re,
            rg_im: r.rg.im,
            rs: r.rs.re,
            rs_im: r.rs.im,
            discrepancy: r.discrepancy,
        })
        .collect();
    for r in &rows {
        println!("order {:>2}: rg {:>24.16e} rs {:>24.16e} discrepancy {:.2e}", r.order, r.rg, r.rs, r.discrepancy);
    }
    if report.aliasing_warning {
        warn!("Cauchy coefficients exceed the analyticity bound; increase the sample count");
    }
    ctx.run.write_csv("match.csv", &rows).map_err(io)?;
    ctx.run.write_json("match.json", &report).map_err(io)?;
    let pass = report.max_discrepancy() <= oprg::tolerances::COEFFICIENT_MATCH
        && report.max_odd <= oprg::tolerances::ODD_COEFFICIENT;
    println!("max discrepancy {:.2e}, max odd {:.2e}", report.max_discrepancy(), report.max_odd);
    Ok(if pass { 0 } else { 1 })
}

pub fn oracle(ctx: &Context) -> Result<u8> {
    let (model, scale) = ctx.model(None, None)?;
    let g_values: Vec<f64> = if ctx.g.is_empty() {
        let top = model.g.re.abs().max(0.01);
        (0..=8).map(|k| top * k as f64 / 8.0).collect()
    } else {
        ctx.g.iter().map(|g| g * scale.sqrt()).collect()
    };
    let sigma_values: Vec<f64> = if ctx.sigma.is_empty() {
        vec![model.modes.ir_cutoff]
    } else {
        ctx.sigma.iter().map(|s| s / scale).collect()
    };
    let rows = sweep(&model, &g_values, &sigma_values)?;
    ctx.run.write_csv("sweep.csv", &rows).map_err(io)?;
    let top = g_values.iter().copied().fold(0.0, |a: f64, b| a.max(b.abs()));
    let parity = parity_check(&model, &g_values)?;
    ctx.run.write_csv("parity.csv", &parity.rows).map_err(io)?;
    let truncation = truncation_study(&model, top, 1, model.n_max + 2)?;
    ctx.run.write_csv("truncation.csv", &truncation).map_err(io)?;
    let e2 = second_order_energy(&model)?;
    ctx.run
        .write_json(
            "summary.json",
            &serde_json::json!({
                "second_order_energy": e2,
                "parity_conjugation_residual": parity.conjugation_residual,
                "parity_energy_asymmetry": parity.max_energy_asymmetry,
                "gap_scale": scale,
            }),
        )
        .map_err(io)?;
    for r in &rows {
        println!("g = {:<10.4e} sigma = {:<6} E = {:.15} residual {:.1e}", r.g, r.sigma, r.energy, r.residual);
    }
    println!("E2 = {e2:.15e}");
    Ok(0)
}

#[derive(Debug, Serialize)]
struct AlphaRow {
    alpha: f64,
    g: f64,
    energy: f64,
    energy_ed: f64,
    series: f64,
    series_difference: f64,
}

#[derive(Debug, Serialize)]
struct PlotRow {
    x: f64,
    y: f64,
    series: String,
}

pub fn alpha_demo(ctx: &Context, alphas: &[f64]) -> Result<u8> {
    let (model, scale) = ctx.model(None, None)?;
    let stage = InitialStage::new(&model, ctx.rg.xi)?;
    let options = MatchOptions::default();
    let order = 2 * ctx.orders.unwrap_or(4);
    let samples = rg_circle(&stage, options.radius, options.samples.max(2 * order + 2), &ctx.rg)?;
    let cauchy = cauchy_coefficients(&samples, options.radius, order)?;
    let even: Vec<(usize, f64)> = cauchy.coefficients.iter().enumerate().step_by(2).map(|(n, c)| (n, c.re)).collect();

    let rows: Vec<AlphaRow> = alphas
        .par_iter()
        .map(|&alpha| {
            let g = alpha.powf(1.5) * scale.sqrt();
            let outcome = iterate(&stage, re(g), &ctx.rg)?;
            let energy_ed = ed_ground_ops(&stage.ops, g)?.energy;
            let series: f64 = even.iter().map(|(n, c)| c * g.powi(*n as i32)).sum();
            Ok(AlphaRow { alpha, g, energy: outcome.energy.re, energy_ed, series, series_difference: (series - outcome.energy.re).abs() })
        })
        .collect::<Result<_>>()?;
    let mut plot = Vec::new();
    for r in &rows {
        plot.push(PlotRow { x: r.alpha, y: r.energy, series: "energy".into() });
        for (n, c) in even.iter().skip(1) {
            plot.push(PlotRow { x: r.alpha, y: c * r.g.powi(*n as i32), series: format!("term_{n}") });
        }
        println!("alpha = {:<8} E = {:.15} series = {:.15} |diff| = {:.2e}", r.alpha, r.energy, r.series, r.series_difference);
    }
    let coefficients: Vec<CoefficientPair> = even
        .iter()
        .map(|&(n, c)| CoefficientPair { order: n, coefficient: c, alpha_power: 3 * n / 2 })
        .collect();
    ctx.run.write_csv("alpha.csv", &rows).map_err(io)?;
    ctx.run.write_csv("alpha_plot.csv", &plot).map_err(io)?;
    ctx.run.write_csv("coefficients.csv", &coefficients).map_err(io)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct CoefficientPair {
    order: usize,
    coefficient: f64,
    alpha_power: usize,
}

fn io(e: std::io::Error) -> Error {
    Error::Config(format!("writing run artifacts: {e}"))
}
