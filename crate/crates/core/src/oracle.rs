//! Exact diagonalization on the full truncated space, Cauchy coefficient
//! extraction and parity checks.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock;
use crate::linalg::{hermitian_eigh, hermiticity_residual, max_abs, re, CMat, CVec, C64};
use crate::model::{apply_ir_cutoff, DiscretizedModel, ModelOperators};
use crate::tolerances;

#[derive(Debug, Clone)]
pub struct EdResult {
    pub energy: f64,
    pub vector: CVec,
    /// `||(H - E) psi||` for the normalized eigenvector.
    pub residual: f64,
    pub dim: usize,
}

fn ground_pair(h: &CMat) -> Result<EdResult> {
    let residual = hermiticity_residual(h);
    if residual > tolerances::EXACT {
        return Err(Error::NonHermitian { residual });
    }
    let (values, vectors) = hermitian_eigh(h);
    let mut vector: CVec = vectors.column(0).into_owned();
    let mut energy = values[0];
    // the dense solver leaves residuals near 1e-9; polish by inverse iteration
    let n = h.nrows();
    for _ in 0..3 {
        let shifted = h - CMat::identity(n, n) * re(energy);
        let Some(next) = shifted.lu().solve(&vector) else { break };
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        vector = next / re(norm);
        energy = vector.dotc(&(h * &vector)).re;
    }
    // fix the phase so the largest entry is real and positive
    let (imax, _) = vector.iter().enumerate().fold((0, 0.0), |acc, (i, z)| {
        if z.norm() > acc.1 {
            (i, z.norm())
        } else {
            acc
        }
    });
    let phase = vector[imax] / vector[imax].norm();
    vector /= phase;
    let residual = (h * &vector - &vector * re(energy)).norm();
    if residual > tolerances::ED_RESIDUAL {
        return Err(Error::ResidualTooLarge { residual });
    }
    Ok(EdResult { energy, vector, residual, dim: h.nrows() })
}

/// Lowest eigenpair of `H(g)` on the full truncated space.
pub fn ed_ground(model: &DiscretizedModel, g: f64) -> Result<EdResult> {
    let ops = ModelOperators::new(model)?;
    ground_pair(&ops.hamiltonian(re(g)))
}

/// Same as [`ed_ground`] with prebuilt operators.
pub fn ed_ground_ops(ops: &ModelOperators, g: f64) -> Result<EdResult> {
    ground_pair(&ops.hamiltonian(re(g)))
}

/// `|<a, b>| / (||a|| ||b||)`.
pub fn overlap(a: &CVec, b: &CVec) -> f64 {
    a.dotc(b).norm() / (a.norm() * b.norm())
}

/// `count` equispaced points `r e^{2 pi i k / count}`.
pub fn circle_points(radius: f64, count: usize) -> Vec<C64> {
    (0..count)
        .map(|k| C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / count as f64))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchyCoefficients {
    pub radius: f64,
    pub coefficients: Vec<C64>,
    /// Orders whose coefficient exceeds `r^{-n} max |f|`.
    pub bound_violations: Vec<usize>,
}

impl CauchyCoefficients {
    pub fn aliasing_warning(&self) -> bool {
        !self.bound_violations.is_empty()
    }
}

/// Taylor coefficients `c_0..=c_{n_max}` from samples on [`circle_points`].
pub fn cauchy_coefficients(samples: &[C64], radius: f64, n_max: usize) -> Result<CauchyCoefficients> {
    let k = samples.len();
    if k < 2 * n_max.max(1) {
        return Err(Error::Config(format!("{k} samples cannot resolve order {n_max}; need at least {}", 2 * n_max)));
    }
    if !(radius > 0.0) {
        return Err(Error::Config(format!("radius {radius} must be positive")));
    }
    let fmax = samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut coefficients = Vec::with_capacity(n_max + 1);
    let mut bound_violations = Vec::new();
    for n in 0..=n_max {
        let sum: C64 = samples
            .iter()
            .enumerate()
            .map(|(j, f)| f * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (n * j) as f64 / k as f64))
            .sum();
        let c = sum / (k as f64 * radius.powi(n as i32));
        if c.norm() > fmax * radius.powi(-(n as i32)) * (1.0 + 1e-12) {
            bound_violations.push(n);
        }
        coefficients.push(c);
    }
    if !bound_violations.is_empty() {
        log::warn!("Cauchy coefficients exceed the bound pattern at orders {bound_violations:?}; samples may alias");
    }
    Ok(CauchyCoefficients { radius, coefficients, bound_violations })
}

#[derive(Debug, Clone, Serialize)]
pub struct ParityRow {
    pub g: f64,
    pub e_plus: f64,
    pub e_minus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParityReport {
    /// `max |(-1)^N H(g) (-1)^N - H(-g)|` over the samples.
    pub conjugation_residual: f64,
    pub max_energy_asymmetry: f64,
    pub rows: Vec<ParityRow>,
}

/// Checks `(-1)^N H(g) (-1)^N = H(-g)` and `E(g) = E(-g)` at each sample.
pub fn parity_check(model: &DiscretizedModel, g_samples: &[f64]) -> Result<ParityReport> {
    let ops = ModelOperators::new(model)?;
    let parity = fock::number_parity(&ops.basis);
    let nb = ops.basis.len();
    let sign = |i: usize| parity[i % nb];
    let mut conjugation_residual: f64 = 0.0;
    let mut rows = Vec::new();
    for &g in g_samples {
        let h = ops.hamiltonian(re(g));
        let conj = CMat::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] * (sign(i) * sign(j)));
        conjugation_residual = conjugation_residual.max(max_abs(&(conj - ops.hamiltonian(re(-g)))));
        let e_plus = ed_ground_ops(&ops, g)?.energy;
        let e_minus = ed_ground_ops(&ops, -g)?.energy;
        rows.push(ParityRow { g, e_plus, e_minus });
    }
    let max_energy_asymmetry = rows.iter().map(|r| (r.e_plus - r.e_minus).abs()).fold(0.0, f64::max);
    Ok(ParityReport { conjugation_residual, max_energy_asymmetry, rows })
}

/// Second-order coefficient `<Phi, C_2 Phi> - sum_k |<k, C_1 Phi>|^2 / (E_k - E_0)`
/// over the eigenstates of `H_0` on the full truncated space.
pub fn second_order_energy(model: &DiscretizedModel) -> Result<f64> {
    let ops = ModelOperators::new(model)?;
    let phi = ops.product_vector(&model.atomic.ground_vector(), 0);
    let (values, vectors) = hermitian_eigh(&ops.h0);
    let e0 = model.e_at();
    let mut e2 = 0.0;
    if let Some(c2) = ops.couplings.get(&2) {
        e2 += phi.dotc(&(c2 * &phi)).re;
    }
    if let Some(c1) = ops.couplings.get(&1) {
        let v = c1 * &phi;
        for (k, &ek) in values.iter().enumerate() {
            let amp = vectors.column(k).dotc(&v);
            if (ek - e0).abs() < tolerances::LEVEL_MERGE {
                if amp.norm() > tolerances::EXACT {
                    return Err(Error::DegenerateGroundState { gap: ek - e0 });
                }
                continue;
            }
            e2 -= amp.norm_sqr() / (ek - e0);
        }
    }
    Ok(e2)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub g: f64,
    pub sigma: f64,
    pub energy: f64,
    pub residual: f64,
    /// Overlap with the previous row's ground vector, 1 for the first row.
    pub overlap: f64,
}

/// Exact diagonalization over a `(g, sigma)` grid; rows ordered by sweep index.
pub fn sweep(model: &DiscretizedModel, g_values: &[f64], sigma_values: &[f64]) -> Result<Vec<OracleRow>> {
    let points: Vec<(f64, f64)> = sigma_values
        .iter()
        .flat_map(|&s| g_values.iter().map(move |&g| (g, s)))
        .collect();
    let results: Vec<Result<(f64, f64, EdResult)>> = points
        .par_iter()
        .map(|&(g, s)| {
            let m = apply_ir_cutoff(model, s)?;
            Ok((g, s, ed_ground(&m, g)?))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut prev: Option<CVec> = None;
    for r in results {
        let (g, sigma, ed) = r?;
        let ov = prev.as_ref().map_or(1.0, |p| overlap(p, &ed.vector));
        rows.push(OracleRow { g, sigma, energy: ed.energy, residual: ed.residual, overlap: ov });
        prev = Some(ed.vector);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationRow {
    pub n_max: usize,
    pub dim: usize,
    pub energy: f64,
    /// `|E(n_max) - E(n_max - 1)|`, zero for the first row.
    pub change: f64,
}

/// Ground energy as the photon-number cap grows from `from` to `to`.
pub fn truncation_study(model: &DiscretizedModel, g: f64, from: usize, to: usize) -> Result<Vec<TruncationRow>> {
    let mut rows: Vec<TruncationRow> = Vec::new();
    for n_max in from..=to {
        let mut m = model.clone();
        m.n_max = n_max;
        let ed = ed_ground(&m, g)?;
        let change = rows.last().map_or(0.0, |r| (ed.energy - r.energy).abs());
        rows.push(TruncationRow { n_max, dim: ed.dim, energy: ed.energy, change });
    }
    Ok(rows)
}

/// Least-squares slope of `log |remainder|` against `log |g|`.
pub fn log_log_slope(g: &[f64], remainder: &[f64]) -> f64 {
    let xs: Vec<f64> = g.iter().map(|x| x.abs().ln()).collect();
    let ys: Vec<f64> = remainder.iter().map(|y| y.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
