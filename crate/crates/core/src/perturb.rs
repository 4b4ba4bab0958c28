//! Rayleigh-Schroedinger perturbation theory with an infrared cutoff: contour
//! projections, series coefficients and the energy quotient.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::initial::InitialStage;
use crate::linalg::{hermitian_eigh, max_abs, re, CMat, CVec, C64};
use crate::model::{apply_ir_cutoff, DiscretizedModel, ModelOperators};
use crate::oracle::{self, cauchy_coefficients, circle_points};
use crate::rg::{self, RGConfig};
use crate::tolerances;

/// Default series order.
pub const DEFAULT_MAX_ORDER: usize = 8;

/// Largest order accepted by [`rs_coefficients`].
pub const ORDER_CAP: usize = 24;

/// Resolvent condition number above which a node counts as sitting on the spectrum.
const CONDITION_CAP: f64 = 1e13;

/// Default contour radius `0.4 min(1, sigma)`.
pub fn default_radius(sigma: f64) -> f64 {
    0.4 * sigma.min(1.0)
}

/// Operators restricted to the modes at or above the infrared cutoff.
#[derive(Debug, Clone)]
pub struct PlusSpace {
    pub model: DiscretizedModel,
    pub ops: ModelOperators,
    /// `phi_at (x) Omega`.
    pub phi: CVec,
    /// Eigen-decomposition of `H_0`.
    h0_values: Vec<f64>,
    h0_vectors: CMat,
}

impl PlusSpace {
    /// `model` must already carry its infrared cutoff; returns `None` when no mode couples.
    pub fn new(model: &DiscretizedModel) -> Result<Option<Self>> {
        if model.active_modes().is_empty() {
            return Ok(None);
        }
        let model = model.active_part()?;
        let ops = ModelOperators::new(&model)?;
        let phi = ops.product_vector(&model.atomic.ground_vector(), 0);
        let (h0_values, h0_vectors) = hermitian_eigh(&ops.h0);
        Ok(Some(PlusSpace { model, ops, phi, h0_values, h0_vectors }))
    }

    pub fn dim(&self) -> usize {
        self.ops.dim()
    }

    /// `(H_0 - z)^{-1} v`.
    fn free_resolvent(&self, z: C64, v: &CVec) -> CVec {
        let mut c = self.h0_vectors.adjoint() * v;
        for (x, &e) in c.iter_mut().zip(&self.h0_values) {
            *x /= re(e) - z;
        }
        &self.h0_vectors * c
    }

    /// `(H_0 - z)^{-1}` as a matrix.
    fn free_resolvent_matrix(&self, z: C64) -> CMat {
        let mut right = self.h0_vectors.adjoint();
        for (i, &e) in self.h0_values.iter().enumerate() {
            let f = re(1.0) / (re(e) - z);
            for x in right.row_mut(i).iter_mut() {
                *x *= f;
            }
        }
        &self.h0_vectors * right
    }

    fn nodes(&self, epsilon: f64, n_quad: usize) -> Vec<(C64, C64)> {
        let e_at = self.model.e_at();
        (0..n_quad)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n_quad as f64;
                let u = C64::from_polar(1.0, theta);
                // -(1/2 pi i) dz -> -(epsilon / n_quad) e^{i theta}
                (re(e_at) + u * epsilon, -u * (epsilon / n_quad as f64))
            })
            .collect()
    }

    fn coupling(&self, p: u32) -> Option<&CMat> {
        self.ops.couplings.get(&p)
    }
}

fn check_contour(model: &DiscretizedModel, epsilon: f64, n_quad: usize) -> Result<()> {
    let sigma = model.modes.ir_cutoff;
    if !(sigma > 0.0) {
        return Err(Error::Config("contour projection needs an infrared cutoff sigma > 0".into()));
    }
    let limit = model.atomic.gap().min(sigma) / 2.0;
    if !(epsilon > 0.0 && epsilon < limit) {
        return Err(Error::Config(format!("contour radius {epsilon} must lie in (0, {limit})")));
    }
    if n_quad < 8 {
        return Err(Error::Config(format!("{n_quad} contour nodes; at least 8 are required")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ContourProjection {
    /// The projection on the active-mode space.
    pub matrix: CMat,
    pub trace: C64,
    /// `max |P^2 - P|`.
    pub idempotency: f64,
    pub max_condition: f64,
}

/// Trapezoid rule for `-(1/2 pi i) \oint (H(g) - z)^{-1} dz` on `|z - E_at| = epsilon`.
pub fn contour_projection(model: &DiscretizedModel, g: C64, epsilon: f64, n_quad: usize) -> Result<ContourProjection> {
    check_contour(model, epsilon, n_quad)?;
    let Some(space) = PlusSpace::new(model)? else {
        let p = model.atomic.ground_projection();
        return Ok(ContourProjection { trace: p.trace(), matrix: p, idempotency: 0.0, max_condition: 1.0 });
    };
    let h = space.ops.hamiltonian(g);
    let n = space.dim();
    let terms: Vec<Result<(CMat, f64)>> = space
        .nodes(epsilon, n_quad)
        .into_par_iter()
        .enumerate()
        .map(|(node, (z, w))| {
            let a = &h - CMat::identity(n, n) * z;
            let inv = a.clone().lu().try_inverse().ok_or(Error::ContourHitsSpectrum { node, condition: f64::INFINITY })?;
            let condition = a.norm() * inv.norm();
            if !(condition < CONDITION_CAP) {
                return Err(Error::ContourHitsSpectrum { node, condition });
            }
            Ok((inv * w, condition))
        })
        .collect();
    let mut matrix = CMat::zeros(n, n);
    let mut max_condition: f64 = 0.0;
    for t in terms {
        let (m, c) = t?;
        matrix += m;
        max_condition = max_condition.max(c);
    }
    let trace = matrix.trace();
    if (trace - re(1.0)).norm() > 1e-6 {
        return Err(Error::RankNotOne { trace: trace.re });
    }
    let idempotency = max_abs(&(&matrix * &matrix - &matrix));
    Ok(ContourProjection { matrix, trace, idempotency, max_condition })
}

#[derive(Debug, Clone, Serialize)]
pub struct RsCoefficients {
    pub sigma: f64,
    pub epsilon: f64,
    pub n_quad: usize,
    /// `E^(n)`, n = 0..=max_order.
    pub energies: Vec<C64>,
    /// `<Phi, P^(n) Phi>`.
    pub denominators: Vec<C64>,
    /// `<Phi, (H P)^(n) Phi>`.
    pub numerators: Vec<C64>,
    /// `P^(n) Phi` on the active-mode space.
    #[serde(skip)]
    pub vectors: Vec<CVec>,
}

impl RsCoefficients {
    /// Partial sum `sum_{n <= order} E^(n) g^n`.
    pub fn energy(&self, g: C64, order: usize) -> C64 {
        self.energies.iter().take(order + 1).rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * g + c)
    }

    /// CSV rows `(order, Re, Im, sigma)`.
    pub fn csv_rows(&self) -> Vec<(usize, f64, f64, f64)> {
        self.energies.iter().enumerate().map(|(n, e)| (n, e.re, e.im, self.sigma)).collect()
    }
}

fn check_order(max_order: usize) -> Result<()> {
    if max_order > ORDER_CAP {
        return Err(Error::Config(format!("order {max_order} exceeds the series cap {ORDER_CAP}")));
    }
    Ok(())
}

/// Series coefficients of the projection applied to `phi_at (x) Omega` and of the
/// energy quotient `<Phi, H P Phi> / <Phi, P Phi>`, with the default contour.
pub fn rs_coefficients(model: &DiscretizedModel, sigma: f64, max_order: usize) -> Result<RsCoefficients> {
    rs_coefficients_with(model, sigma, max_order, default_radius(sigma), tolerances::CONTOUR_NODES)
}

pub fn rs_coefficients_with(
    model: &DiscretizedModel,
    sigma: f64,
    max_order: usize,
    epsilon: f64,
    n_quad: usize,
) -> Result<RsCoefficients> {
    check_order(max_order)?;
    let cut = apply_ir_cutoff(model, sigma)?;
    check_contour(&cut, epsilon, n_quad)?;
    let Some(space) = PlusSpace::new(&cut)? else {
        let mut energies = vec![C64::new(0.0, 0.0); max_order + 1];
        energies[0] = re(cut.e_at());
        let mut denominators = vec![C64::new(0.0, 0.0); max_order + 1];
        denominators[0] = re(1.0);
        return Ok(RsCoefficients {
            sigma,
            epsilon,
            n_quad,
            numerators: energies.clone(),
            energies,
            denominators,
            vectors: Vec::new(),
        });
    };
    let n = space.dim();
    let partials: Vec<Vec<CVec>> = space
        .nodes(epsilon, n_quad)
        .into_par_iter()
        .map(|(z, w)| {
            // r_n = -sum_p R0 C_p r_{n-p}, r_0 = R0 Phi
            let mut r: Vec<CVec> = vec![space.free_resolvent(z, &space.phi)];
            for order in 1..=max_order {
                let mut acc = CVec::zeros(n);
                for p in 1..=order {
                    if let Some(c) = space.coupling(p as u32) {
                        acc -= c * &r[order - p];
                    }
                }
                r.push(space.free_resolvent(z, &acc));
            }
            r.into_iter().map(|v| v * w).collect()
        })
        .collect();
    let mut vectors = vec![CVec::zeros(n); max_order + 1];
    for node in partials {
        for (acc, v) in vectors.iter_mut().zip(node) {
            *acc += v;
        }
    }
    let phi = &space.phi;
    let denominators: Vec<C64> = vectors.iter().map(|v| phi.dotc(v)).collect();
    let numerators: Vec<C64> = (0..=max_order)
        .map(|k| {
            let mut s = phi.dotc(&(&space.ops.h0 * &vectors[k]));
            for p in 1..=k {
                if let Some(c) = space.coupling(p as u32) {
                    s += phi.dotc(&(c * &vectors[k - p]));
                }
            }
            s
        })
        .collect();
    let d0 = denominators[0];
    if d0.norm() < 0.5 {
        return Err(Error::DenominatorTooSmall { value: d0.norm() });
    }
    let mut energies: Vec<C64> = Vec::with_capacity(max_order + 1);
    for k in 0..=max_order {
        let mut s = numerators[k];
        for j in 1..=k {
            s -= denominators[j] * energies[k - j];
        }
        energies.push(s / d0);
    }
    Ok(RsCoefficients { sigma, epsilon, n_quad, energies, denominators, numerators, vectors })
}

/// Coefficient matrices `P^(n)` of the projection on the active-mode space.
pub fn rs_projection_matrices(
    model: &DiscretizedModel,
    sigma: f64,
    max_order: usize,
    epsilon: f64,
    n_quad: usize,
) -> Result<Vec<CMat>> {
    check_order(max_order)?;
    let cut = apply_ir_cutoff(model, sigma)?;
    check_contour(&cut, epsilon, n_quad)?;
    let Some(space) = PlusSpace::new(&cut)? else {
        let p = cut.atomic.ground_projection();
        let mut out = vec![p.clone() * re(0.0); max_order + 1];
        out[0] = p;
        return Ok(out);
    };
    let n = space.dim();
    let partials: Vec<Vec<CMat>> = space
        .nodes(epsilon, n_quad)
        .into_par_iter()
        .map(|(z, w)| {
            let r0 = space.free_resolvent_matrix(z);
            let mut r: Vec<CMat> = vec![r0.clone()];
            for order in 1..=max_order {
                let mut acc = CMat::zeros(n, n);
                for p in 1..=order {
                    if let Some(c) = space.coupling(p as u32) {
                        acc -= c * &r[order - p];
                    }
                }
                r.push(&r0 * acc);
            }
            r.into_iter().map(|m| m * w).collect()
        })
        .collect();
    let mut out = vec![CMat::zeros(n, n); max_order + 1];
    for node in partials {
        for (acc, m) in out.iter_mut().zip(node) {
            *acc += m;
        }
    }
    Ok(out)
}

/// Least-squares fit of `log |a_n| = log C0 + n log R` over the nonzero entries.
pub fn fit_geometric_bound(values: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 1e-300)
        .map(|(n, v)| (n as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    // lift the intercept so the fit bounds every point
    let lift = pts.iter().map(|p| p.1 - slope * p.0).fold(f64::NEG_INFINITY, f64::max);
    Some((lift.exp(), slope.exp()))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MatchOptions {
    /// Radius of the circle of complex couplings sampled by the RG.
    pub radius: f64,
    pub samples: usize,
    pub rg: RGConfig,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions { radius: 0.5, samples: 32, rg: RGConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchRow {
    pub order: usize,
    pub rg: C64,
    pub rs: C64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    pub sigma: f64,
    pub radius: f64,
    pub samples: usize,
    pub rows: Vec<MatchRow>,
    /// Largest modulus of an odd-order coefficient from either route.
    pub max_odd: f64,
    pub aliasing_warning: bool,
}

impl MatchReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max)
    }
}

/// RG energies on `|g| = radius`, in sample order.
pub fn rg_circle(stage: &InitialStage, radius: f64, samples: usize, config: &RGConfig) -> Result<Vec<C64>> {
    circle_points(radius, samples)
        .into_par_iter()
        .map(|g| rg::iterate(stage, g, config).map(|o| o.energy))
        .collect()
}

/// Taylor coefficients of the RG energy against the series coefficients, order by order.
pub fn coefficient_match(model: &DiscretizedModel, sigma: f64, orders: usize, options: &MatchOptions) -> Result<MatchReport> {
    let cut = apply_ir_cutoff(model, sigma)?;
    let rs = rs_coefficients(model, sigma, orders)?;
    let stage = InitialStage::new(&cut, options.rg.xi)?;
    let energies = rg_circle(&stage, options.radius, options.samples, &options.rg)?;
    let cauchy = cauchy_coefficients(&energies, options.radius, orders)?;
    let rows: Vec<MatchRow> = (0..=orders)
        .map(|order| {
            let rg = cauchy.coefficients[order];
            let rs = rs.energies[order];
            MatchRow { order, rg, rs, discrepancy: (rg - rs).norm() }
        })
        .collect();
    let max_odd = rows
        .iter()
        .filter(|r| r.order % 2 == 1)
        .map(|r| r.rg.norm().max(r.rs.norm()))
        .fold(0.0, f64::max);
    Ok(MatchReport {
        sigma,
        radius: options.radius,
        samples: options.samples,
        rows,
        max_odd,
        aliasing_warning: cauchy.aliasing_warning(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanOptions {
    pub rg: RGConfig,
    /// Circle radius and sample count for the second-order coefficient; `samples = 0` skips it.
    pub radius: f64,
    pub samples: usize,
    /// Size above which a growing difference between successive grid points is flagged.
    pub jump_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { rg: RGConfig::default(), radius: 0.25, samples: 16, jump_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaRow {
    pub sigma: f64,
    pub energy: f64,
    pub energy_ed: f64,
    /// `|E(sigma_{k-1}) - E(sigma_k)|`, zero on the first row.
    pub difference: f64,
    /// Overlap of the RG eigenvector with the previous row's.
    pub overlap: f64,
    pub e2_rg: Option<f64>,
    pub e2_rs: Option<f64>,
    /// `|E2(sigma_{k-1}) - E2(sigma_k)|` from the RG route.
    pub e2_difference: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaScan {
    pub g: f64,
    pub rows: Vec<SigmaRow>,
    /// Indices `k` where the difference grows from row `k-1` to row `k`.
    pub jumps: Vec<usize>,
}

impl SigmaScan {
    /// Whether the successive differences decrease over the rows whose
    /// previous grid point lies at or below `threshold`.
    pub fn monotone_below(&self, threshold: f64) -> bool {
        let d: Vec<f64> = self
            .rows
            .windows(2)
            .filter(|w| w[0].sigma <= threshold)
            .map(|w| w[1].difference)
            .collect();
        d.windows(2).all(|p| p[1] <= p[0])
    }

    /// `e2_difference` of the last row.
    pub fn finest_e2_difference(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.e2_difference)
    }
}

struct SigmaPoint {
    energy: f64,
    energy_ed: f64,
    psi: CVec,
    e2_rg: Option<f64>,
    e2_rs: Option<f64>,
}

fn scan_point(model: &DiscretizedModel, g: f64, sigma: f64, options: &ScanOptions) -> Result<SigmaPoint> {
    let cut = apply_ir_cutoff(model, sigma)?;
    let stage = InitialStage::new(&cut, options.rg.xi)?;
    let outcome = rg::iterate(&stage, re(g), &options.rg)?;
    let psi = rg::eigenvector(&stage, &outcome, re(g))?.psi;
    let energy_ed = oracle::ed_ground_ops(&stage.ops, g)?.energy;
    let e2_rg = if options.samples > 0 {
        let energies = rg_circle(&stage, options.radius, options.samples, &options.rg)?;
        Some(cauchy_coefficients(&energies, options.radius, 2)?.coefficients[2].re)
    } else {
        None
    };
    let e2_rs = if sigma > 0.0 { Some(rs_coefficients(model, sigma, 2)?.energies[2].re) } else { None };
    Ok(SigmaPoint { energy: outcome.energy.re, energy_ed, psi, e2_rg, e2_rs })
}

/// RG energies, eigenvector overlaps and second-order coefficients along a
/// descending grid of infrared cutoffs ending at 0.
pub fn sigma_continuity_scan(model: &DiscretizedModel, g: f64, sigma_grid: &[f64], options: &ScanOptions) -> Result<SigmaScan> {
    if sigma_grid.is_empty() || sigma_grid.windows(2).any(|w| w[1] >= w[0]) || *sigma_grid.last().unwrap() != 0.0 {
        return Err(Error::Config("sigma grid must descend strictly to 0".into()));
    }
    let points: Vec<Result<SigmaPoint>> =
        sigma_grid.par_iter().map(|&s| scan_point(model, g, s, options)).collect();
    let mut rows: Vec<SigmaRow> = Vec::new();
    let mut prev: Option<SigmaPoint> = None;
    for (&sigma, p) in sigma_grid.iter().zip(points) {
        let p = p?;
        let (difference, overlap, e2_difference) = match &prev {
            None => (0.0, 1.0, None),
            Some(q) => (
                (p.energy - q.energy).abs(),
                oracle::overlap(&q.psi, &p.psi),
                p.e2_rg.zip(q.e2_rg).map(|(a, b)| (a - b).abs()),
            ),
        };
        rows.push(SigmaRow {
            sigma,
            energy: p.energy,
            energy_ed: p.energy_ed,
            difference,
            overlap,
            e2_rg: p.e2_rg,
            e2_rs: p.e2_rs,
            e2_difference,
        });
        prev = Some(p);
    }
    let jumps = (2..rows.len())
        .filter(|&k| rows[k].difference > rows[k - 1].difference && rows[k].difference > options.jump_tol)
        .collect();
    Ok(SigmaScan { g, rows, jumps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    #[test]
    fn free_projection_is_ground_projector() {
        let m = apply_ir_cutoff(&testkit::tls1(), 0.3).unwrap();
        let p = contour_projection(&m, re(0.0), 0.12, 32).unwrap();
        let space = PlusSpace::new(&m).unwrap().unwrap();
        let expect = &space.phi * space.phi.adjoint();
        assert!(max_abs(&(p.matrix - expect)) <= 1e-12);
    }

    #[test]
    fn projection_trace_and_quadrature_convergence() {
        let m = apply_ir_cutoff(&testkit::tls1(), 0.3).unwrap();
        let p32 = contour_projection(&m, re(0.01), 0.12, 32).unwrap();
        let p64 = contour_projection(&m, re(0.01), 0.12, 64).unwrap();
        assert!((p32.trace - re(1.0)).norm() <= 1e-8);
        assert!(max_abs(&(p32.matrix - &p64.matrix)) <= 1e-10);
        assert!(p64.idempotency <= 1e-10);
    }

    #[test]
    fn contour_preconditions() {
        let tls = testkit::tls1();
        assert!(contour_projection(&tls, re(0.01), 0.1, 32).is_err());
        let m = apply_ir_cutoff(&tls, 0.3).unwrap();
        assert!(contour_projection(&m, re(0.01), 0.2, 32).is_err());
        assert!(contour_projection(&m, re(0.01), 0.1, 4).is_err());
    }

    #[test]
    fn tls1_coefficients() {
        let m = testkit::tls1();
        let c = rs_coefficients(&m, 0.3, 8).unwrap();
        assert!((c.energies[0] - re(m.e_at())).norm() <= 1e-14);
        let e2 = oracle::second_order_energy(&m).unwrap();
        assert!((c.energies[2] - re(e2)).norm() <= 1e-12);
        for n in (1..=8).step_by(2) {
            assert!(c.energies[n].norm() <= 1e-12, "order {n}: {}", c.energies[n]);
        }
    }

    #[test]
    fn quadratic_couplings_enter_second_order() {
        let m = testkit::three_level();
        let c = rs_coefficients(&m, 0.3, 4).unwrap();
        let e2 = oracle::second_order_energy(&m).unwrap();
        assert!((c.energies[2] - re(e2)).norm() <= 1e-12);
        assert!(c.energies[1].norm() <= 1e-12 && c.energies[3].norm() <= 1e-12);
    }

    #[test]
    fn series_matches_exact_diagonalization() {
        let m = testkit::three_level();
        let c = rs_coefficients(&m, 0.3, 6).unwrap();
        let cut = apply_ir_cutoff(&m, 0.3).unwrap();
        let gs = [0.02, 0.04, 0.08];
        let rem: Vec<f64> = gs
            .iter()
            .map(|&g| oracle::ed_ground(&cut, g).unwrap().energy - c.energy(re(g), 4).re)
            .collect();
        let slope = oracle::log_log_slope(&gs, &rem);
        assert!((slope - 6.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn projection_matrices_agree_with_vectors() {
        let m = testkit::tls1();
        let mats = rs_projection_matrices(&m, 0.3, 4, 0.12, 64).unwrap();
        let c = rs_coefficients_with(&m, 0.3, 4, 0.12, 64).unwrap();
        let space = PlusSpace::new(&apply_ir_cutoff(&m, 0.3).unwrap()).unwrap().unwrap();
        for (mat, v) in mats.iter().zip(&c.vectors) {
            assert!((mat * &space.phi - v).norm() <= 1e-12);
            assert!(max_abs(&(mat - mat.adjoint())) <= 1e-12);
        }
        let g = C64::new(0.01, 0.02);
        let sum = |g: C64| mats.iter().rev().fold(mats[0].clone() * re(0.0), |acc, m| acc * g + m);
        assert!(max_abs(&(sum(g).adjoint() - sum(g.conj()))) <= 1e-14);
        let p = contour_projection(&apply_ir_cutoff(&m, 0.3).unwrap(), re(0.01), 0.12, 64).unwrap();
        assert!(max_abs(&(sum(re(0.01)) - p.matrix)) <= 1e-9);
    }

    #[test]
    fn fully_decoupled_series() {
        let m = testkit::tls1();
        let c = rs_coefficients_with(&m, 1.0, 4, 0.4, 16).unwrap();
        assert_eq!(c.energies[0], re(m.e_at()));
        assert!(c.energies[1..].iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn geometric_fit_bounds_points() {
        let v = [1.0, 0.4, 0.3, 0.05];
        let (c0, r) = fit_geometric_bound(&v).unwrap();
        for (n, x) in v.iter().enumerate() {
            assert!(*x <= c0 * r.powi(n as i32) * (1.0 + 1e-12));
        }
    }
}
