//! The renormalization map `R_rho` and its iteration to the ground-state
//! energy and eigenvector.
//!
//! Each step takes the member `w(zeta)` of a kernel family, applies the
//! Feshbach map for `chi_rho = chi1(H_f / rho)` on the frame's reduced space,
//! keeps the states with field energy at most `rho`, rescales by `1/rho` and
//! reads the result as the member of the next family at
//! `z = E_rho[w](zeta) = -w_{0,0}(zeta, 0) / rho`. The chain is parameterized
//! forward from the initial spectral parameter; `e0` is the initial parameter
//! for which the terminal stage is singular.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feshbach::{feshbach_map, neumann_tail_bound, q_operator, validate_pair, PairNorms};
use crate::initial::{chi1, chibar1, InitialStage};
use crate::kernels::{ball_report, reconstruct, BallReport, Frame, KernelSequence};
use crate::linalg::{diag, re, CMat, CVec, C64};
use crate::model::DiscretizedModel;
use crate::tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RGConfig {
    pub rho: f64,
    pub xi: f64,
    pub epsilon0: f64,
    pub max_iterations: usize,
    pub energy_tol: f64,
    pub kernel_tol: f64,
    pub zero_tol: f64,
    /// Neumann terms in the logged series.
    pub l_max: usize,
}

impl Default for RGConfig {
    fn default() -> Self {
        RGConfig {
            rho: 0.25,
            xi: 0.25,
            epsilon0: 0.25 / 16.0,
            max_iterations: 60,
            energy_tol: tolerances::RG_ENERGY,
            kernel_tol: tolerances::RG_KERNEL,
            zero_tol: tolerances::ZERO_LINEAR,
            l_max: crate::initial::DEFAULT_L_MAX,
        }
    }
}

impl RGConfig {
    /// Checks `rho <= 1/4`, `xi <= 1/4`, `epsilon0 <= rho/8`.
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 0.25) {
            return Err(Error::Config(format!("rho = {} must lie in (0, 1/4]", self.rho)));
        }
        if !(self.xi > 0.0 && self.xi <= 0.25) {
            return Err(Error::Config(format!("xi = {} must lie in (0, 1/4]", self.xi)));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0 <= self.rho / 8.0) {
            return Err(Error::Config(format!("epsilon0 = {} must lie in (0, rho/8]", self.epsilon0)));
        }
        Ok(())
    }
}

/// `E_rho[w](z) = -w_{0,0}(z, 0) / rho` for the member `w = w(z)`.
pub fn energy_map(w: &KernelSequence, rho: f64) -> C64 {
    -w.w00(0.0) / rho
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySample {
    pub z: C64,
    pub e: C64,
    /// `|E[w](z)| < rho/2`.
    pub in_domain: bool,
}

pub fn energy_map_table(family: &[KernelSequence], rho: f64) -> Vec<EnergySample> {
    family
        .iter()
        .map(|w| {
            let e = energy_map(w, rho);
            EnergySample { z: w.z, e, in_domain: (e * rho).norm() < rho / 2.0 }
        })
        .collect()
}

/// Solves `-w00(zeta) / rho = target` for `zeta`, where `w00(zeta)` is
/// `w_{0,0}(zeta, 0)` of the family. Newton from `rho * target` with a
/// central-difference derivative, then bisection on the real section.
pub fn invert_energy_map(
    w00: impl Fn(C64) -> Result<C64>,
    rho: f64,
    target: C64,
    tol: f64,
    max_iter: usize,
) -> Result<(C64, usize)> {
    if target.norm() >= 0.5 {
        return Err(Error::OutOfDomain { z: target });
    }
    let f = |z: C64| -> Result<C64> { Ok(-w00(z)? / rho - target) };
    let mut z = target * rho;
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let v = f(z)?;
        residual = v.norm();
        if residual <= tol {
            return check_domain(z, it);
        }
        let h = 1e-6 * z.norm().max(1.0) * rho;
        let d = (f(z + h)? - f(z - h)?) / (2.0 * h);
        if d.norm() == 0.0 {
            break;
        }
        z -= v / d;
        if z.norm() >= 0.5 {
            return Err(Error::OutOfDomain { z });
        }
    }
    if target.im == 0.0 {
        let (mut lo, mut hi) = (-0.5 + 1e-12, 0.5 - 1e-12);
        let (flo, fhi) = (f(re(lo))?.re, f(re(hi))?.re);
        if flo * fhi < 0.0 {
            let sign_lo = flo.signum();
            for it in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = f(re(mid))?.re;
                if fm.abs() <= tol || hi - lo < 1e-16 {
                    return check_domain(re(mid), max_iter + it);
                }
                if fm.signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

fn check_domain(z: C64, it: usize) -> Result<(C64, usize)> {
    if z.norm() >= 0.5 {
        Err(Error::OutOfDomain { z })
    } else {
        Ok((z, it))
    }
}

/// Diagonal `chi_rho` and `chibar_rho` on a frame's reduced basis.
pub fn chi_rho(frame: &Frame, rho: f64) -> (CMat, CMat) {
    let e = frame.basis.energies();
    let chi: Vec<C64> = e.iter().map(|&r| re(chi1(r / rho))).collect();
    let bar: Vec<C64> = e.iter().map(|&r| re(chibar1(r / rho))).collect();
    (diag(&chi), diag(&bar))
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub z_in: C64,
    pub z_out: C64,
    pub modes: usize,
    pub dim_in: usize,
    pub dim_out: usize,
    pub ball_in: BallReport,
    pub gamma_in: f64,
    pub gamma_out: f64,
    /// `gamma_out / gamma_in`, 0 when `gamma_in` vanishes.
    pub gamma_ratio: f64,
    pub linear_out: f64,
    pub norms: PairNorms,
    pub neumann_tail: f64,
}

/// One step with what the eigenvector reconstruction needs.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub next: KernelSequence,
    pub record: StepRecord,
    /// `Q_chi_rho` on the input frame.
    pub q: CMat,
    /// Index in the input basis of each output basis state.
    pub embedding: Vec<usize>,
}

/// `R_rho` applied to the member `w = w(zeta)`, `zeta = w.z`.
pub fn rg_step(w: &KernelSequence, config: &RGConfig, step: usize) -> Result<StepOutput> {
    let rho = config.rho;
    let frame = &w.frame;
    let h = w.assemble()?;
    let t = match w.component(0, 0) {
        Some(k) => k.assemble(),
        None => CMat::zeros(h.nrows(), h.ncols()),
    };
    let (chi, chibar) = chi_rho(frame, rho);
    let wrap = |e: Error| Error::FeshbachPairInvalid { step, source: Box::new(e) };
    let pair = validate_pair(&h, &t, &chi, &chibar).map_err(wrap)?;
    let f = feshbach_map(&pair).map_err(wrap)?;
    let neumann_tail = neumann_tail_bound(&pair, config.l_max);
    let q = q_operator(&pair).map_err(wrap)?;
    let (child, keep) = frame.dilate(rho)?;
    let mut embedding = Vec::with_capacity(child.basis.len());
    for s in child.basis.states() {
        let mut occ = vec![0u8; frame.len()];
        for (i, &k) in s.iter().enumerate() {
            occ[keep[i]] = k;
        }
        embedding.push(frame.basis.lookup(&occ).ok_or_else(|| {
            Error::InternalInvariantViolation("dilated state missing from the parent basis".into())
        })?);
    }
    let n = embedding.len();
    let m = CMat::from_fn(n, n, |i, j| f[(embedding[i], embedding[j])] / rho);
    let z_out = energy_map(w, rho);
    let next = reconstruct(&m, Arc::new(child), z_out, w.xi)?;
    let gamma_in = w.gamma();
    let gamma_out = next.gamma();
    let eps = config.epsilon0;
    let record = StepRecord {
        step,
        z_in: w.z,
        z_out,
        modes: frame.len(),
        dim_in: frame.basis.len(),
        dim_out: n,
        ball_in: ball_report(std::slice::from_ref(w), (eps, eps, eps), config.zero_tol),
        gamma_in,
        gamma_out,
        gamma_ratio: if gamma_in > 0.0 { gamma_out / gamma_in } else { 0.0 },
        linear_out: next.linear_norm(),
        norms: pair.norms,
        neumann_tail,
    };
    Ok(StepOutput { next, record, q, embedding })
}

/// The chain started at `z0`, run until `depth` steps are done or a terminal
/// stage is reached.
#[derive(Debug, Clone)]
pub struct Chain {
    pub z0: C64,
    pub w0: KernelSequence,
    pub steps: Vec<StepOutput>,
}

impl Chain {
    /// The last member reached.
    pub fn last(&self) -> &KernelSequence {
        self.steps.last().map(|s| &s.next).unwrap_or(&self.w0)
    }

    /// `-rho^n w^(n)_{0,0}(z_n, 0)` for the last member, which vanishes at `e0`
    /// and behaves like `z0 - e0` near it.
    pub fn scaled_residual(&self, rho: f64) -> C64 {
        -self.last().w00(0.0) * rho.powi(self.steps.len() as i32)
    }

    pub fn terminal(&self, config: &RGConfig) -> bool {
        is_terminal(self.last(), config)
    }
}

fn is_terminal(w: &KernelSequence, config: &RGConfig) -> bool {
    w.frame.is_empty() || w.gamma() <= config.kernel_tol
}

pub fn run_chain(stage: &InitialStage, g: C64, z0: C64, depth: usize, config: &RGConfig) -> Result<Chain> {
    let w0 = stage.kernel(g, z0)?.w;
    let mut chain = Chain { z0, w0, steps: Vec::new() };
    while chain.steps.len() < depth && !chain.terminal(config) {
        let out = rg_step(chain.last(), config, chain.steps.len())?;
        chain.steps.push(out);
    }
    Ok(chain)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SearchRecord {
    pub depth: usize,
    pub e: C64,
    pub residual: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub terminal_reason: &'static str,
    /// `|w^(N)_{0,0}(z_N, 0)|` at the terminal stage.
    pub terminal_residual: f64,
    pub terminal_gamma: f64,
    /// Every step with `gamma_in > kernel_tol` had ratio at most `CONTRACTION_RATIO`.
    pub gamma_decay: bool,
    pub max_gamma_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RGTrace {
    pub config: RGConfig,
    pub g: C64,
    pub e_at: f64,
    pub e0: C64,
    /// `E_at + e0`.
    pub energy: C64,
    pub initial_ball: BallReport,
    pub steps: Vec<StepRecord>,
    pub search: Vec<SearchRecord>,
    pub certificate: Certificate,
}

#[derive(Debug, Clone)]
pub struct RGOutcome {
    pub e0: C64,
    pub energy: C64,
    pub chain: Chain,
    pub trace: RGTrace,
}

fn secant(
    eval: &dyn Fn(C64) -> Result<Chain>,
    rho: f64,
    start: Chain,
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Chain, usize)> {
    let mut fb = start.scaled_residual(rho);
    let mut b = start.z0;
    let mut best = start;
    let mut count = 0;
    if fb.norm() <= tol {
        return Ok((best, count));
    }
    let mut a = b;
    let mut fa = fb;
    b += step;
    for _ in 0..max_iter {
        let chain = eval(b)?;
        count += 1;
        let fb_new = chain.scaled_residual(rho);
        if fb_new.norm() <= best.scaled_residual(rho).norm() {
            best = chain;
        }
        fb = fb_new;
        if fb.norm() <= tol || fb == fa || (b - a).norm() <= 1e-16 * b.norm().max(1e-3) {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = c;
    }
    Ok((best, count))
}

/// Runs the RG to the ground-state energy. `e0` is refined depth by depth
/// with secant steps on the scaled terminal residual.
pub fn iterate(stage: &InitialStage, g: C64, config: &RGConfig) -> Result<RGOutcome> {
    config.validate()?;
    let rho = config.rho;
    let mut e = C64::new(0.0, 0.0);
    let mut search = Vec::new();
    let mut depth = 0;
    let chain = loop {
        let eval = |z0: C64| run_chain(stage, g, z0, depth, config);
        let tol = 1e-15 * e.norm().max(1e-2);
        let (chain, evaluations) = secant(&eval, rho, eval(e)?, 1e-3 * rho.powi(depth as i32 + 1), tol, 40)?;
        e = chain.z0;
        search.push(SearchRecord { depth, e, residual: chain.scaled_residual(rho).norm(), evaluations: evaluations + 1 });
        if chain.terminal(config) {
            break chain;
        }
        depth += 1;
        if depth > config.max_iterations {
            return Err(Error::MaxIterations(config.max_iterations));
        }
    };
    let last = chain.last();
    let terminal_residual = last.w00(0.0).norm();
    let mut max_ratio: f64 = 0.0;
    let mut gamma_decay = true;
    let mut consecutive = 0;
    for s in &chain.steps {
        if s.record.gamma_in <= config.kernel_tol {
            continue;
        }
        max_ratio = max_ratio.max(s.record.gamma_ratio);
        if s.record.gamma_ratio > tolerances::CONTRACTION_RATIO {
            gamma_decay = false;
            consecutive += 1;
            if consecutive >= 3 {
                return Err(Error::ContractionLost { step: s.record.step, ratio: s.record.gamma_ratio });
            }
        } else {
            consecutive = 0;
        }
    }
    let eps = config.epsilon0 / 2.0;
    let trace = RGTrace {
        config: *config,
        g,
        e_at: stage.model.e_at(),
        e0: e,
        energy: e + re(stage.model.e_at()),
        initial_ball: ball_report(std::slice::from_ref(&chain.w0), (eps, eps, eps), config.zero_tol),
        steps: chain.steps.iter().map(|s| s.record.clone()).collect(),
        search,
        certificate: Certificate {
            terminal_reason: if last.frame.is_empty() { "empty frame" } else { "kernel tolerance" },
            terminal_residual,
            terminal_gamma: last.gamma(),
            gamma_decay,
            max_gamma_ratio: max_ratio,
        },
    };
    Ok(RGOutcome { e0: e, energy: e + re(stage.model.e_at()), chain, trace })
}

/// Ground-state energy `E_at + e0` of a model already normalized to unit gap.
pub fn ground_energy(model: &DiscretizedModel, g: C64, config: &RGConfig) -> Result<RGOutcome> {
    let stage = InitialStage::new(model, config.xi)?;
    iterate(&stage, g, config)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceProbe {
    pub g: f64,
    pub converged: bool,
    pub error: Option<String>,
    pub max_gamma_ratio: Option<f64>,
}

/// Largest `g_max 2^{-k}` (k < `steps`) at which the iteration converges with
/// every gamma ratio at most the contraction slack.
pub fn convergence_g0(stage: &InitialStage, config: &RGConfig, g_max: f64, steps: usize) -> (Option<f64>, Vec<ConvergenceProbe>) {
    let mut probes = Vec::new();
    for k in 0..steps {
        let g = g_max * 0.5f64.powi(k as i32);
        match iterate(stage, re(g), config) {
            Ok(o) => {
                let ok = o.trace.certificate.gamma_decay;
                let ratio = o.trace.certificate.max_gamma_ratio;
                probes.push(ConvergenceProbe { g, converged: ok, error: None, max_gamma_ratio: Some(ratio) });
                if ok {
                    return (Some(g), probes);
                }
            }
            Err(e) => probes.push(ConvergenceProbe { g, converged: false, error: Some(e.to_string()), max_gamma_ratio: None }),
        }
    }
    (None, probes)
}

#[derive(Debug, Clone)]
pub struct EigenvectorReport {
    pub psi: CVec,
    /// Norm of the reduced-space vector before the initial `Q`.
    pub psi0_norm: f64,
    /// `||(H(g) - E) psi|| / ||psi||`.
    pub residual: f64,
    /// `||psi_k - psi_{k+1}||` for the vectors built from the first `k` steps.
    pub cauchy: Vec<f64>,
}

/// Unwinds `psi = Q_I V Q_0 Q_1 ... Omega` along a converged chain.
pub fn eigenvector(stage: &InitialStage, outcome: &RGOutcome, g: C64) -> Result<EigenvectorReport> {
    let chain = &outcome.chain;
    let zeta = outcome.e0 + re(stage.model.e_at());
    let q_i = stage.q(g, outcome.e0)?;
    let build = |upto: usize| -> CVec {
        let frame = if upto == 0 { &chain.w0.frame } else { &chain.steps[upto - 1].next.frame };
        let mut v = CVec::zeros(frame.basis.len().max(1));
        v[0] = re(1.0);
        for s in chain.steps[..upto].iter().rev() {
            let mut up = CVec::zeros(s.q.nrows());
            for (i, &p) in s.embedding.iter().enumerate() {
                up[p] = v[i];
            }
            v = &s.q * up;
        }
        v
    };
    let n = chain.steps.len();
    let reduced = build(n);
    let psi = &q_i * (&stage.isometry * &reduced);
    let mut cauchy = Vec::new();
    let mut prev: Option<CVec> = None;
    for k in 0..=n {
        let v = &q_i * (&stage.isometry * build(k));
        if let Some(p) = &prev {
            cauchy.push((&v - p).norm());
        }
        prev = Some(v);
    }
    let h = stage.ops.hamiltonian(g) - CMat::identity(stage.ops.dim(), stage.ops.dim()) * zeta;
    let residual = (h * &psi).norm() / psi.norm();
    Ok(EigenvectorReport { psi0_norm: reduced.norm(), psi, residual, cauchy })
}

/// Rank-one `|psi(g)><psi(conj g)| / <psi(conj g), psi(g)>`; the guard `c0`
/// applies to the normalized overlap.
pub fn projection(psi_g: &CVec, psi_gbar: &CVec, c0: f64) -> Result<CMat> {
    let denom = psi_gbar.dotc(psi_g);
    let scale = psi_g.norm() * psi_gbar.norm();
    if scale == 0.0 || denom.norm() / scale < c0 {
        return Err(Error::DenominatorTooSmall { value: if scale == 0.0 { 0.0 } else { denom.norm() / scale } });
    }
    Ok(psi_g * psi_gbar.adjoint() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigh, max_abs};
    use crate::model::PhotonModes;
    use crate::testkit;

    #[test]
    fn config_checks_hypothesis() {
        assert!(RGConfig::default().validate().is_ok());
        let bad = RGConfig { epsilon0: 0.1, ..RGConfig::default() };
        assert!(bad.validate().is_err());
        let bad = RGConfig { rho: 0.3, ..RGConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn free_kernel_is_fixed() {
        let modes = PhotonModes::geometric(0.9, 0.25, 4, 1.0).unwrap();
        let frame = Arc::new(Frame::from_modes(&modes, 2).unwrap());
        let z = C64::new(0.05, 0.01);
        let w = KernelSequence::free(frame.clone(), frame.levels.clone(), z, 0.25);
        let out = rg_step(&w, &RGConfig::default(), 0).unwrap();
        assert!((out.next.z - z / 0.25).norm() < 1e-15);
        let free = KernelSequence::free(out.next.frame.clone(), out.next.grid.clone(), out.next.z, 0.25);
        assert!(out.next.distance(&free) < 1e-12);
        assert!(energy_map(&w, 0.25) == z * 4.0);
    }

    #[test]
    fn inverse_energy_map() {
        let (zeta, _) = invert_energy_map(|z| Ok(-z), 0.25, C64::new(0.2, 0.1), 1e-14, 20).unwrap();
        assert!((zeta - C64::new(0.05, 0.025)).norm() < 1e-15);
        let w00 = |z: C64| Ok(-z + z * z * 0.01);
        let (zeta, it) = invert_energy_map(w00, 0.25, re(0.3), 1e-12, 20).unwrap();
        assert!(it <= 5);
        assert!(((zeta - zeta * zeta * 0.01) / 0.25 - 0.3).norm() <= 1e-12);
        assert!(matches!(invert_energy_map(|z| Ok(-z), 0.25, re(0.6), 1e-12, 20), Err(Error::OutOfDomain { .. })));
        assert!(matches!(
            invert_energy_map(|z| Ok(-z * 0.2), 0.25, re(0.45), 1e-12, 20),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn free_energy_is_zero() {
        let out = ground_energy(&testkit::tls1(), re(0.0), &RGConfig::default()).unwrap();
        assert!(out.e0.norm() < 1e-15);
    }

    fn ed(model: &DiscretizedModel, g: f64) -> f64 {
        let ops = crate::model::ModelOperators::new(model).unwrap();
        hermitian_eigh(&ops.hamiltonian(re(g))).0[0]
    }

    #[test]
    fn tls1_energy_and_vector() {
        let m = testkit::tls1();
        let stage = InitialStage::new(&m, 0.25).unwrap();
        let out = iterate(&stage, re(0.01), &RGConfig::default()).unwrap();
        assert!((out.energy.re - ed(&m, 0.01)).abs() < 1e-12, "{} vs {}", out.energy, ed(&m, 0.01));
        let v = eigenvector(&stage, &out, re(0.01)).unwrap();
        assert!(v.residual < 1e-10);
        assert!(v.psi0_norm <= tolerances::psi0_bound());
        let p = projection(&v.psi, &v.psi, 1e-3).unwrap();
        assert!(max_abs(&(&p * &p - &p)) < 1e-12);
        assert!(max_abs(&(&p - p.adjoint())) < 1e-12);
    }

    #[test]
    fn tls1_convergence_threshold() {
        let stage = InitialStage::new(&testkit::tls1(), 0.25).unwrap();
        let (g0, probes) = convergence_g0(&stage, &RGConfig::default(), 16.0, 5);
        assert_eq!(g0, Some(4.0));
        assert!(probes[0].error.as_deref().unwrap().contains("Neumann"));
    }

    #[test]
    fn ladder_contracts() {
        let m = testkit::rg_ladder();
        let stage = InitialStage::new(&m, 0.25).unwrap();
        let out = iterate(&stage, re(0.02), &RGConfig::default()).unwrap();
        assert!((out.energy.re - ed(&m, 0.02)).abs() < 1e-10);
        let ratios: Vec<f64> = out.trace.steps.iter().map(|s| s.gamma_ratio).collect();
        assert!(ratios.len() >= 10, "{ratios:?}");
        assert!(ratios.iter().all(|&r| r <= tolerances::CONTRACTION_RATIO), "{ratios:?}");
        assert!(out.trace.steps.iter().all(|s| s.linear_out < tolerances::ZERO_LINEAR));
    }
}
