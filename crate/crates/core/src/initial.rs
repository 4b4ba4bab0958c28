//! The initial Feshbach transformation: from the atom-photon Hamiltonian on
//! `C^{d_at} (x) Fock` to a kernel sequence on the reduced photon space.
//!
//! The cutoff pair is `chi = P_at (x) chi1(H_f)` and
//! `chibar = Pbar_at (x) 1 + P_at (x) chibar1(H_f)`. The range of
//! `P_at (x) P_red` is identified with the reduced space through the isometry
//! `V |n> = phi_at (x) |n>`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feshbach::{feshbach_map, neumann_tail_bound, q_operator, validate_pair, FeshbachPair, PairNorms};
use crate::kernels::{ball_report, reconstruct, BallReport, Frame, KernelSequence};
use crate::linalg::{guarded_inverse, op_norm, re, CMat, CVec, C64};
use crate::model::{DiscretizedModel, ModelOperators};
use crate::wick::{normal_order, FactorFn, OpFn, WickProductSpec};

/// Default number of Neumann terms kept in the logged series.
pub const DEFAULT_L_MAX: usize = 6;

fn smoothstep(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}

fn angle(r: f64) -> f64 {
    FRAC_PI_2 * smoothstep((4.0 * r - 3.0).clamp(0.0, 1.0))
}

/// Equal to 1 on `[0, 3/4]`, 0 from 1 on, with `chi1^2 + chibar1^2 = 1`.
pub fn chi1(r: f64) -> f64 {
    angle(r).cos()
}

pub fn chibar1(r: f64) -> f64 {
    angle(r).sin()
}

#[derive(Debug, Clone)]
pub struct InitialCutoffs {
    pub chi_i: CMat,
    pub chibar_i: CMat,
}

/// Assembles the cutoff pair on the model space.
pub fn build_cutoffs(ops: &ModelOperators, ground_projection: &CMat) -> InitialCutoffs {
    let nb = ops.basis.len();
    let d = ops.d_at;
    let dim = ops.dim();
    let mut chi_i = CMat::zeros(dim, dim);
    let mut chibar_i = CMat::zeros(dim, dim);
    for a in 0..d {
        for b in 0..d {
            let p = ground_projection[(a, b)];
            let pbar = if a == b { re(1.0) - p } else { -p };
            for s in 0..nb {
                let r = ops.basis.energy(s);
                chi_i[(a * nb + s, b * nb + s)] = p * chi1(r);
                chibar_i[(a * nb + s, b * nb + s)] = pbar + p * chibar1(r);
            }
        }
    }
    InitialCutoffs { chi_i, chibar_i }
}

/// A validated initial pair with the restricted resolvent norm.
#[derive(Debug, Clone)]
pub struct InitialPair {
    pub pair: FeshbachPair,
    pub zeta: C64,
    /// `||(H0 - zeta)^{-1}||` on Ran chibar.
    pub resolvent_norm: f64,
}

/// Kernel sequence at one spectral parameter with its bookkeeping.
#[derive(Debug, Clone)]
pub struct InitialKernel {
    pub w: KernelSequence,
    pub norms: PairNorms,
    /// Bound on the Neumann tail beyond `l_max` terms.
    pub neumann_tail: f64,
}

/// Everything the initial transformation needs for one model.
#[derive(Debug, Clone)]
pub struct InitialStage {
    pub model: DiscretizedModel,
    pub ops: ModelOperators,
    pub cutoffs: InitialCutoffs,
    pub frame: Arc<Frame>,
    /// Columns `phi_at (x) |n>` for the reduced states `n`.
    pub isometry: CMat,
    pub l_max: usize,
    pub xi: f64,
}

impl InitialStage {
    pub fn new(model: &DiscretizedModel, xi: f64) -> Result<Self> {
        let ops = ModelOperators::new(model)?;
        let cutoffs = build_cutoffs(&ops, &model.atomic.ground_projection());
        let frame = Arc::new(Frame::from_modes(&model.modes, model.n_max)?);
        let phi = model.atomic.ground_vector();
        let mut isometry = CMat::zeros(ops.dim(), frame.basis.len());
        for (col, s) in frame.basis.states().iter().enumerate() {
            let mut occ = vec![0u8; model.modes.len()];
            for (i, &k) in s.iter().enumerate() {
                occ[frame.origin[i]] = k;
            }
            let state = ops.basis.lookup(&occ).ok_or_else(|| {
                Error::InternalInvariantViolation("reduced state missing from the model basis".into())
            })?;
            isometry.set_column(col, &ops.product_vector(&phi, state));
        }
        Ok(InitialStage { model: model.clone(), ops, cutoffs, frame, isometry, l_max: DEFAULT_L_MAX, xi })
    }

    /// The pair `(H(g) - zeta, H0 - zeta)` with `zeta = z + E_at`, for `|z| < 1/2`.
    pub fn pair(&self, g: C64, z: C64) -> Result<InitialPair> {
        if z.norm() >= 0.5 {
            return Err(Error::OutOfDomain { z });
        }
        let zeta = z + re(self.model.e_at());
        let dim = self.ops.dim();
        let shift = CMat::identity(dim, dim) * zeta;
        let h = self.ops.hamiltonian(g) - &shift;
        let t = &self.ops.h0 - &shift;
        let pair = validate_pair(&h, &t, &self.cutoffs.chi_i, &self.cutoffs.chibar_i)?;
        let resolvent_norm = op_norm(&pair.t_inv);
        Ok(InitialPair { pair, zeta, resolvent_norm })
    }

    /// `V^* F V` for the exact Feshbach map.
    pub fn compressed_map(&self, pair: &FeshbachPair) -> Result<CMat> {
        Ok(self.compress(&feshbach_map(pair)?))
    }

    /// `V^* A V` for an operator on the model space.
    pub fn compress(&self, a: &CMat) -> CMat {
        let phi = self.model.atomic.ground_vector();
        let nb = self.ops.basis.len();
        let states: Vec<usize> = (0..self.isometry.ncols())
            .map(|c| {
                let row = (0..self.isometry.nrows()).find(|&r| self.isometry[(r, c)].norm() > 0.0).unwrap_or(0);
                row % nb
            })
            .collect();
        let k = states.len();
        let mut out = CMat::zeros(k, k);
        for a_ in 0..phi.len() {
            for b_ in 0..phi.len() {
                let c = phi[a_].conj() * phi[b_];
                if c.norm() == 0.0 {
                    continue;
                }
                for (i, &si) in states.iter().enumerate() {
                    for (j, &sj) in states.iter().enumerate() {
                        out[(i, j)] += c * a[(a_ * nb + si, b_ * nb + sj)];
                    }
                }
            }
        }
        out
    }

    /// `w^(0)(z)` reconstructed from the compressed exact Feshbach map.
    pub fn kernel(&self, g: C64, z: C64) -> Result<InitialKernel> {
        let p = self.pair(g, z)?;
        let m = self.compressed_map(&p.pair)?;
        let neumann_tail = neumann_tail_bound(&p.pair, self.l_max);
        let w = reconstruct(&m, self.frame.clone(), z, self.xi)?;
        Ok(InitialKernel { w, norms: p.pair.norms, neumann_tail })
    }

    /// `Q_chi^(I)` on the model space.
    pub fn q(&self, g: C64, z: C64) -> Result<CMat> {
        q_operator(&self.pair(g, z)?.pair)
    }

    /// The factors and interaction of the `L`-th Neumann term for the Wick route.
    pub fn wick_spec(&self, g: C64, z: C64, l: usize) -> Result<WickProductSpec> {
        let model = &self.model;
        let inter = &model.interaction;
        let d = model.d_at();
        let zeta = z + re(model.e_at());
        let p_at = model.atomic.ground_projection();
        let pbar = CMat::identity(d, d) - &p_at;
        let h_at = model.atomic.matrix.clone();
        let mut interaction: BTreeMap<(usize, usize), OpFn> = BTreeMap::new();
        let linear: Vec<CMat> = inter.linear.iter().map(|m| m * g.powu(inter.power(1, 0))).collect();
        if linear.iter().any(|m| m.iter().any(|x| x.norm() > 0.0)) {
            let cre = linear.clone();
            interaction.insert((1, 0), Arc::new(move |_, c, _| cre[c[0]].clone()));
            let ann: Vec<CMat> = inter.linear.iter().map(|m| m.adjoint() * g.powu(inter.power(0, 1))).collect();
            interaction.insert((0, 1), Arc::new(move |_, _, a| ann[a[0]].clone()));
        }
        let zero = CMat::zeros(d, d);
        if !inter.quad20.is_empty() {
            let q20 = inter.quad20.clone();
            let (p20, p02) = (g.powu(inter.power(2, 0)), g.powu(inter.power(0, 2)));
            let get = move |i: usize, j: usize| q20.get(&(i, j)).cloned().unwrap_or_else(|| CMat::zeros(d, d));
            let get2 = get.clone();
            interaction.insert(
                (2, 0),
                Arc::new(move |_, c, _| (get(c[0], c[1]) + get(c[1], c[0])) * (p20 * 0.5)),
            );
            interaction.insert(
                (0, 2),
                Arc::new(move |_, _, a| (get2(a[0], a[1]) + get2(a[1], a[0])).adjoint() * (p02 * 0.5)),
            );
        }
        if !inter.quad11.is_empty() {
            let q11 = inter.quad11.clone();
            let p11 = g.powu(inter.power(1, 1));
            let zero = zero.clone();
            interaction.insert(
                (1, 1),
                Arc::new(move |_, c, a| q11.get(&(c[0], a[0])).map(|m| m * p11).unwrap_or_else(|| zero.clone())),
            );
        }
        let p_edge = p_at.clone();
        let edge: FactorFn = Arc::new(move |r| &p_edge * re(chi1(r)));
        let interior: FactorFn = Arc::new(move |r| {
            let t = &h_at + CMat::identity(d, d) * (re(r) - zeta);
            let inv = guarded_inverse(&t, 1e-12).unwrap_or_else(|| CMat::from_element(d, d, C64::new(f64::NAN, 0.0)));
            (&pbar + &p_at * re(chibar1(r).powi(2))) * inv
        });
        let mut factors = vec![edge.clone()];
        for _ in 1..l {
            factors.push(interior.clone());
        }
        factors.push(edge);
        Ok(WickProductSpec {
            l,
            d_at: d,
            frequencies: model.modes.frequencies.clone(),
            legs: (0..model.modes.len()).map(|i| model.modes.leg(i)).collect(),
            interaction,
            factors,
        })
    }

    /// `w^(0)(z)` from the Neumann series with `l_max` terms, each normal
    /// ordered and sandwiched with the atomic ground state.
    pub fn kernel_wick(&self, g: C64, z: C64, l_max: usize) -> Result<KernelSequence> {
        if z.norm() >= 0.5 {
            return Err(Error::OutOfDomain { z });
        }
        let phi: CVec = self.model.atomic.ground_vector();
        let mut total = KernelSequence::free(self.frame.clone(), self.frame.levels.clone(), z, self.xi);
        for l in 1..=l_max {
            let spec = self.wick_spec(g, z, l)?;
            if spec.interaction.is_empty() {
                break;
            }
            let term = normal_order(&spec, Some(&phi), self.frame.clone(), &self.frame.origin, usize::MAX, self.xi, z)?;
            let sign = if l % 2 == 1 { 1.0 } else { -1.0 };
            total = add_sequences(&total, &term, sign);
        }
        if total.components.values().any(|k| k.entries().any(|(_, e)| e.v.iter().any(|x| !x.is_finite()))) {
            return Err(Error::HChiBarSingular { smallest: 0.0 });
        }
        Ok(total)
    }
}

/// `a + sign * b`, component by component, on a common frame.
pub fn add_sequences(a: &KernelSequence, b: &KernelSequence, sign: f64) -> KernelSequence {
    let mut out = a.clone();
    out.ledger += b.ledger;
    for (&key, kb) in &b.components {
        let mut kb = kb.clone();
        kb.scale(re(sign));
        match out.components.get_mut(&key) {
            Some(ka) => ka.add_assign(&kb),
            None => {
                out.components.insert(key, kb);
            }
        }
    }
    out
}

/// `w^(0)` at several spectral parameters.
#[derive(Debug, Clone)]
pub struct EffectiveKernelFamily {
    pub z_samples: Vec<C64>,
    pub members: Vec<KernelSequence>,
    pub l_max: usize,
    /// Largest Neumann tail bound over the samples.
    pub error_budget: f64,
    pub norms: Vec<PairNorms>,
}

impl EffectiveKernelFamily {
    pub fn ball(&self, thresholds: (f64, f64, f64), zero_tol: f64) -> BallReport {
        ball_report(&self.members, thresholds, zero_tol)
    }
}

pub fn verify_initial_pair(model: &DiscretizedModel, g: C64, z: C64) -> Result<InitialPair> {
    InitialStage::new(model, 0.25)?.pair(g, z)
}

pub fn initial_kernel(model: &DiscretizedModel, g: C64, z_samples: &[C64], xi: f64) -> Result<EffectiveKernelFamily> {
    let stage = InitialStage::new(model, xi)?;
    let results: Vec<InitialKernel> = z_samples.par_iter().map(|&z| stage.kernel(g, z)).collect::<Result<_>>()?;
    Ok(EffectiveKernelFamily {
        z_samples: z_samples.to_vec(),
        error_budget: results.iter().map(|k| k.neumann_tail).fold(0.0, f64::max),
        norms: results.iter().map(|k| k.norms).collect(),
        members: results.into_iter().map(|k| k.w).collect(),
        l_max: stage.l_max,
    })
}

pub fn q_initial(model: &DiscretizedModel, g: C64, z: C64) -> Result<CMat> {
    InitialStage::new(model, 0.25)?.q(g, z)
}

/// Per-`|g|` report of the initial ball parameters.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingProbe {
    pub g: f64,
    pub valid: bool,
    pub ball: Option<BallReport>,
}

/// Largest `g_max 2^{-k}` (k < `steps`) for which every z sample gives a valid
/// pair and a family in the ball with the given thresholds.
pub fn empirical_g0(
    stage: &InitialStage,
    z_samples: &[C64],
    thresholds: (f64, f64, f64),
    zero_tol: f64,
    g_max: f64,
    steps: usize,
) -> (Option<f64>, Vec<CouplingProbe>) {
    let mut probes = Vec::new();
    for k in 0..steps {
        let g = g_max * 0.5f64.powi(k as i32);
        let members: Result<Vec<KernelSequence>> =
            z_samples.iter().map(|&z| stage.kernel(re(g), z).map(|k| k.w)).collect();
        match members {
            Ok(members) => {
                let ball = ball_report(&members, thresholds, zero_tol);
                let ok = ball.in_b0;
                probes.push(CouplingProbe { g, valid: true, ball: Some(ball) });
                if ok {
                    return (Some(g), probes);
                }
            }
            Err(_) => probes.push(CouplingProbe { g, valid: false, ball: None }),
        }
    }
    (None, probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::testkit;

    #[test]
    fn cutoff_values() {
        assert_eq!(chi1(0.5), 1.0);
        assert_eq!(chibar1(0.5), 0.0);
        assert!(chi1(1.0).abs() < 1e-16);
        assert_eq!(chibar1(1.0), 1.0);
        for k in 0..=200 {
            let r = k as f64 / 100.0;
            assert!((chi1(r).powi(2) + chibar1(r).powi(2) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cutoff_operators_partition_unity() {
        let m = testkit::three_level();
        let stage = InitialStage::new(&m, 0.25).unwrap();
        let c = &stage.cutoffs;
        let n = stage.ops.dim();
        assert!(max_abs(&(&c.chi_i * &c.chi_i + &c.chibar_i * &c.chibar_i - CMat::identity(n, n))) < 1e-14);
    }

    #[test]
    fn free_pair_and_kernel() {
        let m = testkit::tls1();
        let stage = InitialStage::new(&m, 0.25).unwrap();
        for z in [C64::new(0.0, 0.0), C64::new(0.49, 0.0), C64::new(-0.3, 0.35)] {
            let p = stage.pair(re(0.0), z).unwrap();
            assert!(p.resolvent_norm <= 4.0);
            assert_eq!(p.pair.norms.t_inv_w_bar, 0.0);
            let k = stage.kernel(re(0.0), z).unwrap();
            assert_eq!(k.w.components.len(), 1);
            for l in 0..stage.frame.levels.len() {
                let r = stage.frame.levels.points[l];
                assert!((k.w.w00(r) - (re(r) - z)).norm() < 1e-14);
            }
            assert!(max_abs(&(stage.q(re(0.0), z).unwrap() - &stage.cutoffs.chi_i)) < 1e-15);
        }
        assert!(matches!(stage.pair(re(0.0), re(0.5)), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn pair_norms_scale_linearly() {
        let stage = InitialStage::new(&testkit::tls1(), 0.25).unwrap();
        let a = stage.pair(re(0.01), re(0.0)).unwrap().pair.norms.t_inv_w_bar;
        let b = stage.pair(re(0.02), re(0.0)).unwrap().pair.norms.t_inv_w_bar;
        assert!(((b / a).log2() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tls1_kernel_has_no_linear_part() {
        let stage = InitialStage::new(&testkit::tls1(), 0.25).unwrap();
        let k = stage.kernel(re(0.01), re(0.0)).unwrap();
        assert!(k.w.linear_norm() < crate::tolerances::ZERO_LINEAR);
        let eps0 = 0.25 / 16.0;
        let b = ball_report(&[k.w], (eps0 / 2.0, eps0 / 2.0, eps0 / 2.0), crate::tolerances::ZERO_LINEAR);
        assert!(b.in_b0, "{b:?}");
    }

    #[test]
    fn wick_route_matches_dense_map() {
        // enough quanta that no intermediate state of the truncated series is cut off
        for (model, l_max) in [(testkit::tls1(), 5), (testkit::three_level(), 3)] {
            let mut big = model.clone();
            big.n_max = model.n_max + 2 * l_max;
            let stage = InitialStage::new(&big, 0.25).unwrap();
            let (g, z) = (re(0.05), C64::new(0.1, 0.05));
            let w = stage.kernel_wick(g, z, l_max).unwrap();
            let p = stage.pair(g, z).unwrap();
            let (series, _) = crate::feshbach::feshbach_map_neumann(&p.pair, l_max - 2).unwrap();
            let direct = stage.isometry.adjoint() * series * &stage.isometry;
            let err = max_abs(&(w.assemble().unwrap() - &direct));
            assert!(err < 1e-12, "err {err}");
        }
    }
}
