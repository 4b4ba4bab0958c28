//! Discretized atom-photon model: atomic matrix, photon modes, couplings.

use std::collections::BTreeMap;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::fock::{self, FockBasis};
use crate::linalg::{hermitian_eigh, hermiticity_residual, max_abs, re, CMat, CVec, C64};

const HERMITIAN_TOL: f64 = 1e-12;
const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AtomicPart {
    pub matrix: CMat,
    pub ground_index: usize,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

impl AtomicPart {
    pub fn new(matrix: CMat) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() < 2 {
            return Err(Error::InvalidModel("atomic matrix must be square with dimension >= 2".into()));
        }
        if matrix.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::InvalidModel("atomic matrix has non-finite entries".into()));
        }
        let scale = matrix.iter().map(|x| x.norm()).fold(1.0, f64::max);
        if hermiticity_residual(&matrix) > HERMITIAN_TOL * scale {
            return Err(Error::InvalidModel("atomic matrix is not Hermitian".into()));
        }
        let (eigenvalues, eigenvectors) = hermitian_eigh(&matrix);
        let gap = eigenvalues[1] - eigenvalues[0];
        if gap <= DEGENERACY_TOL * scale {
            return Err(Error::DegenerateGroundState { gap });
        }
        Ok(AtomicPart { matrix, ground_index: 0, eigenvalues, eigenvectors })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[self.ground_index]
    }

    pub fn gap(&self) -> f64 {
        self.eigenvalues[1] - self.eigenvalues[0]
    }

    pub fn ground_vector(&self) -> CVec {
        self.eigenvectors.column(self.ground_index).into_owned()
    }

    pub fn ground_projection(&self) -> CMat {
        let v = self.ground_vector();
        &v * v.adjoint()
    }
}

#[derive(Debug, Clone)]
pub struct PhotonModes {
    pub frequencies: Vec<f64>,
    pub weights: Vec<f64>,
    pub ir_cutoff: f64,
    pub uv_cutoff: f64,
}

impl PhotonModes {
    pub fn new(frequencies: Vec<f64>, weights: Vec<f64>, uv_cutoff: f64) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidModel("mode list is empty".into()));
        }
        if frequencies.len() != weights.len() {
            return Err(Error::InvalidModel("frequencies and weights differ in length".into()));
        }
        if !(uv_cutoff.is_finite() && uv_cutoff > 0.0) {
            return Err(Error::InvalidModel(format!("uv cutoff {uv_cutoff} must be positive")));
        }
        for (i, &w) in frequencies.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidModel(format!("frequency {w} of mode {i} must be positive")));
            }
            if w > uv_cutoff {
                return Err(Error::InvalidModel(format!("frequency {w} exceeds uv cutoff {uv_cutoff}")));
            }
            if i > 0 && w <= frequencies[i - 1] {
                return Err(Error::InvalidModel("frequencies must be strictly increasing".into()));
            }
        }
        if weights.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(Error::InvalidModel("weights must be positive and finite".into()));
        }
        Ok(PhotonModes { frequencies, weights, ir_cutoff: 0.0, uv_cutoff })
    }

    /// Weights `q_i = (w_i - w_{i-1}) w_i`, so the measure `q_i / w_i` is the
    /// Riemann sum of `dw` over `[0, w_max]`.
    pub fn riemann(frequencies: Vec<f64>, uv_cutoff: f64) -> Result<Self> {
        let weights = frequencies
            .iter()
            .enumerate()
            .map(|(i, &w)| (w - if i == 0 { 0.0 } else { frequencies[i - 1] }) * w)
            .collect();
        Self::new(frequencies, weights, uv_cutoff)
    }

    /// `count` frequencies `top * ratio^k`, ascending, with Riemann weights.
    pub fn geometric(top: f64, ratio: f64, count: usize, uv_cutoff: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidModel(format!("geometric ratio {ratio} must lie in (0,1)")));
        }
        let mut freqs: Vec<f64> = (0..count).map(|k| top * ratio.powi(k as i32)).collect();
        freqs.reverse();
        Self::riemann(freqs, uv_cutoff)
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.frequencies[i] >= self.ir_cutoff
    }

    /// Leg factor `sqrt(q_i)` carried by each creation or annihilation.
    pub fn leg(&self, i: usize) -> f64 {
        self.weights[i].sqrt()
    }

    /// Discrete measure `q_i / w_i` used by the L2-type norms.
    pub fn measure(&self, i: usize) -> f64 {
        self.weights[i] / self.frequencies[i]
    }
}

/// Coupling matrices. `linear[i]` is `G10_i`; `G01_i` is its adjoint.
/// `quad20` lists `G20_ij` (its adjoint is `G02_ij`), `quad11` lists `G11_ij`.
#[derive(Debug, Clone)]
pub struct InteractionSpec {
    pub linear: Vec<CMat>,
    pub quad20: BTreeMap<(usize, usize), CMat>,
    pub quad11: BTreeMap<(usize, usize), CMat>,
    pub coupling_power: BTreeMap<(usize, usize), u32>,
}

pub fn default_powers() -> BTreeMap<(usize, usize), u32> {
    [((1, 0), 1), ((0, 1), 1), ((2, 0), 2), ((1, 1), 2), ((0, 2), 2)].into_iter().collect()
}

impl InteractionSpec {
    pub fn zero(modes: usize, d_at: usize) -> Self {
        InteractionSpec {
            linear: vec![CMat::zeros(d_at, d_at); modes],
            quad20: BTreeMap::new(),
            quad11: BTreeMap::new(),
            coupling_power: default_powers(),
        }
    }

    pub fn g01(&self, i: usize) -> CMat {
        self.linear[i].adjoint()
    }

    pub fn g02(&self, i: usize, j: usize) -> Option<CMat> {
        self.quad20.get(&(i, j)).map(|m| m.adjoint())
    }

    pub fn power(&self, m: usize, n: usize) -> u32 {
        self.coupling_power.get(&(m, n)).copied().unwrap_or((m + n) as u32)
    }

    fn validate(&self, modes: usize, d_at: usize) -> Result<()> {
        if self.linear.len() != modes {
            return Err(Error::InvalidModel("one linear coupling per mode is required".into()));
        }
        let shape_ok = |m: &CMat| m.nrows() == d_at && m.ncols() == d_at;
        if !self.linear.iter().all(shape_ok)
            || !self.quad20.values().all(shape_ok)
            || !self.quad11.values().all(shape_ok)
        {
            return Err(Error::InvalidModel("coupling matrix has wrong shape".into()));
        }
        for &(i, j) in self.quad20.keys().chain(self.quad11.keys()) {
            if i >= modes || j >= modes {
                return Err(Error::InvalidModel(format!("coupling references mode ({i},{j})")));
            }
        }
        for (&(i, j), m) in &self.quad11 {
            let partner = self.quad11.get(&(j, i));
            let ok = match partner {
                Some(p) => max_abs(&(m.adjoint() - p)) <= HERMITIAN_TOL,
                None => false,
            };
            if !ok {
                return Err(Error::InvalidModel(format!("G11 at ({i},{j}) is not the adjoint of G11 at ({j},{i})")));
            }
        }
        if self.power(1, 0) != self.power(0, 1) || self.power(2, 0) != self.power(0, 2) {
            return Err(Error::InvalidModel("conjugate couplings must carry the same power of g".into()));
        }
        Ok(())
    }

    /// Removes every coupling that touches a mode for which `keep` is false.
    fn restrict(&mut self, keep: impl Fn(usize) -> bool) {
        for (i, m) in self.linear.iter_mut().enumerate() {
            if !keep(i) {
                m.fill(C64::new(0.0, 0.0));
            }
        }
        self.quad20.retain(|&(i, j), _| keep(i) && keep(j));
        self.quad11.retain(|&(i, j), _| keep(i) && keep(j));
    }
}

#[derive(Debug, Clone)]
pub struct DiscretizedModel {
    pub atomic: AtomicPart,
    pub modes: PhotonModes,
    pub interaction: InteractionSpec,
    pub g: C64,
    pub beta: f64,
    pub g_disk: f64,
    pub n_max: usize,
}

impl DiscretizedModel {
    pub fn new(
        atomic: AtomicPart,
        modes: PhotonModes,
        interaction: InteractionSpec,
        n_max: usize,
    ) -> Result<Self> {
        interaction.validate(modes.len(), atomic.dim())?;
        Ok(DiscretizedModel {
            atomic,
            modes,
            interaction,
            g: C64::new(0.0, 0.0),
            beta: 0.0,
            g_disk: 1.0,
            n_max,
        })
    }

    pub fn with_g(mut self, g: C64) -> Result<Self> {
        if g.norm() > self.g_disk {
            return Err(Error::InvalidModel(format!("|g| = {} exceeds the coupling disk {}", g.norm(), self.g_disk)));
        }
        self.g = g;
        Ok(self)
    }

    pub fn e_at(&self) -> f64 {
        self.atomic.ground_energy()
    }

    pub fn d_at(&self) -> usize {
        self.atomic.dim()
    }

    /// Frequencies of the modes that still couple.
    pub fn active_modes(&self) -> Vec<usize> {
        (0..self.modes.len()).filter(|&i| self.modes.is_active(i)).collect()
    }

    /// The model restricted to its active modes, with couplings reindexed.
    pub fn active_part(&self) -> Result<DiscretizedModel> {
        let keep = self.active_modes();
        let pos = |i: usize| keep.iter().position(|&k| k == i);
        let mut modes = PhotonModes::new(
            keep.iter().map(|&i| self.modes.frequencies[i]).collect(),
            keep.iter().map(|&i| self.modes.weights[i]).collect(),
            self.modes.uv_cutoff,
        )?;
        modes.ir_cutoff = self.modes.ir_cutoff;
        let remap = |map: &BTreeMap<(usize, usize), CMat>| -> BTreeMap<(usize, usize), CMat> {
            map.iter()
                .filter_map(|(&(i, j), m)| Some(((pos(i)?, pos(j)?), m.clone())))
                .collect()
        };
        let inter = &self.interaction;
        let interaction = InteractionSpec {
            linear: keep.iter().map(|&i| inter.linear[i].clone()).collect(),
            quad20: remap(&inter.quad20),
            quad11: remap(&inter.quad11),
            coupling_power: inter.coupling_power.clone(),
        };
        let mut out = DiscretizedModel::new(self.atomic.clone(), modes, interaction, self.n_max)?;
        out.g = self.g;
        out.beta = self.beta;
        out.g_disk = self.g_disk;
        Ok(out)
    }
}

pub fn build_model(config: &ModelConfig) -> Result<DiscretizedModel> {
    config.to_model()
}

/// Rescales the model so the atomic gap becomes 1; returns the gap.
pub fn normalize_gap(model: &DiscretizedModel) -> Result<(DiscretizedModel, f64)> {
    let delta = model.atomic.gap();
    if !(delta > 0.0) {
        return Err(Error::DegenerateGroundState { gap: delta });
    }
    if (delta - 1.0).abs() <= f64::EPSILON {
        return Ok((model.clone(), 1.0));
    }
    let atomic = AtomicPart::new(model.atomic.matrix.map(|x| x / delta))?;
    let mut modes = model.modes.clone();
    for w in &mut modes.frequencies {
        *w /= delta;
    }
    for q in &mut modes.weights {
        *q /= delta;
    }
    modes.ir_cutoff /= delta;
    modes.uv_cutoff /= delta;
    // g' = delta^{1/2} g, q' = q / delta; a term with k legs and power p needs
    // G' = G delta^{(k - p)/2 - 1} to reproduce H / delta.
    let inter = &model.interaction;
    let factor = |k: usize, p: u32| delta.powf((k as f64 - p as f64) / 2.0 - 1.0);
    let f1 = factor(1, inter.power(1, 0));
    let f20 = factor(2, inter.power(2, 0));
    let f11 = factor(2, inter.power(1, 1));
    let interaction = InteractionSpec {
        linear: inter.linear.iter().map(|m| m * re(f1)).collect(),
        quad20: inter.quad20.iter().map(|(k, m)| (*k, m * re(f20))).collect(),
        quad11: inter.quad11.iter().map(|(k, m)| (*k, m * re(f11))).collect(),
        coupling_power: inter.coupling_power.clone(),
    };
    let out = DiscretizedModel {
        atomic,
        modes,
        interaction,
        g: model.g * delta.sqrt(),
        beta: model.beta,
        g_disk: model.g_disk * delta.sqrt(),
        n_max: model.n_max,
    };
    Ok((out, delta))
}

/// Decouples every mode with frequency below `sigma`.
pub fn apply_ir_cutoff(model: &DiscretizedModel, sigma: f64) -> Result<DiscretizedModel> {
    if !(sigma >= 0.0) || sigma > model.modes.uv_cutoff {
        return Err(Error::InvalidCutoff { sigma, lambda: model.modes.uv_cutoff });
    }
    let mut out = model.clone();
    out.modes.ir_cutoff = model.modes.ir_cutoff.max(sigma);
    let modes = out.modes.clone();
    out.interaction.restrict(|i| modes.is_active(i));
    Ok(out)
}

/// Dense operators of the model on `C^{d_at} (x) Fock`, atom index major.
#[derive(Debug, Clone)]
pub struct ModelOperators {
    pub basis: FockBasis,
    pub d_at: usize,
    pub h0: CMat,
    /// Interaction pieces grouped by the power of g they carry.
    pub couplings: BTreeMap<u32, CMat>,
}

impl ModelOperators {
    /// Operators on the full basis with `model.n_max` quanta.
    pub fn new(model: &DiscretizedModel) -> Result<Self> {
        let basis = fock::build_basis(&model.modes.frequencies, model.n_max)?;
        Ok(Self::on_basis(model, basis))
    }

    pub fn on_basis(model: &DiscretizedModel, basis: FockBasis) -> Self {
        let d_at = model.d_at();
        let dim = d_at * basis.len();
        let nb = basis.len();
        let mut h0 = CMat::zeros(dim, dim);
        for a in 0..d_at {
            for b in 0..d_at {
                let v = model.atomic.matrix[(a, b)];
                if v != C64::new(0.0, 0.0) {
                    for s in 0..nb {
                        h0[(a * nb + s, b * nb + s)] += v;
                    }
                }
            }
        }
        for a in 0..d_at {
            for s in 0..nb {
                h0[(a * nb + s, a * nb + s)] += re(basis.energy(s));
            }
        }
        let inter = &model.interaction;
        let modes = &model.modes;
        let mut couplings: BTreeMap<u32, CMat> = BTreeMap::new();
        let mut add = |power: u32, g: &CMat, creators: &[usize], annihilators: &[usize], amp: f64| {
            let op = couplings.entry(power).or_insert_with(|| CMat::zeros(dim, dim));
            for (col, s) in basis.states().iter().enumerate() {
                let Some((t, a1)) = basis.annihilate(s, annihilators) else { continue };
                let (t, a2) = basis.create(&t, creators);
                let Some(row) = basis.lookup(&t) else { continue };
                let c = amp * a1 * a2;
                for a in 0..d_at {
                    for b in 0..d_at {
                        let v = g[(a, b)];
                        if v != C64::new(0.0, 0.0) {
                            op[(a * nb + row, b * nb + col)] += v * c;
                        }
                    }
                }
            }
        };
        for i in 0..modes.len() {
            let g10 = &inter.linear[i];
            if max_abs(g10) == 0.0 {
                continue;
            }
            let l = modes.leg(i);
            add(inter.power(1, 0), g10, &[i], &[], l);
            add(inter.power(0, 1), &inter.g01(i), &[], &[i], l);
        }
        for (&(i, j), g20) in &inter.quad20 {
            let l = modes.leg(i) * modes.leg(j);
            add(inter.power(2, 0), g20, &[i, j], &[], l);
            add(inter.power(0, 2), &g20.adjoint(), &[], &[i, j], l);
        }
        for (&(i, j), g11) in &inter.quad11 {
            let l = modes.leg(i) * modes.leg(j);
            add(inter.power(1, 1), g11, &[i], &[j], l);
        }
        ModelOperators { basis, d_at, h0, couplings }
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn index(&self, atom: usize, state: usize) -> usize {
        atom * self.basis.len() + state
    }

    pub fn interaction(&self, g: C64) -> CMat {
        let mut out = CMat::zeros(self.dim(), self.dim());
        for (&p, op) in &self.couplings {
            out += op * g.powu(p);
        }
        out
    }

    pub fn hamiltonian(&self, g: C64) -> CMat {
        &self.h0 + self.interaction(g)
    }

    /// Diagonal of `1 (x) H_f`.
    pub fn field_energy(&self) -> Vec<f64> {
        (0..self.d_at).flat_map(|_| self.basis.energies().iter().copied()).collect()
    }

    /// `phi (x) |state>` for an atomic vector `phi`.
    pub fn product_vector(&self, phi: &CVec, state: usize) -> CVec {
        let mut out = CVec::zeros(self.dim());
        for a in 0..self.d_at {
            out[self.index(a, state)] = phi[a];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_diag;
    use crate::testkit;

    #[test]
    fn tls1_is_valid() {
        let m = testkit::tls1();
        assert_eq!(m.e_at(), 0.0);
        assert!((m.atomic.gap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_ground_state_rejected() {
        let err = AtomicPart::new(real_diag(&[0.0, 0.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::DegenerateGroundState { .. }));
    }

    #[test]
    fn negative_frequency_rejected() {
        let err = PhotonModes::new(vec![-1.0], vec![1.0], 2.0).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = real_diag(&[0.0, 1.0]);
        m[(0, 1)] = re(0.3);
        assert!(matches!(AtomicPart::new(m), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn normalize_gap_examples() {
        let atomic = AtomicPart::new(real_diag(&[0.0, 2.0])).unwrap();
        let modes = PhotonModes::new(vec![1.0], vec![1.0], 1.0).unwrap();
        let m = DiscretizedModel::new(atomic, modes, InteractionSpec::zero(1, 2), 2).unwrap();
        let (n, scale) = normalize_gap(&m).unwrap();
        assert_eq!(scale, 2.0);
        assert_eq!(n.modes.frequencies, vec![0.5]);
        assert!((n.atomic.matrix[(1, 1)].re - 1.0).abs() < 1e-15);
        let (again, s2) = normalize_gap(&n).unwrap();
        assert_eq!(s2, 1.0);
        assert_eq!(again.modes.frequencies, n.modes.frequencies);

        let atomic = AtomicPart::new(real_diag(&[0.0, 0.25])).unwrap();
        let modes = PhotonModes::new(vec![0.2], vec![1.0], 1.0).unwrap();
        let m = DiscretizedModel::new(atomic, modes, InteractionSpec::zero(1, 2), 2).unwrap();
        let m = apply_ir_cutoff(&m, 0.1).unwrap();
        let (n, _) = normalize_gap(&m).unwrap();
        assert!((n.modes.ir_cutoff - 0.4).abs() < 1e-15);
    }

    #[test]
    fn normalized_hamiltonian_is_rescaled() {
        let m = testkit::scaled_tls(3.0);
        let g = re(0.05);
        let (n, delta) = normalize_gap(&m).unwrap();
        let h = ModelOperators::new(&m).unwrap().hamiltonian(g);
        let hn = ModelOperators::new(&n).unwrap().hamiltonian(g * delta.sqrt());
        assert!(max_abs(&(h / re(delta) - hn)) < 1e-14);
    }

    #[test]
    fn ir_cutoff_examples() {
        let m = testkit::tls1();
        let same = apply_ir_cutoff(&m, 0.0).unwrap();
        assert_eq!(same.interaction.linear, m.interaction.linear);
        let cut = apply_ir_cutoff(&m, 0.6).unwrap();
        assert_eq!(max_abs(&cut.interaction.linear[0]), 0.0);
        assert!(matches!(apply_ir_cutoff(&m, 10.0), Err(Error::InvalidCutoff { .. })));
    }

    #[test]
    fn hamiltonian_conjugation_symmetry() {
        let m = testkit::three_level();
        let ops = ModelOperators::new(&m).unwrap();
        let g = C64::new(0.03, 0.02);
        let lhs = ops.hamiltonian(g.conj());
        let rhs = ops.hamiltonian(g).adjoint();
        assert!(max_abs(&(lhs - rhs)) < 1e-15);
    }
}
