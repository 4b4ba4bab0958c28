//! Truncated bosonic Fock space over a finite list of photon modes.
//!
//! States are occupation vectors with total occupancy at most `n_max`,
//! optionally capped in field energy. Ordering is graded: by total
//! occupancy, then lexicographically descending, so the vacuum is state 0.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{re, CMat, CVec, C64};
use crate::tolerances;

/// Environment variable holding the maximal number of basis states.
pub const CAPACITY_ENV: &str = "OPRG_MAX_STATES";
const DEFAULT_CAPACITY: usize = 20_000;

pub fn capacity_cap() -> usize {
    std::env::var(CAPACITY_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_CAPACITY)
}

#[derive(Debug, Clone)]
pub struct FockBasis {
    pub frequencies: Vec<f64>,
    pub n_max: usize,
    pub energy_cap: Option<f64>,
    states: Vec<Vec<u8>>,
    energies: Vec<f64>,
    index: HashMap<Vec<u8>, usize>,
}

/// A sparse real matrix stored as (row, col, value) triplets.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn to_dense(&self) -> CMat {
        let mut out = CMat::zeros(self.nrows, self.ncols);
        for &(i, j, v) in &self.entries {
            out[(i, j)] += re(v);
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            entries: self.entries.iter().map(|&(i, j, v)| (j, i, v)).collect(),
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(usize::MAX as u128) as usize
}

impl FockBasis {
    /// Builds the basis over `frequencies` with at most `n_max` quanta and,
    /// if given, field energy at most `energy_cap`.
    pub fn new(
        frequencies: &[f64],
        n_max: usize,
        energy_cap: Option<f64>,
        cap: usize,
    ) -> Result<Self> {
        let d = frequencies.len();
        if energy_cap.is_none() {
            let required = binomial(d + n_max, n_max);
            if required > cap {
                return Err(Error::CapacityExceeded { required, cap });
            }
        }
        let limit = energy_cap.map(|e| e + tolerances::LEVEL_MERGE);
        let mut states: Vec<Vec<u8>> = Vec::new();
        let mut current = vec![0u8; d];
        fn rec(
            mode: usize,
            left: usize,
            energy: f64,
            freqs: &[f64],
            limit: Option<f64>,
            current: &mut Vec<u8>,
            out: &mut Vec<Vec<u8>>,
            cap: usize,
        ) -> bool {
            if mode == freqs.len() {
                out.push(current.clone());
                return out.len() <= cap;
            }
            for k in 0..=left {
                let e = energy + k as f64 * freqs[mode];
                if let Some(l) = limit {
                    if e > l {
                        break;
                    }
                }
                current[mode] = k as u8;
                if !rec(mode + 1, left - k, e, freqs, limit, current, out, cap) {
                    current[mode] = 0;
                    return false;
                }
            }
            current[mode] = 0;
            true
        }
        if !rec(0, n_max, 0.0, frequencies, limit, &mut current, &mut states, cap) {
            return Err(Error::CapacityExceeded { required: states.len(), cap });
        }
        states.sort_by(|a, b| {
            let ta: usize = a.iter().map(|&x| x as usize).sum();
            let tb: usize = b.iter().map(|&x| x as usize).sum();
            ta.cmp(&tb).then_with(|| b.cmp(a))
        });
        let energies = states
            .iter()
            .map(|s| s.iter().zip(frequencies).map(|(&n, w)| n as f64 * w).sum())
            .collect();
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(FockBasis {
            frequencies: frequencies.to_vec(),
            n_max,
            energy_cap,
            states,
            energies,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.energies[i]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn total(&self, i: usize) -> usize {
        self.states[i].iter().map(|&x| x as usize).sum()
    }

    pub fn lookup(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    pub fn energy_of(&self, occ: &[u8]) -> f64 {
        occ.iter().zip(&self.frequencies).map(|(&n, w)| n as f64 * w).sum()
    }

    /// Applies annihilators for each listed mode. Returns the new occupation
    /// and the amplitude, or `None` when the result vanishes.
    pub fn annihilate(&self, occ: &[u8], modes: &[usize]) -> Option<(Vec<u8>, f64)> {
        let mut out = occ.to_vec();
        let mut amp = 1.0;
        for &m in modes {
            if out[m] == 0 {
                return None;
            }
            amp *= (out[m] as f64).sqrt();
            out[m] -= 1;
        }
        Some((out, amp))
    }

    /// Applies creators for each listed mode (no truncation check).
    pub fn create(&self, occ: &[u8], modes: &[usize]) -> (Vec<u8>, f64) {
        let mut out = occ.to_vec();
        let mut amp = 1.0;
        for &m in modes {
            out[m] += 1;
            amp *= (out[m] as f64).sqrt();
        }
        (out, amp)
    }
}

/// Full basis over all modes with at most `n_max` quanta.
pub fn build_basis(frequencies: &[f64], n_max: usize) -> Result<FockBasis> {
    FockBasis::new(frequencies, n_max, None, capacity_cap())
}

/// States of `parent` with field energy at most 1.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    pub selection: Vec<usize>,
    pub basis: FockBasis,
}

pub fn reduced_basis(parent: &FockBasis) -> Result<ReducedBasis> {
    let basis = FockBasis::new(&parent.frequencies, parent.n_max, Some(1.0), capacity_cap())?;
    let selection = basis
        .states()
        .iter()
        .map(|s| {
            parent.lookup(s).ok_or_else(|| {
                Error::InternalInvariantViolation("reduced state missing from parent".into())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedBasis { selection, basis })
}

/// Matrix of a*_mode; transitions leaving the truncation are dropped.
pub fn create_matrix(basis: &FockBasis, mode: usize) -> SparseMatrix {
    let mut entries = Vec::new();
    for (j, s) in basis.states().iter().enumerate() {
        let (t, amp) = basis.create(s, &[mode]);
        if let Some(i) = basis.lookup(&t) {
            entries.push((i, j, amp));
        }
    }
    SparseMatrix { nrows: basis.len(), ncols: basis.len(), entries }
}

pub fn annihilate_matrix(basis: &FockBasis, mode: usize) -> SparseMatrix {
    create_matrix(basis, mode).transpose()
}

pub fn field_energy(basis: &FockBasis) -> Vec<f64> {
    basis.energies().to_vec()
}

/// States that cannot leave the truncation under one more creation.
fn guarded_states(basis: &FockBasis) -> Vec<usize> {
    (0..basis.len())
        .filter(|&i| basis.total(i) < basis.n_max)
        .filter(|&i| match basis.energy_cap {
            Some(cap) => basis.energy(i) + basis.frequencies.iter().cloned().fold(0.0, f64::max) <= cap,
            None => true,
        })
        .collect()
}

/// Norm of `f(H_f) a*_i - a*_i f(H_f + w_i)` on the guarded sub-basis.
pub fn pull_through_residual(basis: &FockBasis, f: &dyn Fn(f64) -> f64, mode: usize) -> f64 {
    let a = create_matrix(basis, mode).to_dense();
    let w = basis.frequencies[mode];
    let lhs = CMat::from_diagonal(&CVec::from_iterator(
        basis.len(),
        basis.energies().iter().map(|&e| re(f(e))),
    )) * &a;
    let rhs = &a
        * CMat::from_diagonal(&CVec::from_iterator(
            basis.len(),
            basis.energies().iter().map(|&e| re(f(e + w))),
        ));
    let diff = lhs - rhs;
    guarded_states(basis)
        .into_iter()
        .map(|j| diff.column(j).norm())
        .fold(0.0, f64::max)
}

/// Max deviation of `[a_i, a*_j] - delta_ij` on the guarded sub-basis.
pub fn ccr_residual(basis: &FockBasis, i: usize, j: usize) -> f64 {
    let ai = annihilate_matrix(basis, i).to_dense();
    let aj_dag = create_matrix(basis, j).to_dense();
    let mut comm = &ai * &aj_dag - &aj_dag * &ai;
    if i == j {
        for k in 0..basis.len() {
            comm[(k, k)] -= re(1.0);
        }
    }
    guarded_states(basis)
        .into_iter()
        .map(|col| comm.column(col).norm())
        .fold(0.0, f64::max)
}

/// Diagonal of (-1)^N.
pub fn number_parity(basis: &FockBasis) -> Vec<f64> {
    (0..basis.len())
        .map(|i| if basis.total(i).is_multiple_of(2) { 1.0 } else { -1.0 })
        .collect()
}

/// Left and right sides of the vacuum-subtraction identity for `n` annihilators:
/// the weighted sum of resolvent-dressed `a(K^(n)) phi` and the weight of
/// `phi` on states with at least `n` quanta. For `n = 1` the right side is
/// `|| (1 - |Omega><Omega|) phi ||^2`.
pub fn vacuum_identity(basis: &FockBasis, n: usize, phi: &CVec) -> (f64, f64) {
    let d = basis.modes();
    let mut lhs = 0.0;
    let mut tuple = vec![0usize; n];
    loop {
        let weight: f64 = tuple.iter().map(|&i| basis.frequencies[i]).product();
        for (col, s) in basis.states().iter().enumerate() {
            let amp = phi[col];
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            // a(K_1) ... a(K_n): K_n acts first.
            let mut order = tuple.clone();
            order.reverse();
            if let Some((t, a)) = basis.annihilate(s, &order) {
                let e = basis.energy_of(&t);
                let mut dress = 1.0;
                let mut partial = 0.0;
                for &k in &tuple {
                    partial += basis.frequencies[k];
                    dress /= e + partial;
                }
                // Distinct source states map to distinct targets for a fixed tuple.
                lhs += weight * dress * (a * amp).norm_sqr();
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                let rhs = (0..basis.len())
                    .filter(|&i| basis.total(i) >= n)
                    .map(|i| phi[i].norm_sqr())
                    .sum();
                return (lhs, rhs);
            }
            tuple[pos] += 1;
            if tuple[pos] < d {
                break;
            }
            tuple[pos] = 0;
            pos += 1;
        }
    }
}

/// Outcome of a dilation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilationReport {
    pub norm_in: f64,
    pub norm_out: f64,
    /// Weight of one-particle components whose target frequency lies below the grid.
    pub dropped: f64,
}

/// Approximate adjoint dilation: a quantum at frequency w is moved to rho*w.
/// Off-grid targets are split between the neighbouring modes with
/// interpolation amplitudes; targets below the grid are dropped and reported.
pub fn dilate_vector(basis: &FockBasis, rho: f64, vec: &CVec) -> (CVec, DilationReport) {
    let freqs = &basis.frequencies;
    let d = freqs.len();
    let mut transport: Vec<Vec<(usize, f64)>> = Vec::with_capacity(d);
    let mut dropped_modes = vec![false; d];
    for i in 0..d {
        let x = rho * freqs[i];
        let tol = tolerances::LEVEL_MERGE * x.max(1.0);
        if let Some(j) = (0..d).find(|&j| (freqs[j] - x).abs() <= tol) {
            transport.push(vec![(j, 1.0)]);
            continue;
        }
        let below = (0..d).filter(|&j| freqs[j] < x).max_by(|&a, &b| freqs[a].total_cmp(&freqs[b]));
        let above = (0..d).filter(|&j| freqs[j] > x).min_by(|&a, &b| freqs[a].total_cmp(&freqs[b]));
        match (below, above) {
            (Some(a), Some(b)) => {
                let t = (x - freqs[a]) / (freqs[b] - freqs[a]);
                transport.push(vec![(a, (1.0 - t).sqrt()), (b, t.sqrt())]);
            }
            _ => {
                dropped_modes[i] = true;
                transport.push(Vec::new());
            }
        }
    }
    let mut out = CVec::zeros(basis.len());
    let mut dropped = 0.0;
    for (col, s) in basis.states().iter().enumerate() {
        let amp = vec[col];
        if amp == C64::new(0.0, 0.0) {
            continue;
        }
        if s.iter().enumerate().any(|(i, &k)| k > 0 && dropped_modes[i]) {
            dropped += amp.norm_sqr();
            continue;
        }
        let mut image: HashMap<Vec<u8>, f64> = HashMap::new();
        image.insert(vec![0u8; d], 1.0);
        for (i, &k) in s.iter().enumerate() {
            for _ in 0..k {
                let mut next: HashMap<Vec<u8>, f64> = HashMap::new();
                for (occ, c) in &image {
                    for &(j, t) in &transport[i] {
                        let (o, a) = basis.create(occ, &[j]);
                        *next.entry(o).or_insert(0.0) += c * t * a;
                    }
                }
                image = next;
            }
            let fact: f64 = (1..=k as usize).map(|x| x as f64).product();
            for c in image.values_mut() {
                *c /= fact.sqrt();
            }
        }
        for (occ, c) in image {
            match basis.lookup(&occ) {
                Some(row) => out[row] += amp * c,
                None => dropped += (amp * c).norm_sqr(),
            }
        }
    }
    let report = DilationReport { norm_in: vec.norm(), norm_out: out.norm(), dropped };
    if dropped > 0.0 {
        log::debug!("dilation dropped weight {dropped:.3e}");
    }
    (out, report)
}
