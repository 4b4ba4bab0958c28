//! Kernel sequences `w = (w_{m,n})` on a discrete mode frame and the
//! operators `H(w)` they define on the reduced Fock space.
//!
//! A kernel entry is keyed by `m` creation modes followed by `n` annihilation
//! modes and sampled on an r-grid. The operator is
//! `H_{m,n}(w) = P_red sum_{K,K~} l^K l^K~ a*(K) w(H_f, K, K~) a(K~) P_red`
//! with leg factors `l_i = sqrt(q_i)`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{CMat, C64};
use crate::model::PhotonModes;
use crate::tolerances;

pub type Key = Vec<u16>;

/// Modes visible at one RG scale, with the reduced basis (field energy <= 1).
#[derive(Debug, Clone)]
pub struct Frame {
    pub frequencies: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_max: usize,
    /// Index of each mode in the original model.
    pub origin: Vec<usize>,
    /// Product of the dilation factors applied so far.
    pub scale: f64,
    pub basis: FockBasis,
    pub levels: Arc<RGrid>,
}

impl Frame {
    pub fn new(
        frequencies: Vec<f64>,
        weights: Vec<f64>,
        n_max: usize,
        origin: Vec<usize>,
        scale: f64,
    ) -> Result<Self> {
        let basis = FockBasis::new(&frequencies, n_max, Some(1.0), crate::fock::capacity_cap())?;
        let levels = Arc::new(RGrid::levels(&basis));
        Ok(Frame { frequencies, weights, n_max, origin, scale, basis, levels })
    }

    /// Modes with frequency at most 1.
    pub fn from_modes(modes: &PhotonModes, n_max: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..modes.len())
            .filter(|&i| modes.frequencies[i] <= 1.0 + tolerances::LEVEL_MERGE)
            .collect();
        Self::new(
            keep.iter().map(|&i| modes.frequencies[i]).collect(),
            keep.iter().map(|&i| modes.weights[i]).collect(),
            n_max,
            keep,
            1.0,
        )
    }

    /// Keeps modes with frequency at most `rho` and rescales them to the unit
    /// scale: `w -> w / rho`, `q -> q / rho^2`. Returns the new frame and, for
    /// each new mode, its index in `self`.
    pub fn dilate(&self, rho: f64) -> Result<(Frame, Vec<usize>)> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.frequencies[i] <= rho * (1.0 + tolerances::LEVEL_MERGE))
            .collect();
        let frame = Self::new(
            keep.iter().map(|&i| self.frequencies[i] / rho).collect(),
            keep.iter().map(|&i| self.weights[i] / (rho * rho)).collect(),
            self.n_max,
            keep.iter().map(|&i| self.origin[i]).collect(),
            self.scale * rho,
        )?;
        Ok((frame, keep))
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn leg(&self, i: usize) -> f64 {
        self.weights[i].sqrt()
    }

    /// Discrete measure `q_i / w_i`.
    pub fn measure(&self, i: usize) -> f64 {
        self.weights[i] / self.frequencies[i]
    }

    /// Largest number of creations or annihilations a kernel can use here.
    pub fn m_max(&self) -> usize {
        2 * self.n_max
    }
}

/// Sample points in r. Level grids carry, per point, the fewest quanta of a
/// reduced state with that field energy.
#[derive(Debug, Clone, PartialEq)]
pub struct RGrid {
    pub points: Vec<f64>,
    pub min_quanta: Vec<usize>,
}

impl RGrid {
    pub fn uniform(n: usize) -> Self {
        let points = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        RGrid { points, min_quanta: vec![0; n] }
    }

    /// Distinct field energies of `basis`, merged at the level tolerance.
    pub fn levels(basis: &FockBasis) -> Self {
        let mut pairs: Vec<(f64, usize)> =
            (0..basis.len()).map(|i| (basis.energy(i), basis.total(i))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<f64> = Vec::new();
        let mut min_quanta: Vec<usize> = Vec::new();
        for (e, q) in pairs {
            match points.last() {
                Some(&p) if (e - p).abs() <= tolerances::LEVEL_MERGE => {
                    let last = min_quanta.len() - 1;
                    min_quanta[last] = min_quanta[last].min(q);
                }
                _ => {
                    points.push(e);
                    min_quanta.push(q);
                }
            }
        }
        RGrid { points, min_quanta }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn locate(&self, r: f64) -> Option<usize> {
        let tol = tolerances::LEVEL_MERGE;
        let k = self.points.partition_point(|&p| p < r - tol);
        (k < self.points.len() && (self.points[k] - r).abs() <= tol).then_some(k)
    }

    /// Linear interpolation of grid samples; zero outside the grid.
    pub fn interpolate(&self, values: &[C64], r: f64) -> C64 {
        if let Some(k) = self.locate(r) {
            return values[k];
        }
        let k = self.points.partition_point(|&p| p < r);
        if k == 0 || k == self.points.len() {
            return C64::new(0.0, 0.0);
        }
        let (a, b) = (self.points[k - 1], self.points[k]);
        let t = (r - a) / (b - a);
        values[k - 1] * (1.0 - t) + values[k] * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub v: Vec<C64>,
    pub d: Vec<C64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Number of distinct orderings of a multiset.
pub fn multiplicity(slots: &[u16]) -> f64 {
    let mut sorted = slots.to_vec();
    sorted.sort_unstable();
    let mut denom = 1.0;
    let mut run = 1;
    for k in 1..=sorted.len() {
        if k < sorted.len() && sorted[k] == sorted[k - 1] {
            run += 1;
        } else {
            denom *= factorial(run);
            run = 1;
        }
    }
    factorial(sorted.len()) / denom
}

/// All distinct orderings of a multiset, in lexicographic order.
pub fn distinct_permutations(slots: &[u16]) -> Vec<Vec<u16>> {
    let mut cur = slots.to_vec();
    cur.sort_unstable();
    let mut out = vec![cur.clone()];
    // next lexicographic permutation
    loop {
        let n = cur.len();
        if n < 2 {
            return out;
        }
        let mut i = n - 1;
        while i > 0 && cur[i - 1] >= cur[i] {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        let mut j = n - 1;
        while cur[j] <= cur[i - 1] {
            j -= 1;
        }
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

#[derive(Debug, Clone)]
pub struct Kernel {
    pub m: usize,
    pub n: usize,
    pub z: C64,
    /// Entries keyed by sorted creation and annihilation halves stand for every ordering.
    pub symmetric: bool,
    pub frame: Arc<Frame>,
    pub grid: Arc<RGrid>,
    entries: BTreeMap<Key, Entry>,
}

impl Kernel {
    pub fn zero(m: usize, n: usize, frame: Arc<Frame>, grid: Arc<RGrid>, z: C64, symmetric: bool) -> Self {
        Kernel { m, n, z, symmetric, frame, grid, entries: BTreeMap::new() }
    }

    fn normalize_key(&self, key: &[u16]) -> Key {
        let mut k = key.to_vec();
        if self.symmetric {
            k[..self.m].sort_unstable();
            k[self.m..].sort_unstable();
        }
        k
    }

    /// Creation and annihilation frequency sums of a key.
    pub fn sums(&self, key: &[u16]) -> (f64, f64) {
        let f = &self.frame.frequencies;
        let a = key[..self.m].iter().map(|&i| f[i as usize]).sum();
        let b = key[self.m..].iter().map(|&i| f[i as usize]).sum();
        (a, b)
    }

    /// True where the operator can see the sample: inside the support
    /// `r + max(sum K, sum K~) <= 1` and within the occupancy cap.
    pub fn supported(&self, key: &[u16], level: usize) -> bool {
        let (a, b) = self.sums(key);
        let r = self.grid.points[level];
        r + a.max(b) <= 1.0 + tolerances::LEVEL_MERGE
            && self.grid.min_quanta[level] + self.m.max(self.n) <= self.frame.n_max
    }

    pub fn get(&self, key: &[u16], level: usize) -> C64 {
        self.entries
            .get(&self.normalize_key(key))
            .map(|e| e.v[level])
            .unwrap_or_default()
    }

    pub fn deriv(&self, key: &[u16], level: usize) -> C64 {
        self.entries
            .get(&self.normalize_key(key))
            .map(|e| e.d[level])
            .unwrap_or_default()
    }

    /// Value at arbitrary r; zero outside the support.
    pub fn eval(&self, key: &[u16], r: f64) -> C64 {
        let (a, b) = self.sums(key);
        if r + a.max(b) > 1.0 + tolerances::LEVEL_MERGE {
            return C64::new(0.0, 0.0);
        }
        match self.entries.get(&self.normalize_key(key)) {
            Some(e) => self.grid.interpolate(&e.v, r),
            None => C64::new(0.0, 0.0),
        }
    }

    fn entry_mut(&mut self, key: &[u16]) -> &mut Entry {
        let k = self.normalize_key(key);
        let len = self.grid.len();
        self.entries
            .entry(k)
            .or_insert_with(|| Entry { v: vec![C64::default(); len], d: vec![C64::default(); len] })
    }

    /// Sets a sample; unsupported samples are ignored.
    pub fn set(&mut self, key: &[u16], level: usize, v: C64, d: C64) {
        assert_eq!(key.len(), self.m + self.n);
        if !self.supported(key, level) {
            return;
        }
        let e = self.entry_mut(key);
        e.v[level] = v;
        e.d[level] = d;
    }

    /// Samples `f(r) = (value, derivative)` at every supported level.
    pub fn set_fn(&mut self, key: &[u16], f: impl Fn(f64) -> (C64, C64)) {
        for level in 0..self.grid.len() {
            if self.supported(key, level) {
                let (v, d) = f(self.grid.points[level]);
                self.set(key, level, v, d);
            }
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Key, &Entry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of ordered tuples a stored key represents.
    pub fn orderings(&self, key: &[u16]) -> f64 {
        if self.symmetric {
            multiplicity(&key[..self.m]) * multiplicity(&key[self.m..])
        } else {
            1.0
        }
    }

    /// Supported levels of a key.
    fn support_levels(&self, key: &[u16]) -> Vec<usize> {
        (0..self.grid.len()).filter(|&l| self.supported(key, l)).collect()
    }

    /// Recomputes the r-derivatives by finite differences over supported
    /// levels. A key with a single supported level gets slope 1 for `w_{0,0}`
    /// and 0 otherwise.
    pub fn refresh_derivatives(&mut self) {
        let keys: Vec<Key> = self.entries.keys().cloned().collect();
        let free = self.m == 0 && self.n == 0;
        for key in keys {
            let levels = self.support_levels(&key);
            let pts: Vec<f64> = levels.iter().map(|&l| self.grid.points[l]).collect();
            let e = self.entries.get_mut(&key).expect("key present");
            let vals: Vec<C64> = levels.iter().map(|&l| e.v[l]).collect();
            for (k, &l) in levels.iter().enumerate() {
                e.d[l] = if levels.len() == 1 {
                    C64::new(if free { 1.0 } else { 0.0 }, 0.0)
                } else if k == 0 {
                    (vals[1] - vals[0]) / (pts[1] - pts[0])
                } else if k == levels.len() - 1 {
                    (vals[k] - vals[k - 1]) / (pts[k] - pts[k - 1])
                } else {
                    (vals[k + 1] - vals[k - 1]) / (pts[k + 1] - pts[k - 1])
                };
            }
        }
    }

    pub fn scale(&mut self, c: C64) {
        for e in self.entries.values_mut() {
            for x in e.v.iter_mut().chain(e.d.iter_mut()) {
                *x *= c;
            }
        }
    }

    /// Adds `other` sample by sample; mixed symmetry falls back to symmetric storage.
    pub fn add_assign(&mut self, other: &Kernel) {
        assert_eq!((self.m, self.n), (other.m, other.n));
        if other.symmetric && !self.symmetric {
            *self = self.symmetrize();
        }
        let other = if self.symmetric && !other.symmetric { other.symmetrize() } else { other.clone() };
        for (key, e) in other.entries {
            let dst = self.entry_mut(&key);
            for (a, b) in dst.v.iter_mut().zip(&e.v) {
                *a += b;
            }
            for (a, b) in dst.d.iter_mut().zip(&e.d) {
                *a += b;
            }
        }
    }

    /// Average over permutations of the creation slots and of the
    /// annihilation slots separately.
    pub fn symmetrize(&self) -> Kernel {
        if self.symmetric {
            return self.clone();
        }
        let mut out = Kernel::zero(self.m, self.n, self.frame.clone(), self.grid.clone(), self.z, true);
        let mut seen: BTreeMap<Key, ()> = BTreeMap::new();
        for key in self.entries.keys() {
            let sorted = out.normalize_key(key);
            if seen.insert(sorted.clone(), ()).is_some() {
                continue;
            }
            let left = distinct_permutations(&sorted[..self.m]);
            let right = distinct_permutations(&sorted[self.m..]);
            let count = factorial(self.m) * factorial(self.n);
            let len = self.grid.len();
            let mut v = vec![C64::default(); len];
            let mut d = vec![C64::default(); len];
            for a in &left {
                for b in &right {
                    let full: Key = a.iter().chain(b.iter()).copied().collect();
                    if let Some(e) = self.entries.get(&full) {
                        // each distinct ordering occurs prod(k_i!) times among all permutations
                        let reps = (factorial(self.m) / multiplicity(a)) * (factorial(self.n) / multiplicity(b));
                        for l in 0..len {
                            v[l] += e.v[l] * reps / count;
                            d[l] += e.d[l] * reps / count;
                        }
                    }
                }
            }
            out.entries.insert(sorted, Entry { v, d });
        }
        out
    }

    fn supported_values(&self) -> impl Iterator<Item = (&Key, usize, &Entry)> {
        self.entries.iter().flat_map(move |(k, e)| {
            (0..self.grid.len()).filter(move |&l| self.supported(k, l)).map(move |l| (k, l, e))
        })
    }

    /// Grid sup of |w|.
    pub fn norm_sup(&self) -> f64 {
        self.supported_values().map(|(_, l, e)| e.v[l].norm()).fold(0.0, f64::max)
    }

    /// Grid sup of |d_r w|.
    pub fn norm_deriv_sup(&self) -> f64 {
        self.supported_values().map(|(_, l, e)| e.d[l].norm()).fold(0.0, f64::max)
    }

    /// `||w||_inf + ||d_r w||_inf`.
    pub fn norm_sharp(&self) -> f64 {
        self.norm_sup() + self.norm_deriv_sup()
    }

    fn measure_of(&self, key: &[u16]) -> f64 {
        key.iter().map(|&i| self.frame.measure(i as usize)).product()
    }

    fn key_sup_sq(&self, key: &[u16], e: &Entry, weight: impl Fn(f64) -> f64) -> f64 {
        (0..self.grid.len())
            .filter(|&l| self.supported(key, l))
            .map(|l| e.v[l].norm_sqr() * weight(self.grid.points[l]))
            .fold(0.0, f64::max)
    }

    /// `[sum over ordered (K, K~) of nu^K nu^K~ sup_r |w|^2]^{1/2}`, `nu_i = q_i / w_i`.
    pub fn norm_l2(&self) -> f64 {
        self.entries
            .iter()
            .map(|(k, e)| self.orderings(k) * self.measure_of(k) * self.key_sup_sq(k, e, |_| 1.0))
            .sum::<f64>()
            .sqrt()
    }

    /// Discrete form bound: like `norm_l2` with the extra weight
    /// `prod_l (r + sum_{l' <= l} w_{K_l'})` for both halves.
    pub fn norm_flat(&self) -> f64 {
        let f = &self.frame.frequencies;
        let chain = |slots: &[u16], r: f64| {
            let mut acc = 1.0;
            let mut partial = r;
            for &i in slots {
                partial += f[i as usize];
                acc *= partial;
            }
            acc
        };
        let mut total = 0.0;
        for (k, e) in &self.entries {
            let orderings: Vec<Key> = if self.symmetric {
                let left = distinct_permutations(&k[..self.m]);
                let right = distinct_permutations(&k[self.m..]);
                left.iter()
                    .flat_map(|a| right.iter().map(move |b| a.iter().chain(b).copied().collect()))
                    .collect()
            } else {
                vec![k.clone()]
            };
            for full in orderings {
                let (a, b) = full.split_at(self.m);
                total += self.measure_of(&full) * self.key_sup_sq(&full, e, |r| chain(a, r) * chain(b, r));
            }
        }
        total.sqrt()
    }

    /// Dense `H_{m,n}(w)` on the frame's reduced basis.
    pub fn assemble(&self) -> CMat {
        let basis = &self.frame.basis;
        let dim = basis.len();
        let mut out = CMat::zeros(dim, dim);
        for (key, e) in &self.entries {
            let (cre, ann) = key.split_at(self.m);
            let cre: Vec<usize> = cre.iter().map(|&i| i as usize).collect();
            let ann: Vec<usize> = ann.iter().map(|&i| i as usize).collect();
            let legs: f64 = key.iter().map(|&i| self.frame.leg(i as usize)).product();
            let coef = legs * self.orderings(key);
            for (col, s) in basis.states().iter().enumerate() {
                let Some((mid, a1)) = basis.annihilate(s, &ann) else { continue };
                let (target, a2) = basis.create(&mid, &cre);
                let Some(row) = basis.lookup(&target) else { continue };
                let r = basis.energy_of(&mid);
                let w = match self.grid.locate(r) {
                    Some(l) => e.v[l],
                    None => self.grid.interpolate(&e.v, r),
                };
                out[(row, col)] += w * (coef * a1 * a2);
            }
        }
        out
    }
}

/// Element of the kernel space: components `(m, n)`, weight `xi`, and the
/// accumulated norm of everything dropped so far.
#[derive(Debug, Clone)]
pub struct KernelSequence {
    pub components: BTreeMap<(usize, usize), Kernel>,
    pub xi: f64,
    pub ledger: f64,
    pub z: C64,
    pub frame: Arc<Frame>,
    pub grid: Arc<RGrid>,
}

impl KernelSequence {
    pub fn empty(frame: Arc<Frame>, grid: Arc<RGrid>, z: C64, xi: f64) -> Self {
        KernelSequence { components: BTreeMap::new(), xi, ledger: 0.0, z, frame, grid }
    }

    /// `w_{0,0}(z, r) = r - z` and nothing else.
    pub fn free(frame: Arc<Frame>, grid: Arc<RGrid>, z: C64, xi: f64) -> Self {
        let mut seq = Self::empty(frame.clone(), grid.clone(), z, xi);
        let mut k = Kernel::zero(0, 0, frame, grid, z, true);
        k.set_fn(&[], |r| (C64::new(r, 0.0) - z, C64::new(1.0, 0.0)));
        seq.insert(k);
        seq
    }

    pub fn insert(&mut self, kernel: Kernel) {
        self.components.insert((kernel.m, kernel.n), kernel);
    }

    pub fn component(&self, m: usize, n: usize) -> Option<&Kernel> {
        self.components.get(&(m, n))
    }

    pub fn w00(&self, r: f64) -> C64 {
        self.component(0, 0).map(|k| k.eval(&[], r)).unwrap_or_default()
    }

    pub fn dw00(&self) -> Vec<C64> {
        match self.component(0, 0) {
            Some(k) => (0..self.grid.len()).filter(|&l| k.supported(&[], l)).map(|l| k.deriv(&[], l)).collect(),
            None => Vec::new(),
        }
    }

    fn weighted(&self, filter: impl Fn(usize, usize) -> bool) -> f64 {
        self.components
            .iter()
            .filter(|((m, n), _)| filter(*m, *n))
            .map(|((m, n), k)| self.xi.powi(-((m + n) as i32)) * k.norm_sharp())
            .sum()
    }

    /// `sum xi^{-(m+n)} ||w_{m,n}||^# + ledger`.
    pub fn norm_xi(&self) -> f64 {
        self.weighted(|_, _| true) + self.ledger
    }

    /// `||w_{>=1}||_xi`, the higher-order part including the ledger.
    pub fn gamma(&self) -> f64 {
        self.weighted(|m, n| m + n >= 1) + self.ledger
    }

    /// Part of `gamma` carried by components with `m + n >= r`.
    pub fn norm_from(&self, r: usize) -> f64 {
        self.weighted(|m, n| m + n >= r)
    }

    pub fn linear_norm(&self) -> f64 {
        self.components
            .iter()
            .filter(|((m, n), _)| m + n == 1)
            .map(|(_, k)| k.norm_sharp())
            .sum()
    }

    pub fn symmetrize(&self) -> KernelSequence {
        let mut out = self.clone();
        for k in out.components.values_mut() {
            *k = k.symmetrize();
        }
        out
    }

    /// Drops components with `m + n > m_max`, adding their weight to the ledger.
    pub fn truncate(&mut self, m_max: usize) {
        let dropped: Vec<(usize, usize)> =
            self.components.keys().filter(|(m, n)| m + n > m_max).copied().collect();
        for key in dropped {
            let k = self.components.remove(&key).expect("present");
            self.ledger += self.xi.powi(-((key.0 + key.1) as i32)) * k.norm_sharp();
        }
    }

    /// Dense `H(w)` on the reduced basis.
    pub fn assemble(&self) -> Result<CMat> {
        let dim = self.frame.basis.len();
        let mut out = CMat::zeros(dim, dim);
        for (&(m, n), k) in &self.components {
            if m > self.frame.m_max() || n > self.frame.m_max() {
                return Err(Error::InternalInvariantViolation(format!(
                    "component ({m},{n}) exceeds the occupancy cap"
                )));
            }
            out += k.assemble();
        }
        Ok(out)
    }

    /// Operator only from components with `m + n >= r`.
    pub fn assemble_from(&self, r: usize) -> CMat {
        let dim = self.frame.basis.len();
        let mut out = CMat::zeros(dim, dim);
        for (&(m, n), k) in &self.components {
            if m + n >= r {
                out += k.assemble();
            }
        }
        out
    }

    /// The family member at `conj(z)` forced by `H(w(conj z)) = H(w(z))^*`:
    /// `w_{m,n}(conj z; r, K, K~) = conj(w_{n,m}(z; r, K~, K))`.
    pub fn adjoint(&self) -> KernelSequence {
        let mut out = Self::empty(self.frame.clone(), self.grid.clone(), self.z.conj(), self.xi);
        out.ledger = self.ledger;
        for (&(m, n), k) in &self.components {
            let mut a = Kernel::zero(n, m, k.frame.clone(), k.grid.clone(), k.z.conj(), k.symmetric);
            for (key, e) in &k.entries {
                let swapped: Key = key[m..].iter().chain(&key[..m]).copied().collect();
                let swapped = a.normalize_key(&swapped);
                a.entries.insert(
                    swapped,
                    Entry { v: e.v.iter().map(|x| x.conj()).collect(), d: e.d.iter().map(|x| x.conj()).collect() },
                );
            }
            out.insert(a);
        }
        out
    }

    /// Largest difference of supported samples between two sequences on the same grid.
    pub fn distance(&self, other: &KernelSequence) -> f64 {
        let mut worst: f64 = 0.0;
        let keys: std::collections::BTreeSet<(usize, usize)> =
            self.components.keys().chain(other.components.keys()).copied().collect();
        for mn in keys {
            let (a, b) = (self.components.get(&mn), other.components.get(&mn));
            let mut all: std::collections::BTreeSet<Key> = Default::default();
            for k in [a, b].into_iter().flatten() {
                all.extend(k.entries.keys().cloned());
            }
            for key in all {
                let reference = a.or(b).expect("one side present");
                for l in 0..reference.grid.len() {
                    if !reference.supported(&key, l) {
                        continue;
                    }
                    let va = a.map(|k| k.get(&key, l)).unwrap_or_default();
                    let vb = b.map(|k| k.get(&key, l)).unwrap_or_default();
                    worst = worst.max((va - vb).norm());
                }
            }
        }
        worst
    }

    pub fn snapshot(&self) -> KernelSnapshot {
        KernelSnapshot {
            version: KernelSnapshot::VERSION,
            z: [self.z.re, self.z.im],
            xi: self.xi,
            ledger: self.ledger,
            frequencies: self.frame.frequencies.clone(),
            weights: self.frame.weights.clone(),
            grid: self.grid.points.clone(),
            components: self
                .components
                .values()
                .map(|k| ComponentSnapshot {
                    m: k.m,
                    n: k.n,
                    symmetric: k.symmetric,
                    entries: k
                        .entries
                        .iter()
                        .map(|(key, e)| EntrySnapshot {
                            key: key.clone(),
                            v: e.v.iter().map(|x| [x.re, x.im]).collect(),
                            d: e.d.iter().map(|x| [x.re, x.im]).collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EntrySnapshot {
    pub key: Vec<u16>,
    pub v: Vec<[f64; 2]>,
    pub d: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComponentSnapshot {
    pub m: usize,
    pub n: usize,
    pub symmetric: bool,
    pub entries: Vec<EntrySnapshot>,
}

/// Self-describing dump of a kernel sequence.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelSnapshot {
    pub version: u32,
    pub z: [f64; 2],
    pub xi: f64,
    pub ledger: f64,
    pub frequencies: Vec<f64>,
    pub weights: Vec<f64>,
    pub grid: Vec<f64>,
    pub components: Vec<ComponentSnapshot>,
}

impl KernelSnapshot {
    pub const VERSION: u32 = 1;
}

fn factorial_ratio_sqrt(top: &[u8], bottom: &[u8]) -> f64 {
    top.iter()
        .zip(bottom)
        .map(|(&a, &b)| (factorial(a as usize) / factorial(b as usize)).sqrt())
        .product()
}

/// Recovers the canonical kernel sequence of a matrix on the frame's reduced
/// basis. Canonical kernels vanish whenever a mode appears among both the
/// creations and the annihilations; the spectator quanta shared by the two
/// basis states set r. Fails with `NotInRange` when re-assembly does not
/// reproduce the matrix.
pub fn reconstruct(h: &CMat, frame: Arc<Frame>, z: C64, xi: f64) -> Result<KernelSequence> {
    let basis = &frame.basis;
    let grid = frame.levels.clone();
    if h.nrows() != basis.len() || h.ncols() != basis.len() {
        return Err(Error::InternalInvariantViolation("matrix does not match the reduced basis".into()));
    }
    let mut seq = KernelSequence::empty(frame.clone(), grid.clone(), z, xi);
    let d = frame.len();
    for col in 0..basis.len() {
        for row in 0..basis.len() {
            let value = h[(row, col)];
            let (a, b) = (basis.state(row), basis.state(col));
            let spect: Vec<u8> = (0..d).map(|i| a[i].min(b[i])).collect();
            let mut key: Key = Vec::new();
            for i in 0..d {
                for _ in 0..(a[i] - spect[i]) {
                    key.push(i as u16);
                }
            }
            let m = key.len();
            for i in 0..d {
                for _ in 0..(b[i] - spect[i]) {
                    key.push(i as u16);
                }
            }
            let n = key.len() - m;
            if value == C64::new(0.0, 0.0) && !seq.components.contains_key(&(m, n)) {
                continue;
            }
            let level = grid.locate(basis.energy_of(&spect)).ok_or_else(|| {
                Error::InternalInvariantViolation("spectator energy is not a level".into())
            })?;
            let legs: f64 = key.iter().map(|&i| frame.leg(i as usize)).product();
            let coef = multiplicity(&key[..m])
                * multiplicity(&key[m..])
                * legs
                * factorial_ratio_sqrt(a, &spect)
                * factorial_ratio_sqrt(b, &spect);
            let kernel = seq
                .components
                .entry((m, n))
                .or_insert_with(|| Kernel::zero(m, n, frame.clone(), grid.clone(), z, true));
            kernel.set(&key, level, value / coef, C64::default());
        }
    }
    for k in seq.components.values_mut() {
        k.refresh_derivatives();
    }
    let back = seq.assemble()?;
    let scale = h.iter().map(|x| x.norm()).fold(1.0, f64::max);
    let residual = crate::linalg::max_abs(&(back - h));
    if residual > tolerances::ROUND_TRIP * scale {
        return Err(Error::NotInRange { residual });
    }
    Ok(seq)
}

/// Ball parameters of a sampled family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallReport {
    pub alpha: f64,
    pub beta_val: f64,
    pub gamma: f64,
    pub linear_norm: f64,
    pub in_b0: bool,
}

/// Takes sups over the family members. `thresholds` are `(alpha, beta, gamma)`.
pub fn ball_report(family: &[KernelSequence], thresholds: (f64, f64, f64), zero_tol: f64) -> BallReport {
    let mut alpha: f64 = 0.0;
    let mut beta: f64 = 0.0;
    let mut gamma: f64 = 0.0;
    let mut linear: f64 = 0.0;
    for w in family {
        for d in w.dw00() {
            alpha = alpha.max((d - C64::new(1.0, 0.0)).norm());
        }
        beta = beta.max((w.w00(0.0) + w.z).norm());
        gamma = gamma.max(w.gamma());
        linear = linear.max(w.linear_norm());
    }
    let in_b0 = alpha <= thresholds.0 && beta <= thresholds.1 && gamma <= thresholds.2 && linear <= zero_tol;
    BallReport { alpha, beta_val: beta, gamma, linear_norm: linear, in_b0 }
}

/// Checks `H(w(conj z)) = H(w(z))^*` on paired family members.
pub fn operator_symmetric(pairs: &[(KernelSequence, KernelSequence)], tol: f64) -> Result<bool> {
    for (w, wbar) in pairs {
        let lhs = wbar.assemble()?;
        let rhs = w.assemble()?.adjoint();
        if crate::linalg::max_abs(&(lhs - rhs)) > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Checks the kernel-level criterion `w_{m,n}(conj z) = conj(w_{n,m}(z))`.
pub fn kernel_symmetric(pairs: &[(KernelSequence, KernelSequence)], tol: f64) -> bool {
    pairs.iter().all(|(w, wbar)| w.adjoint().distance(wbar) <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{op_norm, re};

    fn frame() -> Arc<Frame> {
        let modes = PhotonModes::riemann(vec![0.21, 0.37, 0.58], 1.0).unwrap();
        Arc::new(Frame::from_modes(&modes, 3).unwrap())
    }

    #[test]
    fn sharp_norm_examples() {
        let f = frame();
        let grid = Arc::new(RGrid::uniform(65));
        let mut k = Kernel::zero(0, 0, f.clone(), grid.clone(), C64::default(), true);
        k.set_fn(&[], |r| (re(r), re(1.0)));
        assert!((k.norm_sharp() - 2.0).abs() < 1e-15);
        let mut k2 = Kernel::zero(0, 0, f.clone(), grid.clone(), C64::default(), true);
        k2.set_fn(&[], |r| (re(r * r), re(2.0 * r)));
        assert!((k2.norm_sharp() - 3.0).abs() < 1e-15);
        let zero = Kernel::zero(1, 1, f, grid, C64::default(), true);
        assert_eq!(zero.norm_sharp(), 0.0);
        assert_eq!(zero.norm_l2(), 0.0);
        assert_eq!(zero.norm_flat(), 0.0);
    }

    #[test]
    fn xi_norm_examples() {
        let f = frame();
        let grid = Arc::new(RGrid::uniform(65));
        let mut seq = KernelSequence::free(f.clone(), grid.clone(), C64::default(), 0.25);
        assert!((seq.norm_xi() - 2.0).abs() < 1e-15);
        let mut k = Kernel::zero(1, 0, f, grid, C64::default(), true);
        k.set_fn(&[0], |_| (re(0.3), re(0.0)));
        let sharp = k.norm_sharp();
        seq.components.clear();
        seq.insert(k);
        assert!((seq.norm_xi() - 4.0 * sharp).abs() < 1e-15);
        assert!(seq.gamma() <= seq.norm_xi());
    }

    #[test]
    fn single_mode_l2() {
        let modes = PhotonModes::new(vec![0.5], vec![0.7], 1.0).unwrap();
        let f = Arc::new(Frame::from_modes(&modes, 2).unwrap());
        let mut k = Kernel::zero(1, 0, f.clone(), f.levels.clone(), C64::default(), true);
        k.set_fn(&[0], |_| (re(0.4), re(0.0)));
        let expected = (0.7f64 / 0.5).sqrt() * 0.4;
        assert!((k.norm_l2() - expected).abs() < 1e-15);
    }

    #[test]
    fn symmetrize_two_term_average() {
        let f = frame();
        let grid = f.levels.clone();
        let fa = [0.3, -0.2, 0.5];
        let gb = [0.1, 0.7, -0.4];
        let mut k = Kernel::zero(2, 0, f.clone(), grid, C64::default(), false);
        for i in 0..3u16 {
            for j in 0..3u16 {
                k.set_fn(&[i, j], |_| (re(fa[i as usize] * gb[j as usize]), re(0.0)));
            }
        }
        let s = k.symmetrize();
        for i in 0..3u16 {
            for j in 0..3u16 {
                for l in 0..f.levels.len() {
                    if !k.supported(&[i, j], l) {
                        continue;
                    }
                    let want = (fa[i as usize] * gb[j as usize] + fa[j as usize] * gb[i as usize]) / 2.0;
                    assert!((s.get(&[i, j], l).re - want).abs() < 1e-15);
                }
            }
        }
        assert!(s.norm_sharp() <= k.norm_sharp() + 1e-15);
        let again = s.symmetrize();
        assert_eq!(again.entries, s.entries);
        // symmetrizing does not change the operator
        assert!(crate::linalg::max_abs(&(s.assemble() - k.assemble())) < 1e-14);
    }

    #[test]
    fn free_kernel_assembles_to_field_energy() {
        let f = frame();
        let z = C64::new(0.1, 0.05);
        let h = KernelSequence::free(f.clone(), f.levels.clone(), z, 0.25).assemble().unwrap();
        for i in 0..f.basis.len() {
            for j in 0..f.basis.len() {
                let want = if i == j { re(f.basis.energy(i)) - z } else { C64::default() };
                assert!((h[(i, j)] - want).norm() < 1e-15);
            }
        }
        let back = reconstruct(&h, f.clone(), z, 0.25).unwrap();
        assert!((back.w00(0.0) + z).norm() < 1e-15);
        assert!(back.components.keys().all(|&k| k == (0, 0)));
    }

    #[test]
    fn zero_matrix_reconstructs_to_zero() {
        let f = frame();
        let h = CMat::zeros(f.basis.len(), f.basis.len());
        let w = reconstruct(&h, f, C64::default(), 0.25).unwrap();
        assert_eq!(w.norm_xi(), 0.0);
    }

    #[test]
    fn flat_norm_bounds_operator() {
        let f = frame();
        let mut k = Kernel::zero(1, 1, f.clone(), f.levels.clone(), C64::default(), false);
        for i in 0..3u16 {
            for j in 0..3u16 {
                k.set_fn(&[i, j], |r| (C64::new((1.0 + r) * (i as f64 - j as f64 * 0.3).cos(), 0.2 * r), re(0.0)));
            }
        }
        let norm = op_norm(&k.assemble());
        assert!(norm <= k.norm_flat() * (1.0 + 1e-12));
        assert!(k.norm_flat() <= k.norm_l2() * (1.0 + 1e-12));
    }

    #[test]
    fn frame_dilation_relabels() {
        let modes = PhotonModes::geometric(0.9, 0.25, 4, 1.0).unwrap();
        let f = Frame::from_modes(&modes, 2).unwrap();
        let (g, map) = f.dilate(0.25).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(map, vec![0, 1, 2]);
        for (k, &i) in map.iter().enumerate() {
            assert!((g.frequencies[k] - f.frequencies[i] * 4.0).abs() < 1e-15);
        }
        assert_eq!(g.origin, vec![0, 1, 2]);
    }

    #[test]
    fn distinct_permutation_counts() {
        assert_eq!(distinct_permutations(&[1, 1, 2]).len(), 3);
        assert_eq!(multiplicity(&[1, 1, 2]), 3.0);
        assert_eq!(distinct_permutations(&[]).len(), 1);
        assert_eq!(multiplicity(&[0, 1]), 2.0);
    }
}
