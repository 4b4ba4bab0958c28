//! Normal ordering of alternating products `F_0(H_f) W F_1(H_f) ... W F_L(H_f)`.
//!
//! Each factor `W = sum_{m+n in {1,2}} H_{m,n}(w)` is split slot by slot into
//! external legs, which survive into the output kernel, and internal legs,
//! which are contracted through a vacuum expectation on an internal Fock
//! space. External arguments enter through the energy shifts `r_l`, `r~_l`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::kernels::{Frame, Kernel, KernelSequence};
use crate::linalg::{CMat, CVec, C64};

/// `w_{m,n}(r; creation modes, annihilation modes)` as a `d_at x d_at` matrix.
pub type OpFn = Arc<dyn Fn(f64, &[usize], &[usize]) -> CMat + Send + Sync>;
/// `F(r)` as a `d_at x d_at` matrix.
pub type FactorFn = Arc<dyn Fn(f64) -> CMat + Send + Sync>;

#[derive(Clone)]
pub struct WickProductSpec {
    pub l: usize,
    pub d_at: usize,
    /// Internal modes.
    pub frequencies: Vec<f64>,
    pub legs: Vec<f64>,
    /// Components with `m + n` in `{1, 2}`, symmetric in each slot group.
    pub interaction: BTreeMap<(usize, usize), OpFn>,
    /// `F_0, ..., F_L`.
    pub factors: Vec<FactorFn>,
}

impl WickProductSpec {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.factors.len() != self.l + 1 {
            return Err(Error::InternalInvariantViolation("a product needs L >= 1 and L+1 factors".into()));
        }
        if self.interaction.keys().any(|(m, n)| !(1..=2).contains(&(m + n))) {
            return Err(Error::InternalInvariantViolation("interaction components must have m+n in {1,2}".into()));
        }
        if self.legs.len() != self.frequencies.len() {
            return Err(Error::InternalInvariantViolation("legs and frequencies differ in length".into()));
        }
        Ok(())
    }
}

/// Per-factor split `(m, p, n, q)`: `m`, `n` external and `p`, `q` internal
/// creations and annihilations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractionTerm {
    pub slots: Vec<[usize; 4]>,
    pub weight: u64,
}

impl ContractionTerm {
    /// Total number of legs, i.e. the power of the coupling carried by the term.
    pub fn legs(&self) -> usize {
        self.slots.iter().map(|s| s.iter().sum::<usize>()).sum()
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

const SPLITS: [[usize; 4]; 14] = [
    [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1],
    [2, 0, 0, 0], [0, 2, 0, 0], [0, 0, 2, 0], [0, 0, 0, 2],
    [1, 1, 0, 0], [1, 0, 1, 0], [1, 0, 0, 1],
    [0, 1, 1, 0], [0, 1, 0, 1], [0, 0, 1, 1],
];

/// All splits with `sum m = m_total`, `sum n = n_total`. With `prune`, only
/// terms whose internal legs can be fully contracted are kept: reading the
/// factors right to left, annihilations never exceed the quanta created so far,
/// and none remain at the end.
pub fn enumerate_terms(l: usize, m_total: usize, n_total: usize, prune: bool) -> Vec<ContractionTerm> {
    let mut out = Vec::new();
    let mut slots = vec![[0usize; 4]; l];
    // fill from the right so the internal count is known
    fn rec(
        pos: usize,
        m_left: usize,
        n_left: usize,
        count: usize,
        prune: bool,
        slots: &mut Vec<[usize; 4]>,
        out: &mut Vec<ContractionTerm>,
    ) {
        if pos == 0 {
            if m_left == 0 && n_left == 0 && (!prune || count == 0) {
                let weight = slots
                    .iter()
                    .map(|s| binomial(s[0] + s[1], s[1]) * binomial(s[2] + s[3], s[3]))
                    .product();
                out.push(ContractionTerm { slots: slots.clone(), weight });
            }
            return;
        }
        let idx = pos - 1;
        for s in SPLITS {
            let [m, p, n, q] = s;
            if m > m_left || n > n_left {
                continue;
            }
            let next = if prune {
                if q > count {
                    continue;
                }
                let c = count - q + p;
                // remaining factors can annihilate at most two quanta each
                if c > 2 * idx {
                    continue;
                }
                c
            } else {
                0
            };
            slots[idx] = s;
            rec(idx, m_left - m, n_left - n, next, prune, slots, out);
        }
    }
    rec(l, m_total, n_total, 0, prune, &mut slots, &mut out);
    out
}

/// Coefficient of `x^m y^n` in `(5 + 3x + 3y + x^2 + xy + y^2)^l`, the number
/// of unpruned terms.
pub fn closed_form_count(l: usize, m: usize, n: usize) -> u64 {
    let mut poly: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    poly.insert((0, 0), 1);
    let factor = [((0, 0), 5u64), ((1, 0), 3), ((0, 1), 3), ((2, 0), 1), ((1, 1), 1), ((0, 2), 1)];
    for _ in 0..l {
        let mut next: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (&(a, b), &c) in &poly {
            for &((x, y), d) in &factor {
                *next.entry((a + x, b + y)).or_insert(0) += c * d;
            }
        }
        poly = next;
    }
    poly.get(&(m, n)).copied().unwrap_or(0)
}

fn ordered_tuples(modes: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..modes).map(move |i| {
                    let mut u = t.clone();
                    u.push(i);
                    u
                })
            })
            .collect();
    }
    out
}

/// Block vectors on `Fock (x) C^d`, index `state * d + atom`.
fn apply_contracted(
    spec: &WickProductSpec,
    basis: &FockBasis,
    w: &OpFn,
    split: [usize; 4],
    ext_cre: &[usize],
    ext_ann: &[usize],
    shift: f64,
    v: &CMat,
) -> CMat {
    let d = spec.d_at;
    let [_, p, _, q] = split;
    let mut out = CMat::zeros(v.nrows(), v.ncols());
    let modes = spec.frequencies.len();
    let cre_tuples = ordered_tuples(modes, p);
    let ann_tuples = ordered_tuples(modes, q);
    for x_ann in &ann_tuples {
        let leg_ann: f64 = x_ann.iter().map(|&i| spec.legs[i]).product();
        let ann: Vec<usize> = ext_ann.iter().chain(x_ann).copied().collect();
        for x_cre in &cre_tuples {
            let leg: f64 = leg_ann * x_cre.iter().map(|&i| spec.legs[i]).product::<f64>();
            let cre: Vec<usize> = ext_cre.iter().chain(x_cre).copied().collect();
            for (col, s) in basis.states().iter().enumerate() {
                let block = v.rows(col * d, d);
                if block.iter().all(|x| *x == C64::new(0.0, 0.0)) {
                    continue;
                }
                let Some((mid, a1)) = basis.annihilate(s, x_ann) else { continue };
                let (target, a2) = basis.create(&mid, x_cre);
                let Some(row) = basis.lookup(&target) else { continue };
                let op = w(basis.energy_of(&mid) + shift, &cre, &ann);
                let contrib = op * block * C64::new(leg * a1 * a2, 0.0);
                let mut dst = out.rows_mut(row * d, d);
                dst += contrib;
            }
        }
    }
    out
}

/// The contracted operator `W^{m,n}_{p,q}[w](s; K)` on `basis (x) C^d`, for
/// fixed external creations `ext_cre` and annihilations `ext_ann`.
pub fn contract_operator(
    spec: &WickProductSpec,
    split: [usize; 4],
    ext_cre: &[usize],
    ext_ann: &[usize],
    shift: f64,
    basis: &FockBasis,
) -> Result<CMat> {
    let [m, p, n, q] = split;
    let w = spec
        .interaction
        .get(&(m + p, n + q))
        .ok_or(Error::MissingKernelComponent { m: m + p, n: n + q })?;
    let dim = basis.len() * spec.d_at;
    let ident = CMat::identity(dim, dim);
    Ok(apply_contracted(spec, basis, w, split, ext_cre, ext_ann, shift, &ident))
}

fn apply_factor(spec: &WickProductSpec, basis: &FockBasis, f: &FactorFn, shift: f64, v: &CMat) -> CMat {
    let d = spec.d_at;
    let mut out = v.clone();
    for s in 0..basis.len() {
        let op = f(basis.energy(s) + shift);
        let block = &op * v.rows(s * d, d);
        out.rows_mut(s * d, d).copy_from(&block);
    }
    out
}

/// One term of the normal-ordered kernel at spectator energy `r`, as a
/// `d x d` matrix before the atomic sandwich.
fn term_value(
    spec: &WickProductSpec,
    basis: &FockBasis,
    term: &ContractionTerm,
    cre: &[usize],
    ann: &[usize],
    r: f64,
) -> CMat {
    let l = spec.l;
    let d = spec.d_at;
    let f = &spec.frequencies;
    // split the external tuples into consecutive blocks
    let mut cre_blocks = Vec::with_capacity(l);
    let mut ann_blocks = Vec::with_capacity(l);
    let (mut a, mut b) = (0, 0);
    for s in &term.slots {
        cre_blocks.push(&cre[a..a + s[0]]);
        ann_blocks.push(&ann[b..b + s[2]]);
        a += s[0];
        b += s[2];
    }
    let sum = |modes: &[usize]| modes.iter().map(|&i| f[i]).sum::<f64>();
    let cre_sums: Vec<f64> = cre_blocks.iter().map(|k| sum(k)).collect();
    let ann_sums: Vec<f64> = ann_blocks.iter().map(|k| sum(k)).collect();
    // r_l and r~_l for l = 1..L (index l-1), r~_0 and r~_L
    let r_shift = |l1: usize| -> f64 {
        ann_sums[..l1 - 1].iter().sum::<f64>() + cre_sums[l1..].iter().sum::<f64>()
    };
    let r_tilde = |l1: usize| -> f64 {
        ann_sums[..l1].iter().sum::<f64>() + cre_sums[l1..].iter().sum::<f64>()
    };
    let dim = basis.len() * d;
    let mut v = CMat::zeros(dim, d);
    v.rows_mut(0, d).copy_from(&CMat::identity(d, d));
    for l1 in (1..=l).rev() {
        let split = term.slots[l1 - 1];
        let w = &spec.interaction[&(split[0] + split[1], split[2] + split[3])];
        v = apply_contracted(spec, basis, w, split, cre_blocks[l1 - 1], ann_blocks[l1 - 1], r + r_shift(l1), &v);
        if l1 > 1 {
            v = apply_factor(spec, basis, &spec.factors[l1 - 1], r + r_tilde(l1 - 1), &v);
        }
    }
    let vac = v.rows(0, d).into_owned();
    (spec.factors[0])(r + r_tilde(0)) * vac * (spec.factors[l])(r + r_tilde(l)) * C64::new(term.weight as f64, 0.0)
}

fn sandwich(value: &CMat, ground: Option<&CVec>) -> C64 {
    match ground {
        Some(phi) => (phi.adjoint() * value * phi)[(0, 0)],
        None => value[(0, 0)],
    }
}

/// Normal-ordered kernel `w~` of the product on the frame. External frame
/// mode `i` is spec mode `external[i]`. Components with `m + n > m_max` go
/// to the ledger. `ground` is the atomic vector for the sandwich; without
/// it the spec must be scalar.
pub fn normal_order(
    spec: &WickProductSpec,
    ground: Option<&CVec>,
    frame: Arc<Frame>,
    external: &[usize],
    m_max: usize,
    xi: f64,
    z: C64,
) -> Result<KernelSequence> {
    spec.validate()?;
    if ground.is_none() && spec.d_at != 1 {
        return Err(Error::InternalInvariantViolation("a vector sandwich is needed for d_at > 1".into()));
    }
    let grid = frame.levels.clone();
    let internal = FockBasis::new(&spec.frequencies, 2 * spec.l, None, crate::fock::capacity_cap())?;
    let mut seq = KernelSequence::empty(frame.clone(), grid.clone(), z, xi);
    let cap = frame.n_max.min(2 * spec.l);
    for m_total in 0..=cap {
        for n_total in 0..=cap {
            let terms = enumerate_terms(spec.l, m_total, n_total, true);
            let terms: Vec<&ContractionTerm> = terms
                .iter()
                .filter(|t| {
                    t.slots.iter().all(|s| spec.interaction.contains_key(&(s[0] + s[1], s[2] + s[3])))
                })
                .collect();
            if terms.is_empty() {
                continue;
            }
            let mut kernel = Kernel::zero(m_total, n_total, frame.clone(), grid.clone(), z, false);
            for key in ordered_tuples(frame.len(), m_total + n_total) {
                let key16: Vec<u16> = key.iter().map(|&i| i as u16).collect();
                let cre: Vec<usize> = key[..m_total].iter().map(|&i| external[i]).collect();
                let ann: Vec<usize> = key[m_total..].iter().map(|&i| external[i]).collect();
                for level in 0..grid.len() {
                    if !kernel.supported(&key16, level) {
                        continue;
                    }
                    let r = grid.points[level];
                    let mut acc = CMat::zeros(spec.d_at, spec.d_at);
                    for t in &terms {
                        acc += term_value(spec, &internal, t, &cre, &ann, r);
                    }
                    let v = sandwich(&acc, ground);
                    if v != C64::new(0.0, 0.0) {
                        kernel.set(&key16, level, v, C64::default());
                    }
                }
            }
            if !kernel.is_empty() {
                kernel.refresh_derivatives();
                seq.insert(kernel.symmetrize());
            }
        }
    }
    seq.truncate(m_max);
    Ok(seq)
}

/// `F_0(H_f) W F_1(H_f) ... W F_L(H_f)` on the full Fock space over the spec
/// modes with `n_max` quanta, index `state * d + atom`.
pub fn direct_product(spec: &WickProductSpec, n_max: usize) -> Result<(FockBasis, CMat)> {
    spec.validate()?;
    let basis = FockBasis::new(&spec.frequencies, n_max, None, crate::fock::capacity_cap())?;
    let d = spec.d_at;
    let dim = basis.len() * d;
    let ident = CMat::identity(dim, dim);
    let mut w_op = CMat::zeros(dim, dim);
    for (&(m, n), w) in &spec.interaction {
        w_op += apply_contracted(spec, &basis, w, [0, m, 0, n], &[], &[], 0.0, &ident);
    }
    let mut prod = apply_factor(spec, &basis, &spec.factors[spec.l], 0.0, &ident);
    for l in (0..spec.l).rev() {
        prod = &w_op * prod;
        prod = apply_factor(spec, &basis, &spec.factors[l], 0.0, &prod);
    }
    Ok((basis, prod))
}

/// Compresses a `direct_product` result onto the frame's reduced basis,
/// sandwiching the atomic factor with `ground` when given.
pub fn compress(
    big: &FockBasis,
    product: &CMat,
    d_at: usize,
    ground: Option<&CVec>,
    frame: &Frame,
    external: &[usize],
) -> Result<CMat> {
    let basis = &frame.basis;
    let mut index = Vec::with_capacity(basis.len());
    for s in basis.states() {
        let mut occ = vec![0u8; big.modes()];
        for (i, &k) in s.iter().enumerate() {
            occ[external[i]] = k;
        }
        index.push(big.lookup(&occ).ok_or_else(|| {
            Error::InternalInvariantViolation("reduced state missing from the product basis".into())
        })?);
    }
    let mut out = CMat::zeros(basis.len(), basis.len());
    for (i, &bi) in index.iter().enumerate() {
        for (j, &bj) in index.iter().enumerate() {
            let block = product.view((bi * d_at, bj * d_at), (d_at, d_at)).into_owned();
            out[(i, j)] = sandwich(&block, ground);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Frame;
    use crate::linalg::{max_abs, op_norm, re};

    fn scalar(f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> FactorFn {
        Arc::new(move |r| CMat::from_element(1, 1, f(r)))
    }

    fn tls_frame() -> Arc<Frame> {
        let modes = crate::model::PhotonModes::new(vec![0.5], vec![1.0], 1.0).unwrap();
        Arc::new(Frame::from_modes(&modes, 2).unwrap())
    }

    fn linear_spec(l: usize, only_creation: bool) -> WickProductSpec {
        let mut interaction: BTreeMap<(usize, usize), OpFn> = BTreeMap::new();
        interaction.insert((1, 0), Arc::new(|r, _, _| CMat::from_element(1, 1, re(0.3 + 0.1 * r))));
        if !only_creation {
            interaction.insert((0, 1), Arc::new(|r, _, _| CMat::from_element(1, 1, re(0.3 - 0.2 * r))));
        }
        WickProductSpec {
            l,
            d_at: 1,
            frequencies: vec![0.5],
            legs: vec![1.0],
            interaction,
            factors: (0..=l).map(|_| scalar(|_| re(1.0))).collect(),
        }
    }

    #[test]
    fn counts_match_closed_form() {
        for l in 1..=3 {
            let mut total = 0;
            for m in 0..=2 * l {
                for n in 0..=2 * l {
                    let count = enumerate_terms(l, m, n, false).len() as u64;
                    assert_eq!(count, closed_form_count(l, m, n));
                    total += count;
                    assert!(enumerate_terms(l, m, n, true).len() as u64 <= count);
                }
            }
            assert_eq!(total, 14u64.pow(l as u32));
        }
    }

    #[test]
    fn single_factor_without_contraction() {
        let spec = linear_spec(1, true);
        let frame = tls_frame();
        let w = normal_order(&spec, None, frame.clone(), &[0], 4, 0.25, C64::default()).unwrap();
        assert_eq!(w.components.keys().copied().collect::<Vec<_>>(), vec![(1, 0)]);
        let k = w.component(1, 0).unwrap();
        for l in 0..frame.levels.len() {
            if k.supported(&[0], l) {
                let r = frame.levels.points[l];
                assert!((k.get(&[0], l).re - (0.3 + 0.1 * r)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_factor_vacuum_expectation() {
        let spec = linear_spec(2, false);
        let frame = tls_frame();
        let w = normal_order(&spec, None, frame.clone(), &[0], 4, 0.25, C64::default()).unwrap();
        let (big, prod) = direct_product(&spec, 2 + 4).unwrap();
        let direct = compress(&big, &prod, 1, None, &frame, &[0]).unwrap();
        let vac = w.w00(0.0);
        assert!((vac - direct[(0, 0)]).norm() < 1e-14);
        // <Omega| H_{0,1} H_{1,0} |Omega> = w_{0,1}(0) w_{1,0}(0)
        assert!((vac.re - 0.09).abs() < 1e-14);
        assert!(max_abs(&(w.assemble().unwrap() - &direct)) < 1e-13 * op_norm(&direct).max(1.0));
    }

    fn rich_spec(l: usize) -> WickProductSpec {
        let mut interaction: BTreeMap<(usize, usize), OpFn> = BTreeMap::new();
        let sym = |c: &[usize]| c.iter().map(|&i| 1.0 + i as f64).product::<f64>();
        interaction.insert((1, 0), Arc::new(move |r, c, _| CMat::from_element(1, 1, C64::new(0.2 + r, 0.1 * sym(c)))));
        interaction.insert((0, 1), Arc::new(move |r, _, a| CMat::from_element(1, 1, C64::new(0.3 - r * r, -0.2 * sym(a)))));
        interaction.insert((2, 0), Arc::new(move |r, c, _| CMat::from_element(1, 1, C64::new(0.1 * sym(c), r))));
        interaction.insert((0, 2), Arc::new(move |r, _, a| CMat::from_element(1, 1, C64::new(0.15, 0.05 * sym(a) * r))));
        interaction.insert((1, 1), Arc::new(move |r, c, a| CMat::from_element(1, 1, C64::new(0.25 * sym(c) * sym(a), 0.3 * r))));
        let mut factors: Vec<FactorFn> = Vec::new();
        for j in 0..=l {
            let a = 0.5 + 0.1 * j as f64;
            factors.push(scalar(move |r| C64::new(1.0 / (a + r), 0.1 * r)));
        }
        WickProductSpec { l, d_at: 1, frequencies: vec![0.3, 0.45], legs: vec![0.6, 0.8], interaction, factors }
    }

    #[test]
    fn matches_direct_product_two_modes() {
        let modes = crate::model::PhotonModes::new(vec![0.3, 0.45], vec![0.36, 0.64], 1.0).unwrap();
        for n_test in [2, 3] {
            let frame = Arc::new(Frame::from_modes(&modes, n_test).unwrap());
            for l in 1..=3 {
                let spec = rich_spec(l);
                let w = normal_order(&spec, None, frame.clone(), &[0, 1], 4 * l, 0.25, C64::default()).unwrap();
                let (big, prod) = direct_product(&spec, n_test + 2 * l).unwrap();
                let direct = compress(&big, &prod, 1, None, &frame, &[0, 1]).unwrap();
                let err = op_norm(&(w.assemble().unwrap() - &direct));
                assert!(err <= 1e-12 * op_norm(&direct), "l={l} n={n_test} err={err}");
            }
        }
    }
}
