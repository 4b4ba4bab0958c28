//! Smooth Feshbach map on finite matrices.
//!
//! Inverses "on Ran chibar" are taken in an orthonormal basis `U` of the range
//! of `chibar`: `A^{-1} := U (U^* A U)^{-1} U^*`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::linalg::{as_diagonal, commutator, kernel_vectors, max_abs, mul, mul_all, op_norm, range_basis, CMat};
use crate::tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairNorms {
    /// `||T^{-1} chibar W chibar||`
    pub t_inv_w_bar: f64,
    /// `||chibar W T^{-1} chibar||`
    pub w_t_inv_bar: f64,
    /// `||T^{-1} chibar W chi||`
    pub t_inv_w_chi: f64,
}

#[derive(Debug, Clone)]
pub struct FeshbachPair {
    pub h: CMat,
    pub t: CMat,
    pub w: CMat,
    pub chi: CMat,
    pub chibar: CMat,
    /// Orthonormal basis of Ran chibar.
    pub range: CMat,
    /// `T^{-1}` on Ran chibar, extended by zero.
    pub t_inv: CMat,
    pub norms: PairNorms,
}

/// Indices of the coordinate vectors spanning `u`, when it is a selection.
fn coordinate_columns(u: &CMat) -> Option<Vec<usize>> {
    let mut idx = Vec::with_capacity(u.ncols());
    for c in 0..u.ncols() {
        let col = u.column(c);
        let mut hit = None;
        for (i, x) in col.iter().enumerate() {
            if x.norm() != 0.0 {
                if hit.is_some() || *x != C64::new(1.0, 0.0) {
                    return None;
                }
                hit = Some(i);
            }
        }
        idx.push(hit?);
    }
    Some(idx)
}

/// `U (U^* A U)^{-1} U^*` and a lower estimate of the smallest singular value
/// of the compression.
fn restricted_inverse(a: &CMat, u: &CMat) -> Option<(CMat, f64)> {
    let n = a.nrows();
    if u.ncols() == 0 {
        return Some((CMat::zeros(n, n), f64::INFINITY));
    }
    if let Some(idx) = coordinate_columns(u) {
        let sub = a.select_rows(&idx).select_columns(&idx);
        let (inv, smallest) = match as_diagonal(&sub) {
            Some(d) => {
                let smallest = d.iter().map(|x| x.norm()).fold(f64::INFINITY, f64::min);
                if smallest == 0.0 {
                    return None;
                }
                (CMat::from_diagonal(&nalgebra::DVector::from_iterator(d.len(), d.iter().map(|x| x.inv()))), smallest)
            }
            None => {
                let inv = sub.try_inverse()?;
                let smallest = 1.0 / inv.norm();
                (inv, smallest)
            }
        };
        let mut out = CMat::zeros(n, n);
        for (a_, &i) in idx.iter().enumerate() {
            for (b_, &j) in idx.iter().enumerate() {
                out[(i, j)] = inv[(a_, b_)];
            }
        }
        return Some((out, smallest));
    }
    let m = u.adjoint() * a * u;
    let inv = m.try_inverse()?;
    let smallest = 1.0 / inv.norm();
    Some((u * inv * u.adjoint(), smallest))
}

/// Checks the structural conditions and the Neumann norms of `(H, T)` for `chi`.
pub fn validate_pair(h: &CMat, t: &CMat, chi: &CMat, chibar: &CMat) -> Result<FeshbachPair> {
    let n = h.nrows();
    for m in [h, t, chi, chibar] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::InternalInvariantViolation("Feshbach pair shapes disagree".into()));
        }
    }
    let unity = mul(chi, chi) + mul(chibar, chibar) - CMat::identity(n, n);
    let residual = max_abs(&unity).max(max_abs(&commutator(chi, chibar)));
    if residual > tolerances::PAIR_STRUCTURE {
        return Err(Error::PartitionOfUnityViolated { residual });
    }
    let scale = t.norm().max(1.0);
    let residual = max_abs(&commutator(chi, t)).max(max_abs(&commutator(chibar, t)));
    if residual > tolerances::PAIR_STRUCTURE * scale {
        return Err(Error::CutoffsDoNotCommute { residual });
    }
    let range = range_basis(chibar, tolerances::RANGE_RANK);
    let (t_inv, smallest) = match restricted_inverse(t, &range) {
        Some(x) => x,
        None => return Err(Error::TNotInvertibleOnRange { smallest: 0.0 }),
    };
    if smallest <= tolerances::RANGE_RANK * scale {
        return Err(Error::TNotInvertibleOnRange { smallest });
    }
    let w = h - t;
    let norms = PairNorms {
        t_inv_w_bar: op_norm(&mul_all(&[&t_inv, chibar, &w, chibar])),
        w_t_inv_bar: op_norm(&mul_all(&[chibar, &w, &t_inv, chibar])),
        t_inv_w_chi: op_norm(&mul_all(&[&t_inv, chibar, &w, chi])),
    };
    if norms.t_inv_w_bar >= 1.0 {
        return Err(Error::NeumannConditionFailed { which: "T^-1 chibar W chibar", value: norms.t_inv_w_bar });
    }
    if norms.w_t_inv_bar >= 1.0 {
        return Err(Error::NeumannConditionFailed { which: "chibar W T^-1 chibar", value: norms.w_t_inv_bar });
    }
    Ok(FeshbachPair { h: h.clone(), t: t.clone(), w, chi: chi.clone(), chibar: chibar.clone(), range, t_inv, norms })
}

impl FeshbachPair {
    /// `H_chibar^{-1} = (T + chibar W chibar)^{-1}` on Ran chibar.
    pub fn h_chibar_inverse(&self) -> Result<CMat> {
        let h_bar = &self.t + mul_all(&[&self.chibar, &self.w, &self.chibar]);
        let scale = h_bar.norm().max(1.0);
        match restricted_inverse(&h_bar, &self.range) {
            Some((inv, smallest)) if smallest > tolerances::RANGE_RANK * scale => Ok(inv),
            Some((_, smallest)) => Err(Error::HChiBarSingular { smallest }),
            None => Err(Error::HChiBarSingular { smallest: 0.0 }),
        }
    }

    /// Neumann approximation `sum_{k<=l_max} (-T^{-1} chibar W chibar)^k T^{-1}` of
    /// `H_chibar^{-1}` on Ran chibar, with the bound on the omitted tail.
    pub fn neumann_inverse(&self, l_max: usize) -> Result<(CMat, f64)> {
        let ratio = self.norms.t_inv_w_bar;
        if ratio >= 1.0 {
            return Err(Error::SeriesDivergence { ratio });
        }
        let step = -mul_all(&[&self.t_inv, &self.chibar, &self.w, &self.chibar]);
        let mut term = self.t_inv.clone();
        let mut sum = term.clone();
        for _ in 0..l_max {
            term = &step * term;
            sum += &term;
        }
        let tail = op_norm(&self.t_inv) * ratio.powi(l_max as i32 + 1) / (1.0 - ratio);
        Ok((sum, tail))
    }
}

/// `F = T + chi W chi - chi W chibar H_chibar^{-1} chibar W chi`.
pub fn feshbach_map(pair: &FeshbachPair) -> Result<CMat> {
    let r = pair.h_chibar_inverse()?;
    let (chi, bar, w) = (&pair.chi, &pair.chibar, &pair.w);
    let left = mul_all(&[chi, w, bar]);
    let right = mul_all(&[bar, w, chi]);
    Ok(&pair.t + mul_all(&[chi, w, chi]) - left * r * right)
}

/// Bound `||chi W chibar|| ||T^{-1} chibar W chi|| n^{L+1} / (1 - n)` on the
/// Neumann tail of the map after `l_max` terms, `n = ||T^{-1} chibar W chibar||`.
pub fn neumann_tail_bound(pair: &FeshbachPair, l_max: usize) -> f64 {
    let n = pair.norms.t_inv_w_bar;
    if n >= 1.0 {
        return f64::INFINITY;
    }
    op_norm(&mul_all(&[&pair.chi, &pair.w, &pair.chibar])) * pair.norms.t_inv_w_chi * n.powi(l_max as i32 + 1)
        / (1.0 - n)
}

/// The same map with the Neumann inverse; returns the matrix and the tail bound
/// `||chi W chibar|| ||T^{-1} chibar W chi|| n^{L+1} / (1 - n)`.
pub fn feshbach_map_neumann(pair: &FeshbachPair, l_max: usize) -> Result<(CMat, f64)> {
    let (r, _) = pair.neumann_inverse(l_max)?;
    let (chi, bar, w) = (&pair.chi, &pair.chibar, &pair.w);
    let tail = neumann_tail_bound(pair, l_max);
    let left = mul_all(&[chi, w, bar]);
    let right = mul_all(&[bar, w, chi]);
    Ok((&pair.t + mul_all(&[chi, w, chi]) - left * r * right, tail))
}

/// `Q = chi - chibar H_chibar^{-1} chibar W chi`.
pub fn q_operator(pair: &FeshbachPair) -> Result<CMat> {
    let r = pair.h_chibar_inverse()?;
    Ok(&pair.chi - mul(&pair.chibar, &r) * mul_all(&[&pair.chibar, &pair.w, &pair.chi]))
}

#[derive(Debug, Clone, Serialize)]
pub struct IsospectralityReport {
    pub dim_ker_h: usize,
    pub dim_ker_f: usize,
    /// `max ||F chi psi||` over unit kernel vectors of H.
    pub chi_into_ker_f: f64,
    /// `max ||H Q phi||` over unit kernel vectors of F.
    pub q_into_ker_h: f64,
    /// `max ||Q chi psi - psi||` on ker H.
    pub q_chi_identity: f64,
    /// `max ||chi Q phi - phi||` on ker F.
    pub chi_q_identity: f64,
    pub h_invertible: bool,
    pub f_invertible: bool,
    pub pass: bool,
}

/// Compares ker H with ker F on Ran chi, using relative singular-value threshold `detect`.
pub fn isospectrality_report_with(pair: &FeshbachPair, detect: f64, tol: f64) -> Result<IsospectralityReport> {
    let f = feshbach_map(pair)?;
    let q = q_operator(pair)?;
    let h_scale = op_norm(&pair.h).max(1.0);
    let ker_h = kernel_vectors(&pair.h, detect * h_scale);
    let v = range_basis(&pair.chi, tolerances::RANGE_RANK);
    let f_r = v.adjoint() * &f * &v;
    let f_scale = op_norm(&f).max(1.0);
    let ker_f = &v * kernel_vectors(&f_r, detect * f_scale);
    let col_max = |m: &CMat| (0..m.ncols()).map(|c| m.column(c).norm()).fold(0.0, f64::max);
    let chi_psi = &pair.chi * &ker_h;
    let q_phi = &q * &ker_f;
    let chi_into_ker_f = col_max(&(&f * &chi_psi)) / f_scale;
    let q_into_ker_h = col_max(&(&pair.h * &q_phi)) / h_scale;
    let q_chi_identity = col_max(&(&q * &chi_psi - &ker_h));
    let chi_q_identity = col_max(&(&pair.chi * &q_phi - &ker_f));
    let h_invertible = ker_h.ncols() == 0;
    let f_invertible = ker_f.ncols() == 0;
    let pass = ker_h.ncols() == ker_f.ncols()
        && h_invertible == f_invertible
        && chi_into_ker_f <= tol
        && q_into_ker_h <= tol
        && q_chi_identity <= tol
        && chi_q_identity <= tol;
    Ok(IsospectralityReport {
        dim_ker_h: ker_h.ncols(),
        dim_ker_f: ker_f.ncols(),
        chi_into_ker_f,
        q_into_ker_h,
        q_chi_identity,
        chi_q_identity,
        h_invertible,
        f_invertible,
        pass,
    })
}

pub fn isospectrality_report(pair: &FeshbachPair) -> Result<IsospectralityReport> {
    isospectrality_report_with(pair, tolerances::KERNEL_DETECTION, tolerances::EXACT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{re, real_diag};

    fn schur_case() -> (CMat, CMat, CMat, CMat) {
        let h = CMat::from_row_slice(2, 2, &[re(2.0), re(1.0), re(1.0), re(4.0)]);
        (h, real_diag(&[2.0, 4.0]), real_diag(&[1.0, 0.0]), real_diag(&[0.0, 1.0]))
    }

    #[test]
    fn schur_complement_example() {
        let (h, t, chi, bar) = schur_case();
        let pair = validate_pair(&h, &t, &chi, &bar).unwrap();
        assert_eq!(pair.norms.t_inv_w_bar, 0.0);
        let f = feshbach_map(&pair).unwrap();
        assert!((f[(0, 0)].re - 1.75).abs() < 1e-15);
    }

    #[test]
    fn singular_t_rejected() {
        let (h, _, chi, bar) = schur_case();
        let err = validate_pair(&h, &real_diag(&[2.0, 0.0]), &chi, &bar).unwrap_err();
        assert!(matches!(err, Error::TNotInvertibleOnRange { .. }));
    }

    #[test]
    fn partition_of_unity_checked() {
        let (h, t, _, _) = schur_case();
        let err = validate_pair(&h, &t, &real_diag(&[1.0, 0.5]), &real_diag(&[0.0, 0.5])).unwrap_err();
        assert!(matches!(err, Error::PartitionOfUnityViolated { .. }));
    }

    #[test]
    fn free_pair_gives_t_and_chi() {
        let t = real_diag(&[0.5, 1.0, 2.0]);
        let c = 0.6f64;
        let chi = real_diag(&[1.0, c, 0.0]);
        let bar = real_diag(&[0.0, (1.0 - c * c).sqrt(), 1.0]);
        let pair = validate_pair(&t, &t, &chi, &bar).unwrap();
        assert!(max_abs(&(feshbach_map(&pair).unwrap() - &t)) < 1e-15);
        assert!(max_abs(&(q_operator(&pair).unwrap() - &chi)) < 1e-15);
    }

    #[test]
    fn schur_kernel_maps() {
        // shift so that H has a kernel: eigenvalue of [[2,1],[1,4]]
        let lambda = 3.0 - 2f64.sqrt();
        let h = CMat::from_row_slice(2, 2, &[re(2.0 - lambda), re(1.0), re(1.0), re(4.0 - lambda)]);
        let t = real_diag(&[2.0 - lambda, 4.0 - lambda]);
        let pair = validate_pair(&h, &t, &real_diag(&[1.0, 0.0]), &real_diag(&[0.0, 1.0])).unwrap();
        let rep = isospectrality_report(&pair).unwrap();
        assert_eq!(rep.dim_ker_h, 1);
        assert_eq!(rep.dim_ker_f, 1);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn neumann_matches_direct_inverse() {
        let t = real_diag(&[0.3, 1.0, 1.5, 2.0]);
        let mut w = CMat::from_fn(4, 4, |i, j| re(0.05 * ((i + 2 * j) as f64).sin()));
        w = &w + w.adjoint();
        let s = 0.8f64;
        let chi = real_diag(&[1.0, s, 0.0, 0.0]);
        let bar = real_diag(&[0.0, (1.0 - s * s).sqrt(), 1.0, 1.0]);
        let pair = validate_pair(&(&t + &w), &t, &chi, &bar).unwrap();
        let exact = pair.h_chibar_inverse().unwrap();
        let (series, tail) = pair.neumann_inverse(40).unwrap();
        assert!(op_norm(&(exact - series)) <= tail + 1e-14);
        let (f_series, tail) = feshbach_map_neumann(&pair, 6).unwrap();
        assert!(op_norm(&(feshbach_map(&pair).unwrap() - f_series)) <= tail + 1e-14);
    }
}
