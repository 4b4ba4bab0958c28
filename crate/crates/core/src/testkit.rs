//! Reference models and seeded random generators shared by tests, benches and the CLI.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernels::{Frame, Kernel, KernelSequence, Key};
use crate::linalg::{re, real_diag, CMat, C64};
use crate::model::{AtomicPart, DiscretizedModel, InteractionSpec, PhotonModes};
use crate::wick::{FactorFn, OpFn, WickProductSpec};

fn sigma_x(c: f64) -> CMat {
    CMat::from_row_slice(2, 2, &[re(0.0), re(c), re(c), re(0.0)])
}

fn real_matrix(n: usize, rows: &[f64]) -> CMat {
    CMat::from_iterator(n, n, rows.iter().map(|&x| re(x))).transpose()
}

/// Two-level atom, one mode at 0.5 with weight 1, `G10 = 0.1 sigma_x`, two quanta.
pub fn tls1() -> DiscretizedModel {
    let atomic = AtomicPart::new(real_diag(&[0.0, 1.0])).expect("valid atom");
    let modes = PhotonModes::new(vec![0.5], vec![1.0], 1.0).expect("valid modes");
    let mut inter = InteractionSpec::zero(1, 2);
    inter.linear[0] = sigma_x(0.1);
    DiscretizedModel::new(atomic, modes, inter, 2).expect("valid model")
}

/// TLS1 with every energy multiplied by `delta`.
pub fn scaled_tls(delta: f64) -> DiscretizedModel {
    let atomic = AtomicPart::new(real_diag(&[0.0, delta])).expect("valid atom");
    let modes = PhotonModes::new(vec![0.5 * delta], vec![delta], delta).expect("valid modes");
    let mut inter = InteractionSpec::zero(1, 2);
    inter.linear[0] = sigma_x(0.1 * delta);
    inter.quad11.insert((0, 0), real_diag(&[0.02, 0.01]) * re(delta));
    DiscretizedModel::new(atomic, modes, inter, 2).expect("valid model")
}

/// Three-level atom with parity `diag(1,-1,1)`, two modes, linear and quadratic couplings.
pub fn three_level() -> DiscretizedModel {
    let atomic = AtomicPart::new(real_diag(&[0.0, 1.0, 1.7])).expect("valid atom");
    let modes = PhotonModes::riemann(vec![0.37, 0.83], 1.0).expect("valid modes");
    let mut inter = InteractionSpec::zero(2, 3);
    inter.linear[0] = real_matrix(3, &[0.0, 0.12, 0.0, 0.12, 0.0, 0.05, 0.0, 0.05, 0.0]);
    inter.linear[1] = real_matrix(3, &[0.0, 0.08, 0.0, 0.08, 0.0, 0.1, 0.0, 0.1, 0.0]);
    inter.quad11.insert((0, 0), real_diag(&[0.04, 0.02, 0.03]));
    inter.quad11.insert((1, 1), real_diag(&[0.03, 0.01, 0.02]));
    let g01 = real_matrix(3, &[0.01, 0.0, 0.005, 0.0, 0.01, 0.0, 0.004, 0.0, 0.0]);
    inter.quad11.insert((1, 0), g01.adjoint());
    inter.quad11.insert((0, 1), g01);
    inter.quad20.insert((0, 1), real_diag(&[0.02, 0.01, 0.015]));
    inter.quad20.insert((0, 0), real_diag(&[0.01, 0.01, 0.01]));
    DiscretizedModel::new(atomic, modes, inter, 2).expect("valid model")
}

/// Two-level atom coupled by `c sigma_x` to `count` modes `0.9 ratio^k`.
pub fn ladder(count: usize, ratio: f64, c: f64, n_max: usize) -> DiscretizedModel {
    let atomic = AtomicPart::new(real_diag(&[0.0, 1.0])).expect("valid atom");
    let modes = PhotonModes::geometric(0.9, ratio, count, 1.0).expect("valid modes");
    let mut inter = InteractionSpec::zero(count, 2);
    for m in &mut inter.linear {
        *m = sigma_x(c);
    }
    DiscretizedModel::new(atomic, modes, inter, n_max).expect("valid model")
}

/// Ladder whose modes drop out one per RG step at `rho = 1/4`.
pub fn rg_ladder() -> DiscretizedModel {
    ladder(12, 0.25, 0.5, 2)
}

/// Dense ladder used for the infrared-cutoff scan.
pub fn sigma_ladder() -> DiscretizedModel {
    ladder(8, 0.4, 0.1, 2)
}

/// Seeded generator used by every randomized suite.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn complex(rng: &mut impl Rng, scale: f64) -> C64 {
    C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

/// `modes` increasing frequencies in `[0.15, 1]` with Riemann weights.
pub fn random_frame(rng: &mut impl Rng, modes: usize, n_max: usize) -> Arc<Frame> {
    let mut freqs: Vec<f64> = Vec::with_capacity(modes);
    while freqs.len() < modes {
        let w: f64 = rng.gen_range(0.15..1.0);
        if freqs.iter().all(|f| (f - w).abs() > 0.03) {
            freqs.push(w);
        }
    }
    freqs.sort_by(f64::total_cmp);
    let pm = PhotonModes::riemann(freqs, 1.0).expect("valid modes");
    Arc::new(Frame::from_modes(&pm, n_max).expect("frame fits"))
}

fn keys(modes: usize, len: usize) -> Vec<Key> {
    let mut out: Vec<Key> = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|k| (0..modes as u16).map(move |i| k.iter().copied().chain([i]).collect()))
            .collect();
    }
    out
}

/// Every key of an `(m, n)` kernel, halves sorted when `symmetric`, optionally
/// only those whose halves share no mode.
pub fn kernel_keys(modes: usize, m: usize, n: usize, symmetric: bool, canonical: bool) -> Vec<Key> {
    let mut out: Vec<Key> = keys(modes, m + n)
        .into_iter()
        .filter(|k| !symmetric || (k[..m].windows(2).all(|p| p[0] <= p[1]) && k[m..].windows(2).all(|p| p[0] <= p[1])))
        .filter(|k| !canonical || k[..m].iter().all(|i| !k[m..].contains(i)))
        .collect();
    out.dedup();
    out
}

/// Kernel whose entries are random complex quadratics in r.
pub fn random_kernel(rng: &mut impl Rng, frame: &Arc<Frame>, m: usize, n: usize, symmetric: bool, canonical: bool) -> Kernel {
    let mut k = Kernel::zero(m, n, frame.clone(), frame.levels.clone(), C64::default(), symmetric);
    for key in kernel_keys(frame.len(), m, n, symmetric, canonical) {
        let (a, b, c) = (complex(rng, 1.0), complex(rng, 1.0), complex(rng, 1.0));
        k.set_fn(&key, |r| (a + b * r + c * r * r, b + c * (2.0 * r)));
    }
    k
}

/// Symmetric canonical kernels for every `(m, n)` with `m + n <= m_max` that fits the frame.
pub fn random_sequence(rng: &mut impl Rng, frame: &Arc<Frame>, m_max: usize) -> KernelSequence {
    let mut seq = KernelSequence::empty(frame.clone(), frame.levels.clone(), C64::default(), 0.25);
    for m in 0..=m_max.min(frame.n_max) {
        for n in 0..=(m_max - m).min(frame.n_max) {
            seq.insert(random_kernel(rng, frame, m, n, true, true));
        }
    }
    seq
}

fn random_unitary(rng: &mut impl Rng, n: usize) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| complex(rng, 1.0));
    a.qr().q()
}

/// Random pair `(H, T, chi, chibar)`: `T` has spectrum in `[0, 2]` away from
/// `0.7`, the cutoffs are `chi1(T + 1/4)` and its partner, all conjugated by a
/// random unitary. With `singular`, `H` and `T` are shifted by the lowest
/// eigenvalue of `H` so that `H` has a kernel. Retries until the pair validates.
pub fn random_pair(rng: &mut impl Rng, dim: usize, singular: bool) -> (CMat, CMat, CMat, CMat) {
    loop {
        let spectrum: Vec<f64> = (0..dim)
            .map(|_| if rng.gen_bool(0.4) { rng.gen_range(0.0..0.45) } else { rng.gen_range(0.55..2.0) })
            .collect();
        let chi: Vec<f64> = spectrum.iter().map(|&e| crate::initial::chi1(e + 0.25)).collect();
        let chibar: Vec<f64> = spectrum.iter().map(|&e| crate::initial::chibar1(e + 0.25)).collect();
        let strength: f64 = rng.gen_range(0.02..0.2);
        let w = CMat::from_fn(dim, dim, |_, _| complex(rng, 1.0));
        let w = (&w + w.adjoint()) * re(strength / (2.0 * dim as f64).sqrt());
        let u = random_unitary(rng, dim);
        let conj = |d: &[f64]| &u * real_diag(d) * u.adjoint();
        let mut t = conj(&spectrum);
        let mut h = &t + u.clone() * &w * u.adjoint();
        if singular {
            let shift = crate::linalg::hermitian_eigh(&h).0[0];
            t -= CMat::identity(dim, dim) * re(shift);
            h -= CMat::identity(dim, dim) * re(shift);
        }
        let (c, cb) = (conj(&chi), conj(&chibar));
        if crate::feshbach::validate_pair(&h, &t, &c, &cb).is_ok() {
            return (h, t, c, cb);
        }
    }
}

/// Random product spec with `l` factors on `modes` internal modes and a
/// `d_at`-dimensional atomic factor.
pub fn random_wick_spec(rng: &mut impl Rng, l: usize, modes: usize, d_at: usize) -> WickProductSpec {
    let frequencies: Vec<f64> = {
        let mut f: Vec<f64> = (0..modes).map(|i| 0.2 + 0.3 * i as f64 + rng.gen_range(0.0..0.1)).collect();
        f.sort_by(f64::total_cmp);
        f
    };
    let legs: Vec<f64> = (0..modes).map(|_| rng.gen_range(0.3..1.0)).collect();
    let mut interaction: BTreeMap<(usize, usize), OpFn> = BTreeMap::new();
    for (m, n) in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)] {
        if m + n == 2 && rng.gen_bool(0.3) {
            continue;
        }
        let base = CMat::from_fn(d_at, d_at, |_, _| complex(rng, 0.5));
        let slope = CMat::from_fn(d_at, d_at, |_, _| complex(rng, 0.5));
        let mode_factor: Vec<f64> = (0..modes).map(|_| rng.gen_range(0.5..1.5)).collect();
        interaction.insert(
            (m, n),
            Arc::new(move |r: f64, c: &[usize], a: &[usize]| {
                let f: f64 = c.iter().chain(a).map(|&i| mode_factor[i]).product();
                (&base + &slope * re(r)) * re(f)
            }),
        );
    }
    let factors: Vec<FactorFn> = (0..=l)
        .map(|_| {
            let offset = rng.gen_range(0.5..1.5);
            let mix = CMat::from_fn(d_at, d_at, |_, _| complex(rng, 0.2));
            let f: FactorFn = Arc::new(move |r: f64| {
                CMat::identity(d_at, d_at) * re(1.0 / (offset + r)) + &mix * re(r)
            });
            f
        })
        .collect();
    WickProductSpec { l, d_at, frequencies, legs, interaction, factors }
}
