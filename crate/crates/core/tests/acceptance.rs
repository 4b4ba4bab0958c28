//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use oprg::feshbach::{isospectrality_report, validate_pair};
use oprg::fock::{ccr_residual, pull_through_residual};
use oprg::initial::InitialStage;
use oprg::kernels::{reconstruct, Frame, KernelSequence};
use oprg::linalg::{op_norm, re};
use oprg::model::{DiscretizedModel, ModelOperators};
use oprg::oracle::ed_ground_ops;
use oprg::perturb::{coefficient_match, sigma_continuity_scan, MatchOptions, ScanOptions};
use oprg::rg::{convergence_g0, eigenvector, iterate, rg_step, RGConfig};
use oprg::wick::{compress, direct_product, normal_order};
use oprg::{testkit, tolerances, CVec, C64};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn wick_identity() -> Outcome {
    let mut rng = testkit::rng(1);
    let mut worst: f64 = 0.0;
    let count = 60;
    for case in 0..count {
        let l = 1 + case % 3;
        let modes = 1 + (case / 3) % 2;
        let n_max = 2 + (case / 6) % 3;
        let d_at = 1 + (case / 18) % 2;
        let spec = testkit::random_wick_spec(&mut rng, l, modes, d_at);
        let weights: Vec<f64> = spec.legs.iter().map(|x| x * x).collect();
        let pm = oprg::PhotonModes::new(spec.frequencies.clone(), weights, 1.0).unwrap();
        let frame = Arc::new(Frame::from_modes(&pm, n_max).unwrap());
        let external: Vec<usize> = (0..modes).collect();
        let mut phi = CVec::zeros(d_at);
        phi[0] = re(1.0);
        let ground = (d_at > 1).then_some(&phi);
        let w = normal_order(&spec, ground, frame.clone(), &external, 4 * l, 0.25, C64::default()).unwrap();
        let (big, prod) = direct_product(&spec, n_max + 2 * l).unwrap();
        let direct = compress(&big, &prod, d_at, ground, &frame, &external).unwrap();
        let rel = op_norm(&(w.assemble().unwrap() - &direct)) / op_norm(&direct).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    outcome(worst <= tolerances::WICK_RELATIVE, format!("{count} random specs, worst relative error {worst:.2e}"))
}

fn feshbach_isospectrality() -> Outcome {
    let mut rng = testkit::rng(2);
    let count = 120;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut singular = 0;
    for case in 0..count {
        let dim = 2 + case % 19;
        let (h, t, chi, chibar) = testkit::random_pair(&mut rng, dim, case % 2 == 0);
        let pair = validate_pair(&h, &t, &chi, &chibar).unwrap();
        let r = isospectrality_report(&pair).unwrap();
        if !r.h_invertible {
            singular += 1;
        }
        worst = worst.max(r.chi_into_ker_f).max(r.q_into_ker_h).max(r.q_chi_identity).max(r.chi_q_identity);
        if !r.pass {
            failures += 1;
        }
    }
    outcome(
        failures == 0 && worst <= tolerances::EXACT,
        format!("{count} pairs ({singular} singular), {failures} failures, worst residual {worst:.2e}"),
    )
}

fn norm_bounds() -> Outcome {
    let mut rng = testkit::rng(3);
    let mut violations = 0;
    let mut checked = 0;
    let mut worst_sup: f64 = 0.0;
    let mut worst_l2: f64 = 0.0;
    for m in 0..=2 {
        for n in 0..=2 {
            for case in 0..100 {
                let modes = 1 + case % 3;
                let n_max = 2 + case % 3;
                let frame = testkit::random_frame(&mut rng, modes, n_max);
                let k = testkit::random_kernel(&mut rng, &frame, m, n, case % 2 == 0, false);
                let h = op_norm(&k.assemble());
                let sup = k.norm_sup() / (factorial(m) * factorial(n)).sqrt();
                let l2 = k.norm_l2();
                checked += 1;
                if h > sup * (1.0 + 1e-12) || h > l2 * (1.0 + 1e-12) {
                    violations += 1;
                }
                if sup > 0.0 {
                    worst_sup = worst_sup.max(h / sup);
                }
                if l2 > 0.0 {
                    worst_l2 = worst_l2.max(h / l2);
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("{checked} kernels, {violations} violations, max ratios {worst_sup:.3} (sup) {worst_l2:.3} (L2)"),
    )
}

fn fixed_point_and_contraction() -> Outcome {
    let config = RGConfig::default();
    let modes = oprg::PhotonModes::geometric(0.9, 0.25, 4, 1.0).unwrap();
    let frame = Arc::new(Frame::from_modes(&modes, 2).unwrap());
    let z = C64::new(0.05, 0.01);
    let w = KernelSequence::free(frame.clone(), frame.levels.clone(), z, config.xi);
    let out = rg_step(&w, &config, 0).unwrap();
    let free = KernelSequence::free(out.next.frame.clone(), out.next.grid.clone(), out.next.z, config.xi);
    let fixed = out.next.distance(&free).max((out.next.z - z / config.rho).norm());

    let stage = InitialStage::new(&testkit::rg_ladder(), config.xi).unwrap();
    let (g0, _) = convergence_g0(&stage, &config, 2.0, 6);
    let Some(g0) = g0 else {
        return outcome(false, format!("free kernel distance {fixed:.1e}; no convergent coupling found"));
    };
    let mut runs = Vec::new();
    let mut pass = fixed <= tolerances::EXACT;
    for g in [g0 / 2.0, g0 / 4.0, g0 / 8.0] {
        match iterate(&stage, re(g), &config) {
            Ok(o) => {
                let ratios: Vec<f64> = o.trace.steps.iter().map(|s| s.gamma_ratio).collect();
                let mut best = 0;
                let mut run = 0;
                for r in &ratios {
                    run = if *r <= tolerances::CONTRACTION_RATIO { run + 1 } else { 0 };
                    best = best.max(run);
                }
                let max = ratios.iter().copied().fold(0.0, f64::max);
                pass &= best >= 10;
                runs.push(format!("g={g}: {best} steps, max ratio {max:.3}"));
            }
            Err(e) => {
                pass = false;
                runs.push(format!("g={g}: {e}"));
            }
        }
    }
    outcome(pass, format!("free kernel distance {fixed:.1e}; ladder g0={g0}; {}", runs.join("; ")))
}

fn master_energy(psi_norms: &mut Vec<f64>) -> Outcome {
    let config = RGConfig::default();
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for (name, model) in [("tls1", testkit::tls1()), ("three-level", testkit::three_level())] {
        let stage = InitialStage::new(&model, config.xi).unwrap();
        for g in [0.005, 0.01, 0.02] {
            let ed = ed_ground_ops(&stage.ops, g).unwrap().energy;
            match iterate(&stage, re(g), &config) {
                Ok(o) => {
                    worst = worst.max((o.energy.re - ed).abs() - o.chain.last().ledger);
                    if let Ok(v) = eigenvector(&stage, &o, re(g)) {
                        psi_norms.push(v.psi0_norm);
                    }
                }
                Err(e) => errors.push(format!("{name} g={g}: {e}")),
            }
        }
    }
    outcome(
        errors.is_empty() && worst <= tolerances::ENERGY_MATCH,
        format!("6 points, worst |E_ED - E_RG| {worst:.2e}{}", if errors.is_empty() { String::new() } else { format!("; {}", errors.join("; ")) }),
    )
}

fn coefficient_agreement() -> Outcome {
    match coefficient_match(&testkit::tls1(), 0.3, 4, &MatchOptions::default()) {
        Ok(r) => {
            let d = r.max_discrepancy();
            outcome(
                d <= tolerances::COEFFICIENT_MATCH && r.max_odd <= tolerances::ODD_COEFFICIENT,
                format!("orders 0..=4 at sigma 0.3, max discrepancy {d:.2e}, max odd {:.2e}", r.max_odd),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn constant_bounds(psi_norms: &[f64]) -> Outcome {
    let mut resolvent: f64 = 0.0;
    for model in [testkit::tls1(), testkit::three_level(), testkit::sigma_ladder()] {
        let stage = InitialStage::new(&model, 0.25).unwrap();
        for k in 0..10 {
            let radius = 0.049 * k as f64;
            for j in 0..16 {
                let z = C64::from_polar(radius, std::f64::consts::PI * j as f64 / 8.0);
                resolvent = resolvent.max(stage.pair(re(0.0), z).unwrap().resolvent_norm);
            }
        }
    }
    let psi = psi_norms.iter().copied().fold(0.0, f64::max);
    let model = testkit::tls1();
    let stage = InitialStage::new(&model, 0.25).unwrap();
    let mut energy: f64 = 0.0;
    let mut failures = 0;
    for radius in [0.1, 0.5, 1.0] {
        for j in 0..8 {
            let g = C64::from_polar(radius, std::f64::consts::PI * j as f64 / 4.0);
            match iterate(&stage, g, &RGConfig::default()) {
                Ok(o) => energy = energy.max(o.energy.norm()),
                Err(_) => failures += 1,
            }
        }
    }
    let bound = model.e_at().abs() + 0.5;
    outcome(
        resolvent <= 4.0 && !psi_norms.is_empty() && psi <= tolerances::psi0_bound() && energy <= bound && failures == 0,
        format!(
            "resolvent {resolvent:.4} <= 4, psi0 {psi:.4} <= {:.2} over {} runs, |E(g)| {energy:.2e} <= {bound} on the disk",
            tolerances::psi0_bound(),
            psi_norms.len()
        ),
    )
}

fn sigma_continuity() -> Outcome {
    let grid = [0.8, 0.4, 0.2, 0.1, 0.05, 0.0];
    match sigma_continuity_scan(&testkit::sigma_ladder(), 0.5, &grid, &ScanOptions::default()) {
        Ok(scan) => {
            let finest = scan.finest_e2_difference().unwrap_or(f64::INFINITY);
            let diffs: Vec<String> = scan.rows.iter().skip(1).map(|r| format!("{:.1e}", r.difference)).collect();
            outcome(
                scan.monotone_below(0.2) && finest <= 1e-5,
                format!("differences [{}], finest E2 difference {finest:.2e}", diffs.join(", ")),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn configured_models() -> Vec<DiscretizedModel> {
    vec![testkit::tls1(), testkit::three_level(), testkit::rg_ladder(), testkit::sigma_ladder(), testkit::scaled_tls(2.0)]
}

fn pull_through_and_ccr() -> Outcome {
    let f = |x: f64| 1.0 / (1.0 + x) + x * x;
    let mut worst: f64 = 0.0;
    let mut bases = 0;
    for model in configured_models() {
        let ops = ModelOperators::new(&model).unwrap();
        let frame = Frame::from_modes(&model.modes, model.n_max).unwrap();
        for basis in [&ops.basis, &frame.basis] {
            bases += 1;
            for i in 0..basis.modes() {
                worst = worst.max(pull_through_residual(basis, &f, i));
                for j in 0..basis.modes() {
                    worst = worst.max(ccr_residual(basis, i, j));
                }
            }
        }
    }
    outcome(worst <= tolerances::PULL_THROUGH, format!("{bases} bases, worst residual {worst:.2e}"))
}

fn injectivity_round_trip() -> Outcome {
    let mut rng = testkit::rng(10);
    let mut worst: f64 = 0.0;
    let count = 60;
    for case in 0..count {
        let frame = testkit::random_frame(&mut rng, 1 + case % 3, 2 + case % 2);
        let w = testkit::random_sequence(&mut rng, &frame, 4);
        let h = w.assemble().unwrap();
        match reconstruct(&h, frame.clone(), w.z, w.xi) {
            Ok(back) => worst = worst.max(back.distance(&w)),
            Err(_) => worst = f64::INFINITY,
        }
    }
    outcome(worst <= tolerances::ROUND_TRIP, format!("{count} sequences, worst sample difference {worst:.2e}"))
}

fn main() -> ExitCode {
    let mut psi_norms = Vec::new();
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!(
            "criterion {n:>2} {:<4} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        results.push((n, name, o));
    };
    run(1, "wick identity", &mut wick_identity);
    run(2, "feshbach isospectrality", &mut feshbach_isospectrality);
    run(3, "norm bounds", &mut norm_bounds);
    run(4, "fixed point and contraction", &mut fixed_point_and_contraction);
    run(5, "master energy check", &mut || master_energy(&mut psi_norms));
    run(6, "coefficient agreement", &mut coefficient_agreement);
    run(7, "constant bounds", &mut || constant_bounds(&psi_norms));
    run(8, "sigma continuity", &mut sigma_continuity);
    run(9, "pull-through and ccr", &mut pull_through_and_ccr);
    run(10, "injectivity round trip", &mut injectivity_round_trip);
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} of {} criteria pass [{:.1}s]", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

