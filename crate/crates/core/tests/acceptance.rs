//! End-to-end acceptance checks. Runs without the libtest harness and
//! prints one line per criterion.

#[path = "../../conic/tests/support/reference.rs"]
mod reference;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use isac_conic::{solve, SolverSettings, Status};
use isac_core::array::{generate_channels, steer, steer_deriv, ArrayGeometry, ChannelModel};
use isac_core::experiment::{
    dbm_to_watts, run_design, run_sweep, simulate, write_rows, write_w_csv, Scenario, SweepAxis,
    SweepSpec,
};
use isac_core::fim::{compute_z1, crb_phi_closed_form, crb_phi_oracle, CMat, SensingParams};
use isac_core::geometry::{JacobianMode, LosPartition, LosSubsection, TargetPose};
use isac_core::par::ExecMode;
use isac_core::sdr::{
    build_sdr_problem, extract_rank_one, sinr, solve_sdr, DesignConstraints, DesignVariant, ExtractionSettings,
    Scoring,
};
use isac_core::Error;
use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, trace: f64) -> CMat {
    let cols = rng.random_range(1..=n);
    let g = CMat::from_fn(n, cols, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let r = &g * g.adjoint();
    let t = r.trace().re;
    r * real(trace / t)
}

fn point_partition(pose: &TargetPose) -> LosPartition {
    LosPartition {
        subsections: vec![LosSubsection {
            u: 0.0,
            l: 1.0,
            d: pose.d_o,
            phi: pose.phi_o,
            r: Vector2::zeros(),
            p: pose.center(),
        }],
        u_lower: 0.0,
        u_upper: 0.0,
        contiguous: true,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn point_target_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let geo = ArrayGeometry::new(rng.random_range(2..=24), rng.random_range(2..=24)).unwrap();
        let pose = TargetPose::new(
            rng.random_range(10.0..100.0),
            rng.random_range(-1.2..1.2),
            rng.random_range(-3.0..3.0),
        )
        .unwrap();
        let part = point_partition(&pose);
        let params = SensingParams::new(
            1.0 / (pose.d_o * pose.d_o),
            10f64.powf(rng.random_range(-12.0..-8.0)),
            rng.random_range(0.1..10.0),
            1e8,
        )
        .unwrap();
        let power = rng.random_range(0.1..10.0);
        let rx = random_psd(&mut rng, geo.n_t, power);
        let closed = crb_phi_closed_form(&part, &rx, &params, &geo).map_err(|e| e.to_string())?;
        for mode in [JacobianMode::Approximate, JacobianMode::Exact] {
            let oracle = crb_phi_oracle(&part, &pose, &rx, &params, &geo, mode).map_err(|e| e.to_string())?;
            worst = worst.max(rel(closed, oracle));
        }
    }
    check(worst <= 1e-8, format!("worst relative gap {worst:.2e} over 50 draws"))
}

fn default_agreement() -> Outcome {
    let res = Scenario::default().resolve(ExecMode::Parallel).map_err(|e| e.to_string())?;
    let out = run_design(&res, DesignVariant::CrbMin, None).map_err(|e| e.to_string())?;
    let rx = out.set.covariance();
    let closed = out.report.crb_rad2;
    let approx = crb_phi_oracle(&res.partition, &res.pose, &rx, &res.params, &res.geometry, JacobianMode::Approximate)
        .map_err(|e| e.to_string())?;
    let exact = crb_phi_oracle(&res.partition, &res.pose, &rx, &res.params, &res.geometry, JacobianMode::Exact)
        .map_err(|e| e.to_string())?;
    let gap = rel(closed, approx);
    check(
        gap <= 0.15,
        format!(
            "closed {closed:.4e}, oracle {approx:.4e} (gap {:.2}%), exact-Jacobian oracle {exact:.4e} (gap {:.2}%)",
            100.0 * gap,
            100.0 * rel(closed, exact)
        ),
    )
}

fn derivative_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut fd_worst, mut norm_worst): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let phi = rng.random_range(-1.5..1.5);
        for n in [rng.random_range(2..=32), rng.random_range(2..=32)] {
            let h = 1e-5;
            let fd = (steer(n, phi + h) - steer(n, phi - h)) / real(2.0 * h);
            let d = steer_deriv(n, phi);
            fd_worst = fd_worst.max((fd - &d).norm() / d.norm().max(1e-300));
            let nb = steer(n, phi).norm_squared();
            norm_worst = norm_worst.max(rel(nb, n as f64));
            norm_worst = norm_worst.max(rel(d.norm_squared(), n as f64 * compute_z1(n, phi)));
        }
    }
    check(
        fd_worst <= 1e-6 && norm_worst <= 1e-9,
        format!("finite-difference {fd_worst:.2e}, norm identities {norm_worst:.2e}"),
    )
}

fn homogeneity() -> Outcome {
    let res = Scenario::default().resolve(ExecMode::Sequential).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rx = random_psd(&mut rng, res.geometry.n_t, 1.0);
        let c = rng.random_range(0.1..10.0);
        let s = rng.random_range(0.1..10.0);
        let mut noisy = res.params;
        noisy.sigma_s2 *= s;
        let eval = |r: &CMat, p: &SensingParams| -> Result<(f64, f64), Error> {
            Ok((
                crb_phi_closed_form(&res.partition, r, p, &res.geometry)?,
                crb_phi_oracle(&res.partition, &res.pose, r, p, &res.geometry, res.jacobian)?,
            ))
        };
        let base = eval(&rx, &res.params).map_err(|e| e.to_string())?;
        let scaled = eval(&(&rx * real(c)), &res.params).map_err(|e| e.to_string())?;
        let louder = eval(&rx, &noisy).map_err(|e| e.to_string())?;
        worst = worst
            .max(rel(scaled.0 * c, base.0))
            .max(rel(scaled.1 * c, base.1))
            .max(rel(louder.0, base.0 * s))
            .max(rel(louder.1, base.1 * s));
    }
    check(worst <= 1e-9, format!("worst relative error {worst:.2e} over 100 instances"))
}

fn solver_certification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let settings = SolverSettings::default();
    let (mut res_worst, mut obj_worst): (f64, f64) = (0.0, 0.0);
    for case in 0..50 {
        let inst = reference::random_sdp(&mut rng);
        let (p, _) = inst.to_problem();
        let sol = solve(&p, &settings).map_err(|e| format!("case {case}: {e}"))?;
        if sol.status != Status::Optimal {
            return Err(format!("case {case}: status {}", sol.status.as_str()));
        }
        res_worst = res_worst.max(sol.primal_residual).max(sol.dual_residual).max(sol.duality_gap);
        let r = inst.reference_objective();
        obj_worst = obj_worst.max((sol.objective - r).abs() / r.abs().max(1.0));
    }
    check(
        res_worst <= 1e-8 && obj_worst <= 1e-4,
        format!("worst residual {res_worst:.2e}, worst objective gap vs reference {obj_worst:.2e}"),
    )
}

fn constraint_audit() -> Outcome {
    let res = Scenario::default().resolve(ExecMode::Parallel).map_err(|e| e.to_string())?;
    let prob = build_sdr_problem(&res.partition, &res.geometry, &res.constraints).map_err(|e| e.to_string())?;
    let sol = solve_sdr(&prob, &res.solver, res.extraction.rank_eps).map_err(|e| e.to_string())?;
    let cons = &res.constraints;
    let geo = &res.geometry;
    let quad = |r: &CMat, a: &nalgebra::DVector<Complex64>, b: &nalgebra::DVector<Complex64>| a.dotc(&(r * b));

    let c1 = sol.r_x.trace().re - cons.p_t;
    let mut c2: f64 = f64::INFINITY;
    for (c, h) in cons.channels.h.iter().enumerate() {
        let own = (1.0 + 1.0 / cons.gamma) * quad(&sol.r_c[c], h, h).re;
        let rhs = quad(&sol.r_x, h, h).re + cons.channels.noise[c];
        c2 = c2.min((own - rhs) / (own.abs() + rhs.abs()));
    }
    let mut pk: f64 = f64::INFINITY;
    for (k, s) in res.partition.subsections.iter().enumerate() {
        let a = geo.steer_tx(s.phi);
        let da = geo.steer_tx_deriv(s.phi);
        let coef = da.norm_squared() / geo.steer_rx(s.phi).norm_squared();
        let gain = quad(&sol.r_x, &a, &a).re;
        let m00 = coef * gain + quad(&sol.r_x, &da, &da).re - sol.t[k];
        let m01 = quad(&sol.r_x, &da, &a).re;
        let block = Matrix2::new(m00, m01, m01, gain);
        let scale = block.abs().max();
        pk = pk.min(block.symmetric_eigenvalues().min() / scale);
    }
    let gains: Vec<f64> = res
        .partition
        .subsections
        .iter()
        .map(|s| {
            let a = geo.steer_tx(s.phi);
            quad(&sol.r_x, &a, &a).re
        })
        .collect();
    let lo = gains.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cover = 2.0 * lo - hi;
    check(
        c1 <= 1e-6 * cons.p_t && c2 >= -1e-6 && pk >= -1e-6 && cover >= -1e-6 * hi,
        format!(
            "power excess {c1:.2e} W, worst SINR slack {c2:.2e}, worst P_k eigenvalue {pk:.2e}, coverage 2min-max {cover:.3e} (max {hi:.3e})"
        ),
    )
}

fn extraction_contract() -> Outcome {
    let base = Scenario::default().resolve(ExecMode::Sequential).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checked, mut infeasible, mut rejected, mut failed) = (0, 0, 0, 0);
    let (mut sinr_worst, mut power_worst): (f64, f64) = (0.0, 0.0);
    for inst in 0..500u64 {
        let n_t = rng.random_range(2..=8);
        let users = rng.random_range(1..=n_t.min(4));
        let geo = ArrayGeometry::new(n_t, n_t).unwrap();
        let angles: Vec<f64> = (0..users).map(|_| rng.random_range(-75f64..75.0).to_radians()).collect();
        let model = if rng.random_bool(0.5) {
            ChannelModel::LosOnly
        } else {
            ChannelModel::Multipath { paths: 2, decay: 0.3 }
        };
        let channels = generate_channels(&geo, &angles, dbm_to_watts(-80.0), model, inst).unwrap();
        let gamma = 10f64.powf(rng.random_range(0.0..1.0));
        let cons = DesignConstraints::new(1.0, gamma, rng.random_bool(0.5), channels).unwrap();
        let sol = match build_sdr_problem(&base.partition, &geo, &cons)
            .and_then(|p| solve_sdr(&p, &SolverSettings::default(), 1e-6))
        {
            Ok(s) => s,
            Err(Error::Infeasible { .. }) => {
                infeasible += 1;
                continue;
            }
            Err(_) => {
                failed += 1;
                continue;
            }
        };
        let settings = ExtractionSettings {
            epochs: 30,
            seed: inst,
            rank_eps: 1e-6,
            mode: ExecMode::Sequential,
        };
        let scoring = Scoring {
            partition: &base.partition,
            geometry: &geo,
            params: &base.params,
        };
        let set = match extract_rank_one(&sol, &cons, &scoring, &settings) {
            Ok(s) => s,
            Err(Error::ExtractionFailed { .. }) => {
                rejected += 1;
                continue;
            }
            Err(e) => return Err(format!("instance {inst}: {e}")),
        };
        checked += 1;
        for s in sinr(&set.w, &cons.channels) {
            sinr_worst = sinr_worst.max(rel(s, gamma));
        }
        power_worst = power_worst.max(set.power() / cons.p_t - 1.0);
    }
    check(
        checked > 0 && sinr_worst <= 1e-8 && power_worst <= 1e-6,
        format!(
            "{checked} sets checked ({infeasible} infeasible, {rejected} all-epochs-rejected, {failed} solver failures); worst SINR error {sinr_worst:.2e}, worst power excess {power_worst:.2e}"
        ),
    )
}

type SweepPoints = Vec<(f64, [Option<f64>; 3])>;

struct SweepResults {
    nt: SweepPoints,
    c: SweepPoints,
}

fn collect(axis: SweepAxis, values: Vec<f64>) -> Result<SweepPoints, String> {
    let spec = SweepSpec::all_variants(axis, values.clone());
    let rows = run_sweep(&Scenario::default(), &spec, ExecMode::Parallel, None).map_err(|e| e.to_string())?;
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, [0, 1, 2].map(|j| rows[3 * i + j].crb_rad2)))
        .collect())
}

fn run_sweeps() -> Result<SweepResults, String> {
    Ok(SweepResults {
        nt: collect(SweepAxis::Nt, (12..=20).map(f64::from).collect())?,
        c: collect(SweepAxis::C, (2..=5).map(f64::from).collect())?,
    })
}

fn dominance(s: &SweepResults) -> Outcome {
    let mut bad = Vec::new();
    let mut worst_ratio = f64::INFINITY;
    for (axis, pts) in [("N_t", &s.nt), ("C", &s.c)] {
        for (v, [crb, bp1, bp2]) in pts {
            match (crb, bp1, bp2) {
                (Some(a), Some(b), Some(c)) => {
                    worst_ratio = worst_ratio.min(b.min(*c) / a);
                    if a > b || a > c {
                        bad.push(format!("{axis}={v}"));
                    }
                }
                _ => bad.push(format!("{axis}={v} (failed point)")),
            }
        }
    }
    check(
        bad.is_empty(),
        format!(
            "{} points; smallest benchmark/crb-min ratio {worst_ratio:.3}{}",
            s.nt.len() + s.c.len(),
            if bad.is_empty() { String::new() } else { format!("; violations: {}", bad.join(", ")) }
        ),
    )
}

fn monotonicity(s: &SweepResults) -> Outcome {
    let crb: Vec<Option<f64>> = s.nt.iter().map(|(_, r)| r[0]).collect();
    let text: Vec<String> = crb
        .iter()
        .map(|c| c.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "fail".into()))
        .collect();
    let ok = crb.windows(2).all(|w| matches!(w, [Some(a), Some(b)] if b < a));
    check(ok, format!("crb-min over N_t = 12..20: {}", text.join(" ")))
}

fn estimator_sanity() -> Outcome {
    let scenario = Scenario::default();
    let res = scenario.resolve(ExecMode::Parallel).map_err(|e| e.to_string())?;
    let w = run_design(&res, DesignVariant::CrbMin, None).map_err(|e| e.to_string())?.set.w;
    let (_, summary) = simulate(&scenario, &res, &w, ExecMode::Parallel).map_err(|e| e.to_string())?;

    let mut quiet = scenario.clone();
    quiet.sensing.noise_dbm = -300.0;
    quiet.sim.runs = 5;
    quiet.sim.refine = false;
    let qres = quiet.resolve(ExecMode::Parallel).map_err(|e| e.to_string())?;
    let (rows, q) = simulate(&quiet, &qres, &w, ExecMode::Parallel).map_err(|e| e.to_string())?;
    let worst = rows.iter().map(|r| r.error_rad.abs()).fold(0.0, f64::max);
    check(
        summary.mse_rad2 >= summary.crb_rad2 && worst <= q.grid_step_rad,
        format!(
            "MSE {:.3e} vs CRB {:.3e} over {} runs (ratio {:.2e}); noise-free worst error {worst:.2e} rad, grid step {:.2e}",
            summary.mse_rad2, summary.crb_rad2, summary.runs, summary.ratio, q.grid_step_rad
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = Scenario::default();
    let mut design_files = Vec::new();
    for (i, mode) in [ExecMode::Parallel, ExecMode::Sequential, ExecMode::Parallel].into_iter().enumerate() {
        let res = scenario.resolve(mode).map_err(|e| e.to_string())?;
        let out = run_design(&res, DesignVariant::Bp1, None).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("w_{i}.csv"));
        write_w_csv(&path, &out.set.w).map_err(|e| e.to_string())?;
        design_files.push(fs::read(&path).map_err(|e| e.to_string())?);
    }
    let design_same = design_files.windows(2).all(|w| w[0] == w[1]);

    let spec = SweepSpec::all_variants(SweepAxis::Nt, vec![12.0, 13.0]);
    let mut sweeps = Vec::new();
    for (i, mode) in [ExecMode::Parallel, ExecMode::Sequential].into_iter().enumerate() {
        let sub = dir.path().join(format!("sweep_{i}"));
        fs::create_dir_all(&sub).map_err(|e| e.to_string())?;
        let rows = run_sweep(&scenario, &spec, mode, Some(&sub)).map_err(|e| e.to_string())?;
        write_rows(&sub.join("sweep.csv"), &rows).map_err(|e| e.to_string())?;
        let mut names: Vec<_> = fs::read_dir(&sub)
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        let bytes: Vec<(std::ffi::OsString, Vec<u8>)> =
            names.into_iter().map(|n| (n.clone(), fs::read(sub.join(&n)).unwrap())).collect();
        sweeps.push(bytes);
    }
    let sweep_same = sweeps[0] == sweeps[1];
    check(
        design_same && sweep_same,
        format!(
            "design W CSV identical across 3 runs: {design_same}; sweep CSV and {} W files identical: {sweep_same}",
            sweeps[0].len() - 1
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id:>2} PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name}: {d} [{secs:.1} s]");
            }
        }
    };
    report(1, "closed form equals oracle for a point target", &mut point_target_agreement);
    report(2, "closed form near oracle at defaults", &mut default_agreement);
    report(3, "steering derivative identities", &mut derivative_identities);
    report(4, "power homogeneity and noise scaling", &mut homogeneity);
    report(5, "solver certification against reference", &mut solver_certification);
    report(6, "relaxation constraint audit at defaults", &mut constraint_audit);
    report(7, "rank-one extraction contract", &mut extraction_contract);
    let mut sweeps: Option<Result<SweepResults, String>> = None;
    report(8, "crb-min dominates the benchmarks", &mut || {
        match sweeps.get_or_insert_with(run_sweeps) {
            Ok(s) => dominance(s),
            Err(e) => Err(e.clone()),
        }
    });
    let sweeps = sweeps.unwrap_or_else(|| Err("sweeps did not run".into()));
    report(9, "crb-min strictly decreasing in N_t", &mut || match &sweeps {
        Ok(s) => monotonicity(s),
        Err(e) => Err(e.clone()),
    });
    report(10, "estimator sanity", &mut estimator_sanity);
    report(11, "deterministic CSV output", &mut determinism);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
