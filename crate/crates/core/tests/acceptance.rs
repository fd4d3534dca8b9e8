//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then
//! asserts it. Run with
//! `cargo test -p thinfilm --test acceptance -- --nocapture --test-threads=1`.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thinfilm::energy::{
    effective_field, energy_terms, limit_energy, solve_magnetostatics, AnisotropyModel,
    MaterialParams, SampleGeometry,
};
use thinfilm::gamma::{
    decreasing_tail, eps_sweep, recovery_sequence, recovery_sweep, RecoveryInput,
};
use thinfilm::minimize::{InitialState, MinimizeConfig};
use thinfilm::spectral::{
    constraint_residual, defect_norm, AfreeProjector, SpectralGrid, VectorField, ZeroModePolicy,
};
use thinfilm::OperatorSpec;

fn verdict(id: u32, name: &str, passed: bool, detail: String) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id:>2} ({name}): {detail}");
    assert!(passed, "criterion {id} ({name}) failed: {detail}");
}

fn random_field(grid: SpectralGrid, channels: usize, rng: &mut ChaCha8Rng) -> VectorField {
    let data = (0..grid.len() * channels)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    VectorField::from_vec(grid, channels, data).unwrap()
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (
        t < limit,
        format!("{:.2}s of {:.0}s", t.as_secs_f64(), limit.as_secs_f64()),
    )
}

#[test]
fn criterion_01_constant_rank() {
    let start = Instant::now();
    let report = OperatorSpec::maxwell().check_constant_rank(10_000, 1);
    let (fast, time) = within(start, Duration::from_secs(1));
    let axes_ok = report.axis_ranks.iter().all(|&r| r == 3);
    verdict(
        1,
        "constant rank",
        report.rank == 3 && report.constant && axes_ok && report.samples_checked >= 10_006 && fast,
        format!(
            "rank {} at {} directions, {} deviations, axis ranks {:?}, {time}",
            report.rank,
            report.samples_checked,
            report.deviations.len(),
            report.axis_ranks
        ),
    );
}

#[test]
fn criterion_02_projection_properties() {
    let start = Instant::now();
    let base = SpectralGrid::unit([32, 32, 32]).unwrap();
    let checked_eps = [1.0, 0.25, 1.0 / 16.0];
    let schedule = [1.0, 0.5, 0.25, 0.125, 1.0 / 16.0, 1.0 / 32.0];
    let fields = 100;
    let tol = 1e-10;
    let mut worst = [0.0f64; 3];
    let mut uniform = true;
    let mut detail = Vec::new();
    for (name, op) in [
        ("div", OperatorSpec::div()),
        ("curl", OperatorSpec::curl()),
        ("maxwell", OperatorSpec::maxwell()),
    ] {
        let mut ratios = Vec::new();
        for &eps in &schedule {
            let grid = base.with_eps(eps).unwrap();
            let proj = AfreeProjector::new(&op, grid, true).unwrap();
            let full = checked_eps.contains(&eps);
            let mut rng = ChaCha8Rng::seed_from_u64(2024);
            let mut ratio = 0.0f64;
            for _ in 0..fields {
                let u = random_field(grid, op.fields(), &mut rng);
                let pu = proj.apply(&u).unwrap();
                if full {
                    let ppu = proj.apply(&pu).unwrap();
                    worst[0] = worst[0].max(ppu.sub(&pu).unwrap().l2_norm());
                    worst[1] = worst[1].max(constraint_residual(&pu, &op, true).unwrap());
                    worst[2] = worst[2].max(pu.l2_norm() - u.l2_norm());
                }
                let defect = defect_norm(&u, &op, true).unwrap();
                ratio = ratio.max(u.sub(&pu).unwrap().l2_norm() / defect);
            }
            ratios.push(ratio);
        }
        let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
        uniform &= max_ratio <= 1.05 * ratios[0];
        detail.push(format!(
            "{name} C(eps) = [{}]",
            ratios
                .iter()
                .map(|r| format!("{r:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    let (fast, time) = within(start, Duration::from_secs(120));
    verdict(
        2,
        "projection properties",
        worst[0] < tol && worst[1] < tol && worst[2] < tol && uniform && fast,
        format!(
            "idempotence {:.1e}, residual {:.1e}, norm excess {:.1e}; {}; {time}",
            worst[0],
            worst[1],
            worst[2],
            detail.join("; ")
        ),
    );
}

#[test]
fn criterion_03_helmholtz() {
    let start = Instant::now();
    let base = SpectralGrid::unit([32, 32, 32]).unwrap();
    let mut worst = 0.0f64;
    for eps in [1.0, 0.25, 1.0 / 16.0] {
        let grid = base.with_eps(eps).unwrap();
        let curl = AfreeProjector::with_policy(
            &OperatorSpec::curl(),
            grid,
            true,
            ZeroModePolicy::Identity,
        )
        .unwrap();
        let div =
            AfreeProjector::with_policy(&OperatorSpec::div(), grid, true, ZeroModePolicy::Zero)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let f = random_field(grid, 3, &mut rng);
            let rest = f
                .sub(&curl.apply(&f).unwrap())
                .unwrap()
                .sub(&div.apply(&f).unwrap())
                .unwrap();
            worst = worst.max(rest.l2_norm() / f.l2_norm());
        }
    }
    let (fast, time) = within(start, Duration::from_secs(60));
    verdict(
        3,
        "Helmholtz identity",
        worst < 1e-10 && fast,
        format!("max relative defect {worst:.2e}, {time}"),
    );
}

/// One-sided Jacobi SVD: returns `V` (columns) and `A·V` (columns), whose
/// norms are the singular values.
fn jacobi(a: &[Vec<f64>], n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let l = a.len();
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| (0..l).map(|i| a[i][j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-17 * (alpha * beta).sqrt() {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for cols in [&mut w, &mut v] {
                    for i in 0..cols[p].len() {
                        let (x, y) = (cols[p][i], cols[q][i]);
                        cols[p][i] = c * x - s * y;
                        cols[q][i] = s * x + c * y;
                    }
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    (v, w)
}

/// Kernel projector and pseudo-inverse from the Jacobi SVD.
fn oracle(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (l, n) = a.shape();
    let rows: Vec<Vec<f64>> = (0..l)
        .map(|i| (0..n).map(|j| a[(i, j)]).collect())
        .collect();
    let (v, w) = jacobi(&rows, n);
    let sigma: Vec<f64> = w
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let mut p = DMatrix::zeros(n, n);
    let mut q = DMatrix::zeros(n, l);
    for j in 0..n {
        if sigma[j] <= 1e-10 * smax || smax == 0.0 {
            for r in 0..n {
                for c in 0..n {
                    p[(r, c)] += v[j][r] * v[j][c];
                }
            }
        } else {
            for r in 0..n {
                for c in 0..l {
                    q[(r, c)] += v[j][r] * w[j][c] / (sigma[j] * sigma[j]);
                }
            }
        }
    }
    (p, q)
}

#[test]
fn criterion_04_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let builtins = [
        OperatorSpec::div(),
        OperatorSpec::curl(),
        OperatorSpec::maxwell(),
    ];
    let mut worst_p = 0.0f64;
    let mut worst_q = 0.0f64;
    let mut checked = 0;
    while checked < 1000 {
        let op = if checked % 2 == 0 {
            builtins[(checked / 2) % 3].clone()
        } else {
            let l = rng.random_range(1..=4);
            let n = rng.random_range(1..=5);
            let coeffs = (0..3)
                .map(|_| DMatrix::from_fn(l, n, |_, _| f64::from(rng.random_range(-2i32..=2))))
                .collect();
            match OperatorSpec::new(coeffs) {
                Ok(op) => op,
                Err(_) => continue,
            }
        };
        let xi: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = op.symbol(&xi).unwrap().entries;
        let (p_or, q_or) = oracle(&a);
        let p = op.kernel_projector(&xi).unwrap().entries;
        worst_p = worst_p.max((p - p_or).abs().max());
        if let Ok(q) = op.q_matrix(&xi) {
            let scale = q_or.abs().max().max(1.0);
            worst_q = worst_q.max((q.entries - q_or).abs().max() / scale);
        }
        checked += 1;
    }
    let (fast, time) = within(start, Duration::from_secs(10));
    verdict(
        4,
        "oracle equivalence",
        worst_p < 1e-10 && worst_q < 1e-10 && fast,
        format!("{checked} pairs, projector {worst_p:.2e}, pseudo-inverse {worst_q:.2e}, {time}"),
    );
}

#[test]
fn criterion_05_symbol_convergence() {
    let start = Instant::now();
    let op = OperatorSpec::maxwell();
    let schedule = [1.0, 0.5, 0.25, 0.125, 1.0 / 16.0];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut monotone = true;
    let mut worst_final = 0.0f64;
    let mut n = 0;
    while n < 50 {
        let xi = random_unit(&mut rng);
        // sample the cone |ξ₃| ≥ |ξ′| around the normal direction
        if xi[2].abs() < (xi[0] * xi[0] + xi[1] * xi[1]).sqrt() {
            continue;
        }
        let devs: Vec<f64> = op
            .symbol_convergence_check(&xi, &schedule)
            .unwrap()
            .iter()
            .map(|p| p.1)
            .collect();
        monotone &= devs.windows(2).all(|w| w[1] < w[0]);
        worst_final = worst_final.max(*devs.last().unwrap());
        n += 1;
    }
    let (fast, time) = within(start, Duration::from_secs(5));
    verdict(
        5,
        "symbol convergence",
        monotone && worst_final < 0.05 && fast,
        format!(
            "{n} frequencies, monotone {monotone}, max final deviation {worst_final:.4}, {time}"
        ),
    );
}

#[test]
fn criterion_06_slab_magnetostatics() {
    let start = Instant::now();
    let m_s = 1.0;
    let grid = SpectralGrid::unit([4, 4, 64]).unwrap();
    let inside = |x: f64| (0.25..0.75).contains(&x);
    let m = VectorField::from_fn(grid, 3, |x, o| o[2] = if inside(x[2]) { m_s } else { 0.0 });
    let h = solve_magnetostatics(&m).unwrap();
    let exact = VectorField::from_fn(grid, 3, |x, o| {
        o[2] = m_s / 2.0 - if inside(x[2]) { m_s } else { 0.0 }
    });
    let err = h.sub(&exact).unwrap().l2_norm();
    let (fast, time) = within(start, Duration::from_secs(5));
    verdict(
        6,
        "slab magnetostatics",
        err < 1e-10 && fast,
        format!("L2 error {err:.2e}, {time}"),
    );
}

#[test]
fn criterion_07_gradient_check() {
    let start = Instant::now();
    let grid = SpectralGrid::new([16, 16, 16], [2.0, 2.0, 2.0], 0.5).unwrap();
    let geom = SampleGeometry::centered(grid, [8, 8], 8).unwrap();
    let params = MaterialParams::new(
        0.2,
        1.0,
        AnisotropyModel::uniaxial([1.0, 1.0, 0.0], 0.6).unwrap(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let t = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut m = VectorField::zeros(grid, 3);
        let mut dm = VectorField::zeros(grid, 3);
        for idx in geom.film_cells() {
            m.at_mut(idx)
                .copy_from_slice(&random_unit(&mut rng).map(|x| params.m_s * x));
            for v in dm.at_mut(idx) {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let h = solve_magnetostatics(&m).unwrap();
        let analytic = -effective_field(&m, &h, &geom, &params).dot(&dm);
        let f = |s: f64| {
            let ms = m.axpy(s, &dm).unwrap();
            let hs = solve_magnetostatics(&ms).unwrap();
            energy_terms(&ms, &hs, &geom, &params).total
        };
        let fd = (f(t) - f(-t)) / (2.0 * t);
        worst = worst.max((fd - analytic).abs() / analytic.abs());
    }
    let (fast, time) = within(start, Duration::from_secs(60));
    verdict(
        7,
        "gradient check",
        worst < 1e-5 && fast,
        format!("max relative error {worst:.2e}, {time}"),
    );
}

#[test]
fn criterion_08_recovery_sequence() {
    let start = Instant::now();
    let m_s = 1.0;
    let grid = SpectralGrid::new([32, 32, 64], [2.0, 2.0, 4.0], 1.0).unwrap();
    let geom = SampleGeometry::centered(grid, [16, 16], 16).unwrap();
    let params = MaterialParams::new(
        0.1,
        m_s,
        AnisotropyModel::uniaxial([1.0, 0.0, 0.0], 0.3).unwrap(),
    )
    .unwrap();
    let inp = RecoveryInput::reduced(geom.uniform([0.0, 0.0, m_s]), &geom, m_s).unwrap();
    let schedule = [1.0, 0.5, 0.25, 0.125, 1.0 / 16.0];
    let records = recovery_sweep(&inp, &geom, &params, &schedule).unwrap();
    let worst_residual = records
        .iter()
        .map(|r| r.maxwell_residual)
        .fold(0.0, f64::max);
    let worst_saturation = records
        .iter()
        .map(|r| r.saturation_error)
        .fold(0.0, f64::max);
    let gaps: Vec<f64> = records.iter().map(|r| r.energy_gap).collect();
    let feasible = records.iter().all(|r| r.energy_eps.is_finite());
    let (m, _) = recovery_sequence(&inp, 1.0 / 16.0).unwrap();
    let unchanged = m.data() == inp.m0().data();
    let (fast, time) = within(start, Duration::from_secs(120));
    verdict(
        8,
        "recovery sequence",
        worst_residual < 1e-10 && worst_saturation < 1e-10 && feasible && unchanged && decreasing_tail(&gaps) && fast,
        format!(
            "Maxwell residual {worst_residual:.1e}, saturation {worst_saturation:.1e}, |F_eps - F_0| = [{}] vs F_0 = {:.6}, {time}",
            gaps.iter().map(|g| format!("{g:.5}")).collect::<Vec<_>>().join(", "),
            records[0].energy_limit
        ),
    );
}

#[test]
fn criterion_09_gamma_sweep() {
    let start = Instant::now();
    let grid = SpectralGrid::new([64, 64, 32], [2.0, 2.0, 4.0], 1.0).unwrap();
    let geom = SampleGeometry::centered(grid, [32, 32], 8).unwrap();
    let params = MaterialParams::new(
        0.05,
        1.0,
        AnisotropyModel::uniaxial([1.0, 0.0, 0.0], 0.5).unwrap(),
    )
    .unwrap();
    let cfg = MinimizeConfig {
        max_iters: 2000,
        grad_tol: 1e-6,
        init: InitialState::EasyAxis,
        ..Default::default()
    };
    let out = eps_sweep(&geom, &params, &[1.0, 0.5, 0.25, 0.125], &cfg).unwrap();
    let (fast, time) = within(start, Duration::from_secs(600));
    let lines: Vec<String> = out
        .summary
        .assertions
        .iter()
        .map(|a| {
            format!(
                "{} {} [{}]",
                a.name,
                if a.passed { "ok" } else { "NOT" },
                a.values
                    .iter()
                    .map(|v| format!("{v:.3e}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    verdict(
        9,
        "Gamma-limit sweep",
        out.records.len() == 4 && out.summary.assertions.len() == 3 && out.summary.passed && fast,
        format!(
            "{}; limit energy {:.3e}; {time}",
            lines.join("; "),
            out.limit.report.total
        ),
    );
}

#[test]
fn criterion_10_limit_constants() {
    let start = Instant::now();
    let grid = SpectralGrid::new([16, 16, 1], [1.5, 0.75, 1.0], 1.0).unwrap();
    let mut worst = 0.0f64;
    let cases = [
        (
            1.0,
            AnisotropyModel::uniaxial([1.0, 0.0, 0.0], 0.3).unwrap(),
        ),
        (
            2.0,
            AnisotropyModel::uniaxial([0.0, 0.0, 1.0], 0.7).unwrap(),
        ),
        (0.8, AnisotropyModel::cubic(1.1).unwrap()),
        (1.3, AnisotropyModel::Zero),
    ];
    for (m_s, anis) in cases {
        let params = MaterialParams::new(0.4, m_s, anis).unwrap();
        let plane = SampleGeometry::centered(grid, [10, 6], 1).unwrap();
        let m = plane.uniform([0.0, 0.0, m_s]);
        let value = limit_energy(&m, &plane, &params).unwrap().total;
        let area = 10.0 * 6.0 * (1.5 / 16.0) * (0.75 / 16.0);
        let phi = params.anisotropy.density(&[0.0, 0.0, m_s], m_s);
        let direct = area * (phi + 0.5 * m_s * m_s);
        worst = worst.max((value - direct).abs());
    }
    let (fast, time) = within(start, Duration::from_secs(1));
    verdict(
        10,
        "limit functional constants",
        worst < 1e-10 && fast,
        format!("max deviation {worst:.2e}, {time}"),
    );
}
