//! Closed-form benchmark solutions against finite-difference solvers and
//! against the residual operator.

use std::f64::consts::PI;

use cpinn_core::pde::{exact_heat, exact_source_heat, exact_source_wave, exact_wave};
use cpinn_core::sampling::make_grid;
use cpinn_core::PdeProblem;

/// Solves `a x_{i-1} + b x_i + c x_{i+1} = d_i` in place.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// Crank–Nicolson for `u_t = u_xx + g(x)`, `u(0)=0`, `u_x(π)=0`,
/// unknowns at `x_1..x_N` with a ghost node mirrored about `x_N`.
fn heat_fd(nx: usize, dt: f64, t_end: f64, snapshots: &[f64]) -> Vec<Vec<f64>> {
    let dx = PI / nx as f64;
    let xs: Vec<f64> = (1..=nx).map(|i| i as f64 * dx).collect();
    let r = dt / (dx * dx);
    let mut u: Vec<f64> = xs.iter().map(|x| (x / 2.0).sin()).collect();
    let g: Vec<f64> = xs.iter().map(|&x| exact_source_heat(x)).collect();
    let n = nx;
    let (mut a, b, mut c) = (vec![-r / 2.0; n], vec![1.0 + r; n], vec![-r / 2.0; n]);
    a[0] = 0.0;
    a[n - 1] = -r;
    c[n - 1] = 0.0;
    let steps = (t_end / dt).round() as usize;
    let mut out = Vec::new();
    let mut next_snap = 0;
    for step in 1..=steps {
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let left = if i == 0 { 0.0 } else { u[i - 1] };
            let right = if i == n - 1 { u[n - 2] } else { u[i + 1] };
            rhs[i] = u[i] + r / 2.0 * (left - 2.0 * u[i] + right) + dt * g[i];
        }
        thomas(&a, &b, &c, &mut rhs);
        u = rhs;
        let t = step as f64 * dt;
        if next_snap < snapshots.len() && (t - snapshots[next_snap]).abs() < dt / 2.0 {
            out.push(u.clone());
            next_snap += 1;
        }
    }
    out
}

/// Leapfrog for `u_tt = u_xx + g(x,t)` with homogeneous Dirichlet ends.
fn wave_fd(nx: usize, dt: f64, snapshots: &[f64]) -> Vec<Vec<f64>> {
    let dx = PI / nx as f64;
    let xs: Vec<f64> = (0..=nx).map(|i| i as f64 * dx).collect();
    let r2 = (dt / dx).powi(2);
    let mut prev = vec![0.0; nx + 1];
    // u(dt) from the Taylor series: u = u_t = u_tt = 0 at t=0, u_ttt = g_t
    let mut cur: Vec<f64> = xs.iter().map(|&x| dt.powi(3) / 3.0 * (2.0 * x).sin()).collect();
    cur[0] = 0.0;
    cur[nx] = 0.0;
    let last = snapshots.iter().cloned().fold(0.0, f64::max);
    let steps = (last / dt).round() as usize;
    let mut out = Vec::new();
    let mut next_snap = 0;
    for step in 1..steps {
        let t = step as f64 * dt;
        let mut next = vec![0.0; nx + 1];
        for i in 1..nx {
            next[i] = 2.0 * cur[i] - prev[i]
                + r2 * (cur[i - 1] - 2.0 * cur[i] + cur[i + 1])
                + dt * dt * exact_source_wave(xs[i], t);
        }
        prev = cur;
        cur = next;
        let t_new = (step + 1) as f64 * dt;
        if next_snap < snapshots.len() && (t_new - snapshots[next_snap]).abs() < dt / 2.0 {
            out.push(cur.clone());
            next_snap += 1;
        }
    }
    out
}

#[test]
fn heat_closed_form_matches_crank_nicolson() {
    let nx = 400;
    let snaps = [1.0, 3.0, 10.0];
    let fd = heat_fd(nx, 1e-4, 10.0, &snaps);
    assert_eq!(fd.len(), snaps.len());
    let dx = PI / nx as f64;
    for (s, u) in snaps.iter().zip(&fd) {
        let worst =
            u.iter().enumerate().map(|(i, v)| (v - exact_heat((i + 1) as f64 * dx, *s)).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-4, "t={s}: max deviation {worst:e}");
    }
}

#[test]
fn wave_closed_form_matches_leapfrog() {
    let nx = 800;
    let snaps = [2.0, 4.0, 6.0];
    let fd = wave_fd(nx, 1e-3, &snaps);
    assert_eq!(fd.len(), snaps.len());
    let dx = PI / nx as f64;
    for (s, u) in snaps.iter().zip(&fd) {
        let worst = u.iter().enumerate().map(|(i, v)| (v - exact_wave(i as f64 * dx, *s)).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-4, "t={s}: max deviation {worst:e}");
    }
}

#[test]
fn exact_pairs_have_zero_residual_on_grid() {
    for p in [PdeProblem::<f64>::heat(), PdeProblem::wave()] {
        let grid = make_grid(&p, 50, 50).unwrap();
        for &[x, t] in &grid.points {
            let r = p.residual(&p.exact_jet(x, t).unwrap(), p.exact_g(x, t).unwrap());
            assert!(r.abs() <= 1e-8, "{:?} at ({x}, {t}): {r:e}", p.kind);
        }
    }
}

#[test]
fn boundary_and_initial_conditions_hold() {
    let heat = PdeProblem::<f64>::heat();
    let wave = PdeProblem::<f64>::wave();
    for i in 0..=20 {
        let t = i as f64 * 0.3;
        let x = i as f64 * PI / 20.0;
        assert_eq!(exact_heat(0.0, t), 0.0);
        assert!(heat.exact_jet(PI, t).unwrap().dx.abs() < 1e-15);
        assert!((exact_heat(x, 0.0) - (x / 2.0).sin()).abs() < 1e-15);
        assert!(exact_wave(0.0, t).abs() < 1e-15 && exact_wave(PI, t).abs() < 1e-14);
        assert_eq!(exact_wave(x, 0.0), 0.0);
        assert!(wave.exact_jet(x, 0.0).unwrap().dt.abs() < 1e-15);
    }
}
