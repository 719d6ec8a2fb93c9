//! Jets and parameter gradients against finite differences.

use cpinn_core::autodiff::{jet_forward, loss_grad, Jet2, Order};
use cpinn_core::cpinn::SolutionObjective;
use cpinn_core::network::{init_xavier, MlpParams, NetRole, NetSpec};
use cpinn_core::sampling::{Dataset, LabelKind, Sample};
use cpinn_core::PdeProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Five-point first derivative.
fn d1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Five-point second derivative.
fn d2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h)) / (12.0 * h * h)
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn random_spec(rng: &mut ChaCha8Rng, i: u64) -> NetSpec {
    NetSpec {
        role: NetRole::NetU,
        hidden_layers: rng.random_range(1..=4),
        hidden_width: rng.random_range(3..=30),
        input_dim: 2,
        seed: 1000 + i,
    }
}

fn fd_jet(net: &MlpParams<f64>, x: f64, t: f64, h: f64) -> [f64; 5] {
    let f = |x: f64, t: f64| net.forward(&[x, t]).unwrap();
    [
        d1(|x| f(x, t), x, h),
        d1(|t| f(x, t), t, h),
        d2(|x| f(x, t), x, h),
        d2(|t| f(x, t), t, h),
        d1(|t| d1(|x| f(x, t), x, h), t, h),
    ]
}

#[test]
fn jets_match_finite_differences_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let net = init_xavier::<f64>(&random_spec(&mut rng, i)).unwrap();
        let x = rng.random_range(0.0..std::f64::consts::PI);
        let t = rng.random_range(0.0..10.0);
        let jet = jet_forward(&net, &[x, t]).unwrap();
        let fd = fd_jet(&net, x, t, 1e-3);
        for (a, b) in [jet.dx, jet.dt, jet.dxx, jet.dtt, jet.dxt].into_iter().zip(fd) {
            worst = worst.max(rel_err(a, b, 1e-3));
        }
        assert_eq!(jet.v, net.forward(&[x, t]).unwrap());
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn jet_of_default_solution_network_at_fixed_point() {
    let net = init_xavier::<f64>(&NetSpec::net_u(3)).unwrap();
    let jet = jet_forward(&net, &[1.0, 0.5]).unwrap();
    let f = |x: f64| net.forward(&[x, 0.5]).unwrap();
    assert!(rel_err(jet.dx, d1(f, 1.0, 1e-4), 1e-3) <= 1e-6);
    assert!(rel_err(jet.dxx, d2(f, 1.0, 1e-3), 1e-3) <= 1e-6);
}

#[test]
fn tap_inputs_do_not_enter_the_jet_derivatives() {
    let mut spec = NetSpec::net_u_rp(3, 5);
    spec.hidden_layers = 2;
    let net = init_xavier::<f64>(&spec).unwrap();
    let taps = [0.3, -0.2, 0.9];
    let f = |x: f64, t: f64| net.forward(&[x, t, taps[0], taps[1], taps[2]]).unwrap();
    let jet = jet_forward(&net, &[1.2, 2.0, taps[0], taps[1], taps[2]]).unwrap();
    assert!(rel_err(jet.dx, d1(|x| f(x, 2.0), 1.2, 1e-3), 1e-3) <= 1e-6);
    assert!(rel_err(jet.dtt, d2(|t| f(1.2, t), 2.0, 1e-3), 1e-3) <= 1e-6);
}

fn heat_points(n: usize, seed: u64) -> Dataset<f64> {
    let p = PdeProblem::<f64>::heat();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Dataset::default();
    for _ in 0..n {
        let x = rng.random_range(0.0..std::f64::consts::PI);
        let t = rng.random_range(0.0..10.0);
        d.d_i.push(Sample::value(x, t, p.exact_u(x, t).unwrap()));
    }
    d
}

#[test]
fn hybrid_loss_gradient_matches_finite_differences() {
    let p = PdeProblem::<f64>::heat();
    let d = heat_points(10, 11);
    let net_u = init_xavier::<f64>(&NetSpec::net_u(21)).unwrap();
    let net_g = init_xavier::<f64>(&NetSpec::net_g(22)).unwrap();
    let obj = SolutionObjective::for_dataset(&p, &d, &net_g, 1.0).unwrap();
    let (_, grad) = obj.eval(&net_u).unwrap();
    let value = |theta: &[f64]| {
        let net = net_u.with_flat(theta.to_vec()).unwrap();
        let (parts, _) = obj.eval(&net).unwrap();
        obj.objective_value(&parts)
    };
    let theta = net_u.as_flat().to_vec();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (k, g) in grad.as_slice().iter().enumerate() {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[k] += h;
        minus[k] -= h;
        let fd = (value(&plus) - value(&minus)) / (2.0 * h);
        worst = worst.max(rel_err(*g, fd, 1e-2));
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn slope_label_gradient_matches_finite_differences() {
    let p = PdeProblem::<f64>::heat();
    let mut d = heat_points(6, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..8 {
        let t = rng.random_range(0.0..10.0);
        d.d_b.push(Sample { x: p.length, t, u: 0.3, kind: LabelKind::SlopeX });
    }
    d.extra_collocation.push([1.0, 2.0]);
    let net_u = init_xavier::<f64>(&NetSpec::net_u(31)).unwrap();
    let net_g = init_xavier::<f64>(&NetSpec::net_g_steady(32)).unwrap();
    let obj = SolutionObjective::for_dataset(&p, &d, &net_g, 1.0).unwrap();
    let (_, grad) = obj.eval(&net_u).unwrap();
    let theta = net_u.as_flat().to_vec();
    let value = |k: usize, h: f64| {
        let mut th = theta.clone();
        th[k] += h;
        let (parts, _) = obj.eval(&net_u.with_flat(th).unwrap()).unwrap();
        obj.objective_value(&parts)
    };
    let h = 1e-5;
    let worst = grad
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, g)| rel_err(*g, (value(k, h) - value(k, -h)) / (2.0 * h), 1e-2))
        .fold(0.0, f64::max);
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn gradient_is_linear_in_the_loss() {
    let net = init_xavier::<f64>(&NetSpec::net_u(4)).unwrap();
    let pts: Vec<[f64; 2]> = (0..13).map(|i| [0.2 * i as f64, 0.7 * i as f64]).collect();
    let l1 = |_: usize, j: &Jet2<f64>| (j.dxx * j.dxx, Jet2 { dxx: 2.0 * j.dxx, ..Jet2::zero() });
    let l2 = |_: usize, j: &Jet2<f64>| (j.v, Jet2::constant(1.0));
    let (a, b) = (0.75, -2.5);
    let (_, g1) = loss_grad(&net, &pts, Order::Second, l1).unwrap();
    let (_, g2) = loss_grad(&net, &pts, Order::Second, l2).unwrap();
    let (_, g) = loss_grad(&net, &pts, Order::Second, |i, j| {
        let (v1, s1) = l1(i, j);
        let (v2, s2) = l2(i, j);
        (a * v1 + b * v2, s1.scale(a) + s2.scale(b))
    })
    .unwrap();
    for k in 0..g.len() {
        let want = a * g1.as_slice()[k] + b * g2.as_slice()[k];
        assert!((g.as_slice()[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn gradient_is_bit_identical_across_thread_counts() {
    let net = init_xavier::<f64>(&NetSpec::net_u(8)).unwrap();
    let pts: Vec<[f64; 2]> = (0..203).map(|i| [(i as f64 * 0.37) % 3.1, (i as f64 * 0.11) % 10.0]).collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            loss_grad(&net, &pts, Order::Second, |_, j| (j.dt * j.dt, Jet2 { dt: 2.0 * j.dt, ..Jet2::zero() })).unwrap()
        })
    };
    let (l1, g1) = run(1);
    let (l4, g4) = run(4);
    assert_eq!(l1.to_bits(), l4.to_bits());
    assert!(g1.as_slice().iter().zip(g4.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    let (l1b, g1b) = run(1);
    assert_eq!(l1.to_bits(), l1b.to_bits());
    assert_eq!(g1, g1b);
}
