//! Tapped solution network: causality, initialization and training.

use cpinn_core::network::{init_xavier, NetSpec};
use cpinn_core::rp::{
    build_rp_input, init_netu_rp, predict_points, synthetic_series, train_netu_rp, RpConfig, RpTrainConfig,
    SensorSeries, TapSource,
};
use cpinn_core::sampling::sample;
use cpinn_core::{PdeProblem, SamplingConfig};
use proptest::prelude::*;

fn sensor_config(xs: &[f64], delay: f64, depth: usize) -> RpConfig<f64> {
    RpConfig {
        availability: vec![TapSource::HardSensor; xs.len()],
        depth,
        ..RpConfig::fallback_only(xs.to_vec(), delay)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn taps_never_read_samples_after_the_bracket(
        x in 0.0..std::f64::consts::PI,
        t in 0.0..6.0f64,
        delay in 0.01..1.0f64,
        depth in 1usize..4,
    ) {
        let p = PdeProblem::<f64>::wave();
        let xs = [0.7, 2.1];
        let series = synthetic_series(&p, &xs, 20.0).unwrap();
        let u = init_xavier::<f64>(&NetSpec::net_u(3)).unwrap();
        let cfg = sensor_config(&xs, delay, depth);
        let clean = build_rp_input(x, t, &cfg, &series, &u, &p).unwrap();
        // the latest sample a tap may touch brackets t - delay from above
        let latest = t - delay;
        let poisoned: Vec<SensorSeries<f64>> = series
            .iter()
            .map(|s| {
                let mut s = s.clone();
                let keep = if latest < 0.0 { 0 } else { s.bracket(latest).unwrap().1 + 1 };
                for v in &mut s.values[keep..] {
                    *v = 1e6;
                }
                s
            })
            .collect();
        prop_assert_eq!(build_rp_input(x, t, &cfg, &poisoned, &u, &p).unwrap(), clean);
    }

    #[test]
    fn zero_taps_reproduce_the_solution_network(x in 0.0..3.0f64, t in 0.0..10.0f64) {
        let u = init_xavier::<f64>(&NetSpec::net_u(5)).unwrap();
        let rp = init_netu_rp(&u, 3, 11).unwrap();
        let a = u.forward(&[x, t]).unwrap();
        let b = rp.forward(&[x, t, 0.0, 0.0, 0.0]).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }
}

#[test]
fn untrained_no_tap_network_predicts_like_the_solution_network() {
    let p = PdeProblem::<f64>::heat();
    let d = sample(&p, &SamplingConfig { collocation: 10, ..SamplingConfig::heat() }, 2).unwrap();
    let u = init_xavier::<f64>(&NetSpec::net_u(1)).unwrap();
    let g = init_xavier::<f64>(&NetSpec::net_g_steady(2)).unwrap();
    let cfg = RpConfig::fallback_only(vec![], 0.1);
    let out =
        train_netu_rp(&u, &g, &d, &p, &cfg, &[], &RpTrainConfig { iters: 0, ..RpTrainConfig::default() }).unwrap();
    assert_eq!(out.net, u);
    let pts = [[0.3, 1.0], [2.0, 9.5]];
    let pred = predict_points(&out.net, &cfg, &[], &u, &p, &pts).unwrap();
    for (v, q) in pred.iter().zip(&pts) {
        assert_eq!(*v, u.forward(q).unwrap());
    }
}

#[test]
fn training_never_increases_the_hybrid_loss() {
    let p = PdeProblem::<f64>::wave();
    let d = sample(&p, &SamplingConfig { boundary: 40, interior: 20, collocation: 20, ..SamplingConfig::wave() }, 4)
        .unwrap();
    let mut spec = NetSpec::net_u(6);
    spec.hidden_layers = 2;
    spec.hidden_width = 10;
    let u = init_xavier::<f64>(&spec).unwrap();
    let g = init_xavier::<f64>(&NetSpec::net_g(7)).unwrap();
    let xs = [1.0, 2.0];
    let series = synthetic_series(&p, &xs, 50.0).unwrap();
    let cfg = RpConfig {
        availability: vec![TapSource::HardSensor, TapSource::CpinnFallback],
        ..RpConfig::fallback_only(xs.to_vec(), 0.05)
    };
    let out =
        train_netu_rp(&u, &g, &d, &p, &cfg, &series, &RpTrainConfig { iters: 30, ..RpTrainConfig::default() }).unwrap();
    assert!(out.final_loss <= out.initial_loss);
    assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
}
