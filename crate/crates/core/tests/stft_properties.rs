use num_complex::Complex64;
use proptest::prelude::*;
use wsilrma::{analyze, synthesize, StftConfig, TimeSignal, Window};

fn signal(samples: Vec<f64>) -> TimeSignal {
    TimeSignal::mono(samples, 8000).unwrap()
}

fn window_strategy() -> impl Strategy<Value = StftConfig> {
    prop_oneof![
        Just(StftConfig::new(64, 32, Window::SqrtHann).unwrap()),
        Just(StftConfig::new(64, 16, Window::SqrtHann).unwrap()),
        Just(StftConfig::new(128, 64, Window::Hann).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn synthesis_inverts_analysis(
        cfg in window_strategy(),
        x in prop::collection::vec(-1.0f64..1.0, 130..700),
    ) {
        let sig = signal(x.clone());
        let back = synthesize(&analyze(&sig, &cfg).unwrap(), &cfg).unwrap();
        prop_assert_eq!(back.len(), x.len());
        let err = back.channel(0).iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "max abs error {}", err);
    }

    #[test]
    fn analysis_is_linear(
        cfg in window_strategy(),
        pair in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 130..500),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pair.into_iter().unzip();
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let sx = analyze(&signal(x), &cfg).unwrap();
        let sy = analyze(&signal(y), &cfg).unwrap();
        let sz = analyze(&signal(z), &cfg).unwrap();
        for ((zx, xx), yx) in sz.bins.iter().zip(sx.bins.iter()).zip(sy.bins.iter()) {
            let want = *xx * alpha + *yx * beta;
            prop_assert!((zx - want).norm() < 1e-9);
        }
    }
}

/// Interior frames must agree with a direct O(N^2) DFT of the windowed frame.
#[test]
fn interior_frame_matches_direct_dft() {
    let cfg = StftConfig::new(64, 32, Window::SqrtHann).unwrap();
    let x: Vec<f64> = (0..640).map(|n| (0.37 * n as f64).sin() + 0.2 * (1.9 * n as f64).cos()).collect();
    let spec = analyze(&signal(x.clone()), &cfg).unwrap();
    let win = Window::SqrtHann.analysis(64);
    // With reflect padding of frame_len / 2, frame t starts at t * hop - 32.
    let t = 6;
    let start = t * 32 - 32;
    for f in 0..cfg.n_bins() {
        let direct: Complex64 = (0..64)
            .map(|n| {
                let phase = -2.0 * std::f64::consts::PI * (f * n) as f64 / 64.0;
                Complex64::from_polar(x[start + n] * win[n], phase)
            })
            .sum();
        let got = spec.bins[[0, f, t]];
        assert!((got - direct).norm() < 1e-9, "bin {f}: {got} vs {direct}");
    }
}

#[test]
fn channels_are_transformed_independently() {
    let cfg = StftConfig::new(64, 32, Window::SqrtHann).unwrap();
    let a: Vec<f64> = (0..400).map(|n| (0.1 * n as f64).sin()).collect();
    let b: Vec<f64> = (0..400).map(|n| (0.05 * n as f64).cos()).collect();
    let both = analyze(&TimeSignal::from_channels(&[a.clone(), b], 8000).unwrap(), &cfg).unwrap();
    let alone = analyze(&signal(a), &cfg).unwrap();
    let diff = &both.bins.index_axis(ndarray::Axis(0), 0) - &alone.bins.index_axis(ndarray::Axis(0), 0);
    assert!(diff.iter().all(|d| d.norm() < 1e-12));
}
