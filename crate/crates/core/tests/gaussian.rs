use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use quadnet::gaussian::{
    apply, beam_splitter, beam_splitter_with, combination_variance, loss_channel, phase_shift, snl, squeezer,
    symplectic_form, Axis, BsConvention, GaussianChannel, GaussianState, PhasePort, PortSign, QuadForm,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn axis() -> impl Strategy<Value = Axis> {
    prop_oneof![Just(Axis::X), Just(Axis::Y)]
}

fn convention() -> impl Strategy<Value = BsConvention> {
    (any::<bool>(), any::<bool>()).prop_map(|(s, p)| BsConvention {
        sign: if s { PortSign::Plus } else { PortSign::Minus },
        phase_port: if p { PhasePort::First } else { PhasePort::Second },
    })
}

/// Two distinct modes of an `n`-mode system.
fn mode_pair() -> impl Strategy<Value = (usize, usize, usize)> {
    (2usize..6)
        .prop_flat_map(|n| (Just(n), 0..n, 1..n))
        .prop_map(|(n, i, k)| (n, i, (i + k) % n))
}

fn preserves_form(ch: &GaussianChannel) -> bool {
    let t = ch.transfer();
    let sigma = symplectic_form(t.nrows() / 2);
    (t * &sigma * t.transpose() - sigma).amax() < 1e-10 && ch.noise().amax() == 0.0
}

proptest! {
    #[test]
    fn squeezers_are_symplectic(n in 1usize..6, m in 0usize..6, r in 0.0f64..10.0, ax in axis()) {
        let ch = squeezer(n, m % n, r, ax).unwrap();
        // relative check: entries reach e^{10}
        let t = ch.transfer();
        let sigma = symplectic_form(n);
        prop_assert!((t * &sigma * t.transpose() - &sigma).amax() < 1e-10 * t.amax().powi(2));
        prop_assert_eq!(ch.noise().amax(), 0.0);
    }

    #[test]
    fn phase_shifts_are_symplectic(n in 1usize..6, m in 0usize..6, phi in -10.0f64..10.0) {
        prop_assert!(preserves_form(&phase_shift(n, m % n, phi).unwrap()));
    }

    #[test]
    fn beam_splitters_are_symplectic((n, i, j) in mode_pair(), theta in -10.0f64..10.0, conv in convention()) {
        prop_assert!(preserves_form(&beam_splitter_with(n, i, j, theta, conv).unwrap()));
    }

    #[test]
    fn passive_elements_keep_vacuum((n, i, j) in mode_pair(), theta in -7.0f64..7.0, phi in -7.0f64..7.0) {
        let vac = GaussianState::vacuum(n).unwrap();
        let ch = beam_splitter(n, i, j, theta).unwrap().then(&phase_shift(n, j, phi).unwrap()).unwrap();
        let out = apply(&vac, &ch).unwrap();
        prop_assert!((out.cov() - vac.cov()).amax() < 1e-12);
    }

    #[test]
    fn variance_is_quadratic_in_the_form(r in 0.0f64..2.0, theta in -3.0f64..3.0, alpha in -5.0f64..5.0,
                                         c in prop::array::uniform4(-2.0f64..2.0)) {
        prop_assume!(alpha != 0.0 && c.iter().any(|&v| v != 0.0));
        let st = apply(&GaussianState::vacuum(2).unwrap(), &squeezer(2, 0, r, Axis::X).unwrap()
            .then(&beam_splitter(2, 0, 1, theta).unwrap()).unwrap()).unwrap();
        let f = QuadForm::new(DVector::from_row_slice(&c)).unwrap();
        let v = combination_variance(&st, &f).unwrap();
        let va = combination_variance(&st, &f.scaled(alpha).unwrap()).unwrap();
        prop_assert!((va - alpha * alpha * v).abs() <= 1e-12 * (1.0 + va.abs()));
    }

    #[test]
    fn loss_interpolates_towards_vacuum(r in 0.0f64..3.0, phi in -3.0f64..3.0, eta in 0.0f64..=1.0,
                                        cx in -2.0f64..2.0, cy in -2.0f64..2.0) {
        prop_assume!(cx != 0.0 || cy != 0.0);
        let st = apply(&GaussianState::vacuum(1).unwrap(), &squeezer(1, 0, r, Axis::Y).unwrap()
            .then(&phase_shift(1, 0, phi).unwrap()).unwrap()).unwrap();
        let f = QuadForm::new(DVector::from_row_slice(&[cx, cy])).unwrap();
        let before = combination_variance(&st, &f).unwrap();
        let after = combination_variance(&apply(&st, &loss_channel(1, 0, eta).unwrap()).unwrap(), &f).unwrap();
        prop_assert!((after - (eta * before + (1.0 - eta) * snl(&f))).abs() < 1e-12 * (1.0 + before));
    }

    #[test]
    fn squeezed_vacuum_stays_pure(r in 0.0f64..5.0, ax in axis(), phi in -3.0f64..3.0) {
        let st = apply(&GaussianState::vacuum(1).unwrap(), &squeezer(1, 0, r, ax).unwrap()
            .then(&phase_shift(1, 0, phi).unwrap()).unwrap()).unwrap();
        let det = st.cov().determinant();
        prop_assert!((det - 1.0 / 16.0).abs() < 1e-12 * (1.0 + st.cov().amax().powi(2)));
    }
}

fn random_channel(rng: &mut ChaCha8Rng, n: usize) -> GaussianChannel {
    let mut ch = GaussianChannel::identity(n);
    for _ in 0..rng.random_range(1..6) {
        let m = rng.random_range(0..n);
        let next = match rng.random_range(0..4) {
            0 => squeezer(
                n,
                m,
                rng.random_range(0.0..2.0),
                if rng.random() { Axis::X } else { Axis::Y },
            ),
            1 => phase_shift(n, m, rng.random_range(-4.0..4.0)),
            2 if n > 1 => beam_splitter(n, m, (m + rng.random_range(1..n)) % n, rng.random_range(-4.0..4.0)),
            _ => loss_channel(n, m, rng.random_range(0.0..=1.0)),
        };
        ch = ch.then(&next.unwrap()).unwrap();
    }
    ch
}

/// Thermal noise plus a random channel: a generic physical state.
fn random_state(rng: &mut ChaCha8Rng, n: usize) -> GaussianState {
    let mut cov = DMatrix::identity(2 * n, 2 * n) * 0.25;
    for k in 0..n {
        let extra: f64 = rng.random_range(0.0..1.0);
        cov[(k, k)] += extra;
        cov[(k + n, k + n)] += extra;
    }
    let st = GaussianState::new(DVector::zeros(2 * n), cov).unwrap();
    apply(&st, &random_channel(rng, n)).unwrap()
}

#[test]
fn channels_preserve_physicality() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10_000 {
        let n = rng.random_range(1..5);
        let st = random_state(&mut rng, n);
        let ch = random_channel(&mut rng, n);
        let out = apply(&st, &ch).expect("physical input through a physical channel");
        assert!(out.is_physical(1e-9));
        assert!((out.cov() - out.cov().transpose()).amax() < 1e-12);
    }
}

#[test]
fn element_order_matters() {
    let a = squeezer(2, 0, 0.5, Axis::X)
        .unwrap()
        .then(&beam_splitter(2, 0, 1, 0.3).unwrap())
        .unwrap();
    let b = beam_splitter(2, 0, 1, 0.3)
        .unwrap()
        .then(&squeezer(2, 0, 0.5, Axis::X).unwrap())
        .unwrap();
    assert!((a.transfer() - b.transfer()).amax() > 1e-3);
}

#[test]
fn loss_on_squeezed_mode() {
    let st = apply(
        &GaussianState::vacuum(1).unwrap(),
        &squeezer(1, 0, 0.402, Axis::Y).unwrap(),
    )
    .unwrap();
    let lossy = apply(&st, &loss_channel(1, 0, 0.456).unwrap()).unwrap();
    let hand = 0.25 * (0.456 * (-0.804f64).exp() + 0.544);
    assert!((lossy.cov()[(1, 1)] - hand).abs() < 1e-15);
    assert!((lossy.cov()[(1, 1)] - 0.1870).abs() < 1e-4);
}
