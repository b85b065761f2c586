use chanest::channel::{cfr_from_cir, propagate, ChannelRealization};
use chanest::cpofdm::{cp_energy, demodulate, ls_cfr, modulate, CpOfdm};
use chanest::spectral::{cp_gram, equispaced_set};
use chanest::{rng, Error, IndexSet, SystemConfig, C64};
use nalgebra::DVector;
use proptest::prelude::*;

fn cfg(m: usize, lh: usize) -> SystemConfig {
    SystemConfig::new(m, lh, 4, 1.0).unwrap()
}

fn cvec(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b)), len)
}

fn energy(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

#[test]
fn equal_preamble_has_no_cp_energy() {
    let c = cfg(64, 8);
    let ex: f64 = 0.7;
    let x = vec![C64::new(ex.sqrt(), 0.0); 64];
    let frame = modulate(&x, &c).unwrap();
    assert!(frame.cp_energy() < 1e-12);
    assert!((frame.energy() - 64.0 * ex).abs() < 1e-9);
}

#[test]
fn equispaced_sparse_has_no_cp_energy() {
    let c = cfg(128, 16);
    let set = equispaced_set(128, 16, 3).unwrap();
    let mut x = vec![C64::new(0.0, 0.0); 128];
    for &k in set.as_slice() {
        x[k] = C64::new(2.0, 0.0);
    }
    assert!(cp_energy(&x, &c).unwrap() < 1e-12);
}

#[test]
fn cp_is_tail_copy() {
    let c = cfg(32, 8);
    let x = rng::cn_vec(&mut rng::rng(1), 32, 1.0);
    let s = modulate(&x, &c).unwrap().s;
    assert_eq!(s.len(), 32 + 7);
    for i in 0..7 {
        assert!((s[i] - s[32 + i]).norm() < 1e-15);
    }
}

#[test]
fn energy_identity_over_random_vectors() {
    let c = cfg(64, 16);
    let gram = cp_gram(64, c.nu()).unwrap();
    let mut r = rng::rng(3);
    for _ in 0..1000 {
        let x = rng::cn_vec(&mut r, 64, 1.0);
        let frame = modulate(&x, &c).unwrap();
        let v = DVector::from_column_slice(&x);
        let cp = (v.adjoint() * &gram * &v)[(0, 0)].re / 64.0;
        let want = energy(&x) + cp;
        assert!((frame.energy() - want).abs() < 1e-9 * want);
    }
}

#[test]
fn noiseless_delta_returns_x() {
    let c = cfg(64, 8);
    let x = rng::cn_vec(&mut rng::rng(2), 64, 1.0);
    let r = propagate(&modulate(&x, &c).unwrap().s, &ChannelRealization::impulse(8), 0.0, 0).unwrap();
    let y = demodulate(&r, &c).unwrap();
    assert!(x.iter().zip(&y).all(|(a, b)| (a - b).norm() < 1e-9));
}

#[test]
fn noiseless_channel_is_diagonal() {
    let c = cfg(128, 16);
    let x = rng::cn_vec(&mut rng::rng(4), 128, 1.0);
    let h = rng::cn_vec(&mut rng::rng(5), 16, 1.0 / 16.0);
    let hf = cfr_from_cir(&h, 128).unwrap();
    let r = propagate(&modulate(&x, &c).unwrap().s, &ChannelRealization { h }, 0.0, 0).unwrap();
    let y = demodulate(&r, &c).unwrap();
    for k in 0..128 {
        assert!((y[k] - hf[k] * x[k]).norm() < 1e-9);
    }
    let est = ls_cfr(&y, &x, &IndexSet::full(128)).unwrap();
    assert!(est.iter().zip(&hf).all(|(a, b)| (a - b).norm() < 1e-9));
}

#[test]
fn noise_only_tone_variance() {
    let c = cfg(1024, 8);
    let modem = CpOfdm::new(&c);
    let sigma2 = 0.25;
    let zero = vec![C64::new(0.0, 0.0); 1024];
    let s = modem.modulate(&zero).unwrap().s;
    let mut acc = 0.0;
    let trials = 100;
    for t in 0..trials {
        let r = propagate(&s, &ChannelRealization::impulse(8), sigma2, t).unwrap();
        acc += energy(&modem.demodulate(&r).unwrap());
    }
    let var = acc / (trials as f64 * 1024.0);
    assert!((var / sigma2 - 1.0).abs() < 0.03, "variance {var}");
}

#[test]
fn ls_error_is_sigma2_over_ex() {
    let c = cfg(256, 8);
    let modem = CpOfdm::new(&c);
    let (ex, sigma2): (f64, f64) = (2.0, 0.1);
    let x = vec![C64::new(ex.sqrt(), 0.0); 256];
    let s = modem.modulate(&x).unwrap().s;
    let tones = IndexSet::full(256);
    let mut acc = 0.0;
    let trials = 400;
    for t in 0..trials {
        let r = propagate(&s, &ChannelRealization::impulse(8), sigma2, 100 + t).unwrap();
        let est = ls_cfr(&modem.demodulate(&r).unwrap(), &x, &tones).unwrap();
        acc += est.iter().map(|z| (z - 1.0).norm_sqr()).sum::<f64>();
    }
    let mse = acc / (trials as f64 * 256.0);
    assert!((mse / (sigma2 / ex) - 1.0).abs() < 0.03, "mse {mse}");
}

#[test]
fn ls_at_null_tone_is_usage_error() {
    let x = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let y = x.clone();
    let set = IndexSet::new(2, vec![1]).unwrap();
    assert!(matches!(ls_cfr(&y, &x, &set), Err(Error::Usage(_))));
}

#[test]
fn length_errors() {
    let c = cfg(32, 8);
    assert!(matches!(modulate(&[C64::new(1.0, 0.0); 31], &c), Err(Error::Dimension(_))));
    assert!(matches!(demodulate(&[C64::new(1.0, 0.0); 38], &c), Err(Error::Dimension(_))));
}

proptest! {
    #[test]
    fn round_trip(x in cvec(64)) {
        let c = cfg(64, 8);
        let y = demodulate(&modulate(&x, &c).unwrap().s, &c).unwrap();
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }
}
