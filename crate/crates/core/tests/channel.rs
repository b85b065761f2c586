use std::f64::consts::PI;

use chanest::channel::{cfr_from_cir, convolve, gen_veh_a, propagate, ChannelModel, ChannelRealization, PowerDelayProfile};
use chanest::cpofdm::modulate;
use chanest::rng;
use chanest::spectral::dft_submatrix;
use chanest::{Error, IndexSet, SystemConfig, C64};
use nalgebra::DVector;

fn cfg(m: usize, lh: usize) -> SystemConfig {
    SystemConfig::new(m, lh, 4, 1.0).unwrap()
}

fn random_taps(len: usize, seed: u64) -> Vec<C64> {
    let mut r = rng::rng(seed);
    rng::cn_vec(&mut r, len, 1.0)
}

#[test]
fn veh_a_occupies_29_of_32_taps() {
    let model = ChannelModel::veh_a(&cfg(1024, 32)).unwrap();
    assert_eq!(model.lh(), 32);
    assert_eq!(model.occupied_taps(), 29);
    let h = gen_veh_a(3, &cfg(1024, 32)).unwrap();
    assert_eq!(h.h.len(), 32);
    assert!(h.h[29..].iter().all(|z| z.norm() == 0.0));
}

#[test]
fn profile_longer_than_lh_is_rejected() {
    let err = ChannelModel::new(&PowerDelayProfile::veh_a(), 16, Some(2510.0 / 28.0)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn draws_are_deterministic() {
    let c = cfg(128, 32);
    assert_eq!(gen_veh_a(77, &c).unwrap(), gen_veh_a(77, &c).unwrap());
    assert_ne!(gen_veh_a(77, &c).unwrap(), gen_veh_a(78, &c).unwrap());
}

#[test]
fn mean_channel_energy_is_one() {
    let model = ChannelModel::veh_a(&cfg(1024, 32)).unwrap();
    let n = 10_000;
    let mean: f64 = (0..n).map(|s| model.draw(rng::derive(5, &[s])).energy()).sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.03, "mean energy {mean}");
}

#[test]
fn cfr_of_delta_and_unit_delay() {
    let m = 64;
    let mut h = vec![C64::new(0.0, 0.0); 8];
    h[0] = C64::new(1.0, 0.0);
    assert!(cfr_from_cir(&h, m).unwrap().iter().all(|z| (z - 1.0).norm() < 1e-12));
    h.swap(0, 1);
    for (k, z) in cfr_from_cir(&h, m).unwrap().iter().enumerate() {
        let want = C64::from_polar(1.0, -2.0 * PI * k as f64 / m as f64);
        assert!((z - want).norm() < 1e-12);
    }
    assert!(cfr_from_cir(&vec![C64::new(0.0, 0.0); 65], m).is_err());
}

#[test]
fn cfr_matches_dense_oracle() {
    let (m, lh) = (128, 16);
    let h = random_taps(lh, 9);
    let f = dft_submatrix(m, &IndexSet::full(m), &IndexSet::range(m, 0, lh).unwrap()).unwrap();
    let want = f * DVector::from_column_slice(&h);
    let got = cfr_from_cir(&h, m).unwrap();
    for k in 0..m {
        assert!((got[k] - want[k]).norm() < 1e-9);
    }
}

#[test]
fn propagate_identity_and_impulse() {
    let s = random_taps(40, 1);
    let out = propagate(&s, &ChannelRealization::impulse(8), 0.0, 0).unwrap();
    assert_eq!(out.len(), 47);
    assert!(s.iter().zip(&out).all(|(a, b)| (a - b).norm() < 1e-15));
    assert!(out[40..].iter().all(|z| z.norm() == 0.0));

    let h = ChannelRealization { h: random_taps(8, 2) };
    let mut delta = vec![C64::new(0.0, 0.0); 10];
    delta[0] = C64::new(1.0, 0.0);
    let out = propagate(&delta, &h, 0.0, 0).unwrap();
    assert!(h.h.iter().zip(&out).all(|(a, b)| (a - b).norm() < 1e-15));
}

#[test]
fn propagate_rejects_bad_inputs() {
    let h = ChannelRealization::impulse(4);
    assert!(matches!(propagate(&[], &h, 0.0, 0), Err(Error::Dimension(_))));
    assert!(matches!(propagate(&[C64::new(1.0, 0.0)], &h, -1.0, 0), Err(Error::Parameter(_))));
}

#[test]
fn cp_turns_convolution_circular() {
    let c = cfg(64, 16);
    let x = random_taps(64, 11);
    let frame = modulate(&x, &c).unwrap();
    let h = random_taps(16, 12);
    let r = propagate(&frame.s, &ChannelRealization { h: h.clone() }, 0.0, 0).unwrap();
    let useful = &frame.s[c.nu()..];
    for n in 0..64 {
        let want: C64 = (0..16).map(|l| h[l] * useful[(n + 64 - l) % 64]).sum();
        assert!((r[c.nu() + n] - want).norm() < 1e-9);
    }
}

#[test]
fn noise_variance_matches() {
    let n = 1_000_000;
    let s = vec![C64::new(0.0, 0.0); n];
    let sigma2 = 0.37;
    let out = propagate(&s, &ChannelRealization::impulse(1), sigma2, 4).unwrap();
    let var = out.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
    assert!((var / sigma2 - 1.0).abs() < 0.02, "variance {var}");
    // same seed, same noise
    assert_eq!(out, propagate(&s, &ChannelRealization::impulse(1), sigma2, 4).unwrap());
}

#[test]
fn convolve_lengths() {
    assert!(convolve(&[], &[C64::new(1.0, 0.0)]).is_empty());
    assert_eq!(convolve(&random_taps(5, 1), &random_taps(3, 2)).len(), 7);
}
