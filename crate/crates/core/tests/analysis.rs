use chanest::analysis::{
    afb_noise_cov, antenna_energy, closed_form_mse, error_floor, expected_antenna_energy, flat_floor, gaps, papr,
    sd1a_floor, tpr, verify_optimality, von_neumann,
};
use chanest::channel::{cfr_from_cir, convolve, ChannelModel, ChannelRealization};
use chanest::estimation::{estimate_from_pilots, DivisorMode, Method};
use chanest::oqam::{PrototypeDesign, PrototypeFilter};
use chanest::preamble::{
    make_full_equal, make_full_equipower_qam, make_sparse_data, make_sparse_equal, DataMapping, EnergyMode, Modems,
    Preamble, Scenario, Scheme,
};
use chanest::spectral::CMatrix;
use chanest::{rng, SystemConfig, C64};
use proptest::prelude::*;

fn modems(m: usize, lh: usize, k: usize) -> Modems {
    Modems::new(&SystemConfig::new(m, lh, k, 1.0).unwrap()).unwrap()
}

fn fs_modems(m: usize, lh: usize) -> Modems {
    let cfg = SystemConfig::new(m, lh, 4, 1.0).unwrap();
    let g = PrototypeFilter::design(m, 4, &PrototypeDesign::frequency_sampling(4).unwrap()).unwrap();
    Modems::with_prototype(&cfg, &g).unwrap()
}

fn energy(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Noiseless estimate through the sample-level chain.
fn simulate(p: &Preamble, md: &Modems, h: &[C64], mode: DivisorMode) -> Vec<C64> {
    let r = convolve(&md.transmit(p).unwrap(), h);
    let y = match p.scheme {
        Scheme::Qam => md.ofdm.demodulate(&r).unwrap(),
        Scheme::Oqam => md.bank.afb_column(&r, 0, p.rule, 0..md.bank.lg()).unwrap(),
    };
    let obs: Vec<C64> = p.pilots.as_slice().iter().map(|&k| y[k]).collect();
    estimate_from_pilots(&obs, p, md, mode).unwrap().cfr
}

#[test]
fn training_energies() {
    let md = modems(128, 8, 4);
    let ex = 0.25;
    let p = make_sparse_equal(&md, Scheme::Qam, 8, 0, 8.0 * ex).unwrap();
    assert!((antenna_energy(&p, &md).unwrap() - 8.0 * ex).abs() < 1e-12);

    let sd = make_sparse_data(&md, Scenario::QamSd, 0, 8.0 * ex, 3, DataMapping::QpskComponent).unwrap();
    let ratio = expected_antenna_energy(&sd, &md).unwrap() / (8.0 * ex);
    assert!((ratio - (1.0 + (120.0 * 7.0) / (128.0 * 8.0))).abs() < 1e-12);
    assert!((ratio - gaps::qam_sparse_data_ratio(128, 8)).abs() < 1e-12);

    // first-order accounting M(1+2 beta) with a pulse free of |dm| >= 2 terms
    let fs = fs_modems(1024, 32);
    let full = make_full_equal(&fs, Scheme::Oqam, 1024.0 * ex, EnergyMode::SfbInput).unwrap();
    let want = 1024.0 * (1.0 + 2.0 * fs.beta()) * ex;
    assert!((antenna_energy(&full, &fs).unwrap() / want - 1.0).abs() < 1e-3);
}

#[test]
fn tpr_examples() {
    let md = modems(1024, 32, 4);
    let ex = 1.0 / 1024.0;
    let full = make_full_equal(&md, Scheme::Qam, 1024.0 * ex, EnergyMode::Antenna).unwrap();
    let sparse = make_sparse_equal(&md, Scheme::Qam, 32, 0, 32.0 * ex).unwrap();
    let t = tpr(&full, &sparse, &md).unwrap();
    assert!((t.tpr - 32.0).abs() < 1e-9);
    assert!((t.db() - 15.05).abs() < 0.01);
    assert!((t.db() - gaps::qam_full_sparse(1024, 32)).abs() < 1e-9);
    assert!((tpr(&sparse, &sparse, &md).unwrap().tpr - 1.0).abs() < 1e-15);

    for (m, k, reported) in [(512, 3, 4.5), (1024, 4, 5.9)] {
        let md = modems(m, 32, k);
        let q = make_sparse_equal(&md, Scheme::Qam, 32, 0, 1.0).unwrap();
        let o = make_sparse_equal(&md, Scheme::Oqam, 32, 0, 1.0).unwrap();
        let t = tpr(&q, &o, &md).unwrap();
        assert!((t.db() - gaps::cross_system(m, 32, k)).abs() < 1e-5, "{}", t.db());
        assert!((t.db() - reported).abs() < 0.05, "M = {m}: {}", t.db());
    }
}

#[test]
fn sparse_qam_optimum() {
    let md = modems(256, 16, 4);
    let (e, sigma2) = (3.0, 0.2);
    let p = make_sparse_equal(&md, Scheme::Qam, 16, 5, e).unwrap();
    let pred = closed_form_mse(&p, &md, sigma2, Method::Interpolate, DivisorMode::Plain).unwrap();
    let per_tone = 16.0 * sigma2 / e;
    assert!((pred.mse / 256.0 - per_tone).abs() < 1e-12);
    assert!((pred.exact / 256.0 - per_tone).abs() < 1e-9);
}

#[test]
fn oqam_full_sparse_gap() {
    let md = modems(1024, 32, 4);
    let sigma2 = 0.01;
    let f = make_full_equal(&md, Scheme::Oqam, 1.0, EnergyMode::Antenna).unwrap();
    let s = make_sparse_equal(&md, Scheme::Oqam, 32, 0, 1.0).unwrap();
    // sparse preamble at the training power of the full one
    let s = s.scaled(1.0 / tpr(&s, &f, &md).unwrap().scale());
    let a = closed_form_mse(&s, &md, sigma2, Method::Interpolate, DivisorMode::Plain).unwrap().mse;
    let b = closed_form_mse(&f, &md, sigma2, Method::PerTone, DivisorMode::Pseudo).unwrap().mse;
    // full per-tone estimation loses to the interpolated sparse one
    let gap = 10.0 * (b / a).log10();
    assert!((gap - gaps::oqam_full_sparse(1024, 32, md.beta())).abs() < 0.1, "{gap}");
}

#[test]
fn more_pilots_equalized_match_lh_pilots() {
    let md = modems(256, 16, 4);
    let ex = 0.1;
    let sigma2 = 0.05;
    for scheme in [Scheme::Qam, Scheme::Oqam] {
        let base = make_sparse_equal(&md, scheme, 16, 0, 16.0 * ex).unwrap();
        let more = make_sparse_equal(&md, scheme, 32, 0, 32.0 * ex).unwrap();
        let t = tpr(&more, &base, &md).unwrap();
        assert!((t.db() - gaps::pilots_ratio(32, 16)).abs() < 1e-6);
        let eq = more.scaled(1.0 / t.scale());
        let a = closed_form_mse(&base, &md, sigma2, Method::Interpolate, DivisorMode::Plain).unwrap();
        let b = closed_form_mse(&eq, &md, sigma2, Method::Interpolate, DivisorMode::Plain).unwrap();
        assert!((a.mse / b.mse - 1.0).abs() < 1e-6);
        assert!((a.exact / b.exact - 1.0).abs() < 1e-6, "{scheme}");
    }
}

#[test]
fn cp_ofdm_has_no_floor() {
    let md = modems(128, 8, 4);
    let h = ChannelModel::veh_a(&md.cfg).unwrap().draw(2);
    for p in [
        make_sparse_equal(&md, Scheme::Qam, 8, 0, 1.0).unwrap(),
        make_sparse_data(&md, Scenario::QamSd, 0, 1.0, 1, DataMapping::QpskComponent).unwrap(),
    ] {
        assert_eq!(error_floor(&p, &md, &h, Method::Interpolate, DivisorMode::Plain).unwrap().floor, 0.0);
        let cfr = cfr_from_cir(&h.h, 128).unwrap();
        let est = simulate(&p, &md, &h.h, DivisorMode::Plain);
        assert!(est.iter().zip(&cfr).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() < 1e-20);
    }
}

#[test]
fn floor_matches_noiseless_chain() {
    let md = modems(128, 8, 4);
    let model = ChannelModel::veh_a(&md.cfg).unwrap();
    for (ch, s) in [Scenario::Oqam1a, Scenario::Oqam1b, Scenario::Oqam2, Scenario::Oqam3].into_iter().enumerate() {
        let h = model.draw(40 + ch as u64);
        let cfr = cfr_from_cir(&h.h, 128).unwrap();
        let p = make_sparse_data(&md, s, 0, 1.0, 7, DataMapping::QpskComponent).unwrap();
        let est = simulate(&p, &md, &h.h, DivisorMode::Plain);
        let sim: f64 = est.iter().zip(&cfr).map(|(a, b)| (a - b).norm_sqr()).sum();
        let fl = error_floor(&p, &md, &h, Method::Interpolate, DivisorMode::Plain).unwrap().floor;
        assert!((fl / sim - 1.0).abs() < 1e-9, "{s:?}: {fl} vs {sim}");
    }
    let full = make_full_equal(&md, Scheme::Oqam, 1.0, EnergyMode::Antenna).unwrap();
    let h = model.draw(50);
    let cfr = cfr_from_cir(&h.h, 128).unwrap();
    let est = simulate(&full, &md, &h.h, DivisorMode::Pseudo);
    let sim: f64 = est.iter().zip(&cfr).map(|(a, b)| (a - b).norm_sqr()).sum();
    let fl = error_floor(&full, &md, &h, Method::PerTone, DivisorMode::Pseudo).unwrap().floor;
    assert!((fl / sim - 1.0).abs() < 1e-9);
}

#[test]
fn flat_model_is_exact_for_a_single_tap() {
    let md = modems(64, 4, 4);
    let mut h = ChannelRealization::impulse(4);
    h.h[0] = C64::new(0.3, -0.8);
    let p = make_sparse_data(&md, Scenario::Oqam3, 0, 1.0, 2, DataMapping::QpskComponent).unwrap();
    let a = error_floor(&p, &md, &h, Method::Interpolate, DivisorMode::Plain).unwrap().floor;
    let b = flat_floor(&p, &md, &h, Method::Interpolate, DivisorMode::Plain).unwrap().floor;
    assert!((a / b - 1.0).abs() < 1e-9);
}

#[test]
fn sd1a_floor_small_instance() {
    let md = modems(16, 2, 4);
    let model = ChannelModel::veh_a(&md.cfg).unwrap();
    let pilots = make_sparse_equal(&md, Scheme::Oqam, 2, 0, 1.0).unwrap().pilots;
    let (mut sim, mut formula) = (0.0, 0.0);
    let (channels, draws) = (200u64, 40u64);
    for ch in 0..channels {
        let h = model.draw(rng::derive(11, &[ch]));
        let cfr = cfr_from_cir(&h.h, 16).unwrap();
        let hn = energy(&cfr);
        formula += sd1a_floor(&cfr, &pilots, md.beta(), 2) / hn;
        for d in 0..draws {
            let p = make_sparse_data(&md, Scenario::Oqam1a, 0, 1.0, rng::derive(12, &[ch, d]), DataMapping::QpskComponent)
                .unwrap();
            let est = simulate(&p, &md, &h.h, DivisorMode::Plain);
            sim += est.iter().zip(&cfr).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / hn / draws as f64;
        }
    }
    assert!((sim / formula - 1.0).abs() < 0.05, "{} vs {}", sim / channels as f64, formula / channels as f64);
}

#[test]
fn guards_remove_the_dominant_floor() {
    // flat model with the frequency-sampling pulse, where guard zeros leave
    // no first- or second-order interference at the pilots
    let md = fs_modems(128, 8);
    let model = ChannelModel::veh_a(&md.cfg).unwrap();
    for s in 0..5 {
        let h = model.draw(s);
        let a = make_sparse_data(&md, Scenario::Oqam1a, 0, 1.0, s, DataMapping::QpskComponent).unwrap();
        let b = make_sparse_data(&md, Scenario::Oqam1b, 0, 1.0, s, DataMapping::QpskComponent).unwrap();
        let fa = flat_floor(&a, &md, &h, Method::Interpolate, DivisorMode::Plain).unwrap().floor;
        let fb = flat_floor(&b, &md, &h, Method::Interpolate, DivisorMode::Plain).unwrap().floor;
        assert!(fb < 1e-6 * fa, "{fb} vs {fa}");
    }
}

#[test]
fn sd2_training_power_ratio() {
    let md = modems(128, 8, 4);
    let zeta = md.bank.table().zeta();
    assert!(zeta > 0.0);
    let (lg, m) = (md.cfg.lg(), 128);
    let sparse = make_sparse_equal(&md, Scheme::Oqam, 8, 0, 1.0).unwrap();
    for (mapping, rho) in [(DataMapping::PilotAmplitude, 1.0), (DataMapping::QpskComponent, 0.5)] {
        let want = gaps::oqam_sd2_tpr(lg, m, zeta, rho);
        let p = make_sparse_data(&md, Scenario::Oqam2, 0, 1.0, 1, mapping).unwrap();
        let t = tpr(&p, &sparse, &md).unwrap();
        assert!((t.tpr / want - 1.0).abs() < 1e-3, "{mapping:?}: {} vs {want}", t.tpr);
        // measured over data draws
        let n = 4000;
        let mean: f64 = (0..n)
            .map(|s| antenna_energy(&make_sparse_data(&md, Scenario::Oqam2, 0, 1.0, s, mapping).unwrap(), &md).unwrap())
            .sum::<f64>()
            / n as f64;
        let measured = (mean / p.window(&md.cfg) as f64) / (1.0 / lg as f64);
        assert!((measured / want - 1.0).abs() < 0.01, "{mapping:?}: {measured} vs {want}");
    }
}

#[test]
fn afb_noise_covariance_structure() {
    let md = modems(64, 8, 4);
    let sigma2 = 0.3;
    let b = afb_noise_cov(md.bank.prototype(), &md.cfg, sigma2).unwrap();
    let beta = md.beta();
    for i in 0..64 {
        assert!((b[(i, i)].re - sigma2).abs() < 1e-12);
    }
    for i in 1..62 {
        assert!((b[(i, i + 1)] - sigma2 * beta).norm() < 1e-12);
        assert!((b[(i + 1, i)] - sigma2 * beta).norm() < 1e-12);
        for j in i + 2..63 {
            assert!(b[(i, j)].norm() < 0.02 * sigma2);
        }
    }
    let t = md.bank.table();
    assert!((b[(63, 0)].re - sigma2 * t.edge_high).abs() < 1e-12 || (b[(0, 63)].re - sigma2 * t.edge_low).abs() < 1e-12);
    assert!((b[(0, 63)].re.abs() - sigma2 * beta).abs() < 1e-12);
}

#[test]
fn projected_full_oqam_approximation() {
    for (m, lh) in [(128, 8), (1024, 32)] {
        let md = modems(m, lh, 4);
        let p = make_full_equal(&md, Scheme::Oqam, 1.0, EnergyMode::Antenna).unwrap();
        let pred = closed_form_mse(&p, &md, 0.1, Method::Project, DivisorMode::Pseudo).unwrap();
        assert!((pred.exact / pred.mse - 1.0).abs() < 0.05, "M = {m}: {} vs {}", pred.exact, pred.mse);
    }
}

#[test]
fn papr_examples() {
    let flat: Vec<C64> = (0..32).map(|k| C64::from_polar(2.0, k as f64)).collect();
    assert!((papr(&flat).unwrap() - 1.0).abs() < 1e-12);
    assert!(papr(&[]).is_err());
    assert!(papr(&[C64::new(0.0, 0.0); 4]).is_err());

    let md = modems(128, 8, 1);
    let full = make_full_equal(&md, Scheme::Qam, 1.0, EnergyMode::Antenna).unwrap();
    let u = md.ofdm.modulate(full.column(0)).unwrap();
    // the all-equal vector is an impulse in time: PAPR M over the useful part
    assert!((papr(&u.s[md.cfg.nu()..]).unwrap() - 128.0).abs() < 1e-9);
    let two = make_full_equipower_qam(&md, 2, 66, 0.8, 0.1, 1.0, 1.0).unwrap();
    assert!(papr(&md.transmit(&two).unwrap()).unwrap() < papr(&u.s).unwrap());
}

proptest! {
    #[test]
    fn trace_inequality(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let mut r = rng::rng(seed);
        let a = CMatrix::from_fn(rows, cols, |_, _| rng::cn(&mut r, 1.0));
        let b = CMatrix::from_fn(rows, cols, |_, _| rng::cn(&mut r, 1.0));
        let (lhs, rhs) = von_neumann(&a, &b).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }
}

#[test]
fn verification_suite_passes() {
    let cfg = SystemConfig::new(128, 8, 4, 1.0).unwrap();
    let rep = verify_optimality(&cfg, 2000, 3).unwrap();
    let text = rep.to_string();
    assert!(rep.all_passed(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), rep.checks.len());
    assert!(verify_optimality(&cfg, 10, 3).is_err());
}
