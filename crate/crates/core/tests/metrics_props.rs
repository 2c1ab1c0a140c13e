mod common;

use earsep_core::metrics::{evaluate_examples, loss, si_sdr, stoi, MetricReport, SI_SDR_CLIP_DB};
use earsep_core::scene::{HeadShadow, MixtureExample};
use proptest::prelude::*;

fn scored_grid(t60s: &[f64]) -> MetricReport {
    let snrs = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
    let meta = common::random_example(0, 4).metadata;
    let examples: Vec<(String, MixtureExample)> = t60s
        .iter()
        .flat_map(|&t60| snrs.iter().map(move |&snr| (t60, snr)))
        .map(|(t60, snr)| {
            let spec = common::scene_spec(t60, true, HeadShadow::default(), snr, 16000);
            (format!("{t60}_{snr}"), spec.render(meta.clone()).unwrap())
        })
        .collect();
    evaluate_examples(examples.iter().map(|(id, e)| (id.clone(), e)), None).unwrap()
}

#[test]
fn hand_case_and_degenerate_clipping() {
    let s = [1.0, 0.0, 0.0, 0.0];
    assert!(si_sdr(&[1.0, 1.0, 0.0, 0.0], &s).unwrap().db.abs() <= 1e-9);
    let perfect = si_sdr(&s, &s).unwrap();
    assert_eq!((perfect.db, perfect.clipped), (SI_SDR_CLIP_DB, true));
    let orthogonal = si_sdr(&[0.0, 1.0, 0.0, 0.0], &s).unwrap();
    assert_eq!((orthogonal.db, orthogonal.clipped), (-SI_SDR_CLIP_DB, true));
    assert!(si_sdr(&s, &[0.0; 4]).is_err());
    assert!(si_sdr(&s[..3], &s).is_err());
}

#[test]
fn loss_pairs_fixed_outputs_with_fixed_targets() {
    let t = [1.0, 0.0, 0.0, 0.0];
    assert_eq!(loss(&t, &t, &t, &t).unwrap(), -100.0);
    assert!((loss(&t, &[1.0, 1.0, 0.0, 0.0], &t, &t).unwrap() + 50.0).abs() <= 1e-9);

    let ex = common::scene_spec(0.3, true, HeadShadow::default(), 5.0, 16000)
        .render(common::random_example(0, 4).metadata)
        .unwrap();
    let (el, er) = (ex.mixture.channel(0), ex.mixture.channel(4));
    let (tl, tr) = (ex.target_left.channel(0), ex.target_right.channel(0));
    let straight = loss(el, er, tl, tr).unwrap();
    let swapped = loss(er, el, tl, tr).unwrap();
    assert!((straight - swapped).abs() > 0.1, "{straight} vs {swapped}");
}

#[test]
fn stoi_of_identical_signals_is_one() {
    let ex = common::scene_spec(0.0, false, HeadShadow::default(), 0.0, 16000)
        .render(common::random_example(0, 4).metadata)
        .unwrap();
    let x = ex.target_left.channel(0);
    assert!((stoi(x, x, 16000).unwrap() - 1.0).abs() <= 1e-6);
}

#[test]
fn stoi_rises_with_snr_for_white_noise() {
    let ex = common::scene_spec(0.0, false, HeadShadow::default(), 0.0, 24000)
        .render(common::random_example(0, 4).metadata)
        .unwrap();
    let x = ex.target_left.channel(0);
    let px = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let noise = common::uniform(&mut common::rng(2), x.len());
    let pn = noise.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let scores: Vec<f64> = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
        .iter()
        .map(|snr: &f64| {
            let g = (px / pn * 10f64.powf(-snr / 10.0)).sqrt();
            let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + g * b).collect();
            stoi(&y, x, 16000).unwrap()
        })
        .collect();
    assert!(scores.windows(2).all(|w| w[1] > w[0]), "{scores:?}");
}

#[test]
fn unprocessed_baseline_improves_across_the_snr_grid() {
    let report = scored_grid(&[0.0, 0.3]);
    let bins = &report.unprocessed.by_snr;
    assert_eq!(bins.len(), 7);
    assert!(bins.windows(2).all(|w| w[1].mean.si_sdr > w[0].mean.si_sdr), "{bins:?}");
    assert!(bins.windows(2).all(|w| w[1].mean.stoi > w[0].mean.stoi), "{bins:?}");
    assert!(report.model.is_none());
    assert!(report.records.iter().all(|r| r.unprocessed.left.si_sdr.is_finite()));
}

#[test]
fn aggregates_are_recomputable_from_records() {
    let report = scored_grid(&[0.0]);
    let n = report.records.len() as f64;
    let mean = report.records.iter().map(|r| 0.5 * (r.unprocessed.left.si_sdr + r.unprocessed.right.si_sdr)).sum::<f64>() / n;
    assert!((mean - report.unprocessed.overall.si_sdr).abs() <= 1e-12);
    for b in &report.unprocessed.by_snr {
        let sel: Vec<_> = report.records.iter().filter(|r| r.metadata.snr_db == b.value).collect();
        let m = sel.iter().map(|r| r.unprocessed.stoi()).sum::<f64>() / sel.len() as f64;
        assert_eq!(b.mean.count, sel.len());
        assert!((m - b.mean.stoi).abs() <= 1e-12);
    }
    let json = serde_json::to_string(&report).unwrap();
    let back: MetricReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.recomputed().unwrap(), report);
    let table = report.table();
    assert!(table.contains("Anechoic") && table.contains("Unprocessed"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn si_sdr_ignores_estimate_scale(seed in any::<u64>(), k in -3i32..=3, neg in any::<bool>()) {
        let mut r = common::rng(seed);
        let (s, e) = (common::uniform(&mut r, 256), common::uniform(&mut r, 256));
        let a = if neg { -10f64.powi(k) } else { 10f64.powi(k) };
        let scaled: Vec<f64> = e.iter().map(|v| a * v).collect();
        let d = si_sdr(&scaled, &s).unwrap().db - si_sdr(&e, &s).unwrap().db;
        prop_assert!(d.abs() <= 1e-9);
    }

    #[test]
    fn si_sdr_ignores_positive_reference_scale(seed in any::<u64>(), a in 1e-3f64..1e3) {
        let mut r = common::rng(seed);
        let (s, e) = (common::uniform(&mut r, 256), common::uniform(&mut r, 256));
        let scaled: Vec<f64> = s.iter().map(|v| a * v).collect();
        let d = si_sdr(&e, &scaled).unwrap().db - si_sdr(&e, &s).unwrap().db;
        prop_assert!(d.abs() <= 1e-9);
    }

    #[test]
    fn stoi_is_bounded(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (x, y) = (common::uniform(&mut r, 8000), common::uniform(&mut r, 8000));
        let v = stoi(&y, &x, 16000).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
    }
}
