use pdaug::eval::{Label, LabeledDataset};
use pdaug::rng::derive_stream;
use pdaug::synth::{gen_dataset, SynthConfig};
use pdaug::Window;

fn channel_variance(w: &Window, c: usize) -> f64 {
    let n = w.len() as f64;
    let mean = (0..w.len()).map(|t| w.get(t, c)).sum::<f64>() / n;
    (0..w.len()).map(|t| (w.get(t, c) - mean).powi(2)).sum::<f64>() / n
}

fn fit_stump(windows: &[(f64, Label)]) -> (f64, bool) {
    let mut vals: Vec<f64> = windows.iter().map(|(v, _)| *v).collect();
    vals.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, 0.0, true);
    let mut candidates = vec![vals[0] - 1.0];
    candidates.extend(vals.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    candidates.push(vals[vals.len() - 1] + 1.0);
    for thr in candidates {
        for dysk_above in [true, false] {
            let correct = windows.iter().filter(|(v, l)| {
                ((*v > thr) == dysk_above) == (*l == Label::Dysk)
            }).count();
            let acc = correct as f64 / windows.len() as f64;
            if acc > best.0 { best = (acc, thr, dysk_above); }
        }
    }
    (best.1, best.2)
}

fn stump_transfer(d: &LabeledDataset, _unused: usize) -> f64 {
    let subjects = d.subjects();
    let mut accs = vec![];
    for ts in &subjects {
        // Pick the best (channel, threshold, polarity) on the train subject.
        let mut best = (f64::NEG_INFINITY, 0usize, 0.0f64, true);
        for ch in 0..3 {
            let train: Vec<(f64, Label)> = d.records().iter().filter(|r| &r.subject_id == ts)
                .map(|r| (channel_variance(&r.window, ch), r.label)).collect();
            let (thr, above) = fit_stump(&train);
            let acc = train.iter().filter(|(v, l)| ((*v > thr) == above) == (*l == Label::Dysk)).count() as f64 / train.len() as f64;
            if acc > best.0 { best = (acc, ch, thr, above); }
        }
        let (_, ch, thr, above) = best;
        let rest: Vec<(f64, Label)> = d.records().iter().filter(|r| &r.subject_id != ts)
            .map(|r| (channel_variance(&r.window, ch), r.label)).collect();
        let c = rest.iter().filter(|(v, l)| ((*v > thr) == above) == (*l == Label::Dysk)).count();
        accs.push(c as f64 / rest.len() as f64);
    }
    accs.iter().sum::<f64>() / accs.len() as f64
}

fn main() {
    for seed in [58u64, 1, 2, 3, 4] {
        let base = SynthConfig {
            n_subjects: 12, windows_per_subject: 20, window_len: 232,
            atypical_fraction: 0.0, ..SynthConfig::default()
        };
        let free = gen_dataset(&derive_stream(seed, 0),
            &SynthConfig { per_subject_rotation: false, ..base.clone() }).unwrap();
        let hard = gen_dataset(&derive_stream(seed, 0),
            &SynthConfig { per_subject_rotation: true, ..base }).unwrap();
        println!("seed {seed}: free {:.3} hard {:.3} drop {:.3}",
            stump_transfer(&free, 0), stump_transfer(&hard, 0),
            stump_transfer(&free, 0) - stump_transfer(&hard, 0));
    }
}
