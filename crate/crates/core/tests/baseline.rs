use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soundlm::baseline::{kmeans_fit, BaselineTokenizer, FeatureConfig, KMeansModel};
use soundlm::dsp::synth::{synth_waveforms, SynthConfig};
use soundlm::dsp::Waveform;
use soundlm::Digest;

fn brute_nearest(x: &[f64], c: &[f64], d: usize) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for k in 0..c.len() / d {
        let mut s = 0.0;
        for j in 0..d {
            s += (x[j] - c[k * d + j]).powi(2);
        }
        if s < best_d {
            best_d = s;
            best = k;
        }
    }
    best
}

#[test]
fn assignment_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let d = rng.random_range(1..6);
        let k = rng.random_range(1..12);
        // A coarse grid makes exact ties common.
        let c: Vec<f64> = (0..k * d).map(|_| rng.random_range(-3..=3) as f64).collect();
        let m = KMeansModel::from_centroids(c.clone(), d, vec![]).unwrap();
        let x: Vec<f64> = (0..40 * d).map(|_| rng.random_range(-6..=6) as f64 * 0.5).collect();
        let want: Vec<u32> = x.chunks(d).map(|r| brute_nearest(r, &c, d) as u32).collect();
        assert_eq!(m.assign(&x).unwrap(), want, "case {case}");
    }
}

#[test]
fn inertia_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let d = rng.random_range(1..4);
        let n = rng.random_range(5..80);
        let k = rng.random_range(1..=n.min(9));
        let x: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() * 10.0).collect();
        let m = kmeans_fit(&x, d, k, 50, case).unwrap();
        assert!(!m.inertia_history.is_empty());
        for w in m.inertia_history.windows(2) {
            assert!(w[1] <= w[0], "case {case}: {:?}", m.inertia_history);
        }
        assert_eq!(*m.inertia_history.last().unwrap(), m.inertia(&x), "case {case}");
    }
}

/// Lowest inertia over every labelling of the points into at most `k` groups.
fn optimal_inertia(x: &[f64], d: usize, k: usize) -> f64 {
    let n = x.len() / d;
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut total = 0.0;
        for g in 0..k {
            let members: Vec<&[f64]> = (0..n).filter(|&i| labels[i] == g).map(|i| &x[i * d..(i + 1) * d]).collect();
            if members.is_empty() {
                continue;
            }
            for j in 0..d {
                let mean = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
                total += members.iter().map(|m| (m[j] - mean).powi(2)).sum::<f64>();
            }
        }
        best = best.min(total);
        let mut i = 0;
        while i < n && labels[i] == k - 1 {
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
        labels[i] += 1;
    }
}

fn is_lloyd_fixed_point(m: &KMeansModel, x: &[f64]) -> bool {
    let d = m.dim;
    let a = m.assign(x).unwrap();
    (0..m.k).all(|g| {
        let rows: Vec<&[f64]> = x.chunks(d).zip(&a).filter(|(_, &l)| l as usize == g).map(|(r, _)| r).collect();
        rows.is_empty()
            || (0..d).all(|j| {
                let mean = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
                (mean - m.centroid(g)[j]).abs() < 1e-9
            })
    })
}

#[test]
fn small_fits_reach_the_optimum_or_a_lloyd_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut optimal = 0;
    for case in 0..40 {
        let d = rng.random_range(1..=2);
        let n = rng.random_range(3..=9);
        let k = rng.random_range(1..=3.min(n));
        let x: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() * 4.0).collect();
        let m = kmeans_fit(&x, d, k, 100, case).unwrap();
        let got = m.inertia(&x);
        let best = optimal_inertia(&x, d, k);
        assert!(got >= best - 1e-9);
        if got - best < 1e-9 {
            optimal += 1;
        } else {
            assert!(is_lloyd_fixed_point(&m, &x), "case {case}: {got} vs optimum {best}");
        }
    }
    assert!(optimal >= 30, "only {optimal}/40 fits were globally optimal");
}

fn clip(seconds: f64) -> Waveform {
    let n = (seconds * 16000.0) as usize;
    Waveform::new((0..n).map(|i| (i as f32 * 0.05).sin() * 0.4).collect(), 16000).unwrap()
}

fn tokenizer(features: FeatureConfig, k: usize) -> BaselineTokenizer {
    let clips: Vec<Waveform> = synth_waveforms(&SynthConfig {
        n: 8,
        duration_s: 0.5,
        ..SynthConfig::default()
    })
    .unwrap()
    .into_iter()
    .map(|c| c.waveform)
    .collect();
    BaselineTokenizer::fit(&clips, features, k, 20, 5).unwrap()
}

#[test]
fn token_counts_follow_the_hop() {
    let long = clip(10.0);
    for (features, want) in [(FeatureConfig::ten_ms(), 1000), (FeatureConfig::two_ms(), 5000)] {
        let t = tokenizer(features, 16);
        let seq = t.tokenize(&long, t.identity()).unwrap();
        assert_eq!(seq.len(), want);
        assert_eq!(seq.hop() * want, long.len());
    }
    let t = tokenizer(FeatureConfig::ten_ms(), 16);
    assert_eq!(t.tokenize(&clip(0.0101), Digest::default()).unwrap().len(), 2);
}

#[test]
fn silence_is_one_repeated_token() {
    let t = tokenizer(FeatureConfig::ten_ms(), 16);
    let zero = Waveform::new(vec![0.0; 16000], 16000).unwrap();
    let seq = t.tokenize(&zero, Digest::default()).unwrap();
    assert!(seq.tokens().iter().all(|&x| x == seq.tokens()[0]));
}

#[test]
fn centroid_maps_to_itself_and_roundtrips() {
    let t = tokenizer(FeatureConfig::ten_ms(), 16);
    assert_eq!(t.kmeans.assign(t.kmeans.centroid(7)).unwrap(), vec![7]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("km.bin");
    let digest = t.save(&path).unwrap();
    let (back, d2) = BaselineTokenizer::load(&path).unwrap();
    assert_eq!(digest, d2);
    assert_eq!(back, t);
    let w = clip(1.3);
    assert_eq!(back.tokenize(&w, digest).unwrap(), t.tokenize(&w, digest).unwrap());
}

#[test]
fn too_few_frames_is_an_error() {
    let few = vec![clip(0.05)];
    assert!(BaselineTokenizer::fit(&few, FeatureConfig::ten_ms(), 64, 5, 0).is_err());
}
