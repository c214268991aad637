use capweight::scoring::ks_statistic;
use capweight::{score_statistics, ConfidenceSeries, ScoreKind, Series, TruncatedNormal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standard normal density.
fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Composite Simpson rule on [a, b].
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn density(mean: f64, std: f64) -> impl Fn(f64) -> f64 {
    move |x| phi((x - mean) / std) / std
}

fn truncated_mean(mean: f64, std: f64) -> f64 {
    let d = density(mean, std);
    simpson(|x| x * d(x), 0.0, 1.0, 4000) / simpson(&d, 0.0, 1.0, 4000)
}

fn truncated_quantile(mean: f64, std: f64, q: f64) -> f64 {
    let d = density(mean, std);
    let mass = simpson(&d, 0.0, 1.0, 4000);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if simpson(&d, 0.0, mid, 2000) / mass < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn draws(dist: TruncatedNormal, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

#[test]
fn truncated_mean_shift_matches_quadrature() {
    let clean = TruncatedNormal::new(0.4, 0.2).unwrap();
    let noisy = TruncatedNormal::new(0.7, 0.2).unwrap();
    let want = truncated_mean(0.7, 0.2) - truncated_mean(0.4, 0.2);
    let c = draws(clean, 10_000, 1);
    let n = draws(noisy, 10_000, 2);
    let got = n.iter().sum::<f64>() / 1e4 - c.iter().sum::<f64>() / 1e4;
    assert!((got - want).abs() <= 0.03, "shift {got} vs {want}");
    assert!(c.iter().chain(&n).all(|x| (0.0..=1.0).contains(x)));
}

#[test]
fn empirical_quantile_matches_quadrature() {
    let dist = TruncatedNormal::new(0.4, 0.2).unwrap();
    let mut v = draws(dist, 10_000, 3);
    v.sort_by(f64::total_cmp);
    let got = v[(0.3f64 * 1e4).ceil() as usize - 1];
    let want = truncated_quantile(0.4, 0.2, 0.3);
    assert!((got - want).abs() <= 0.02, "quantile {got} vs {want}");
}

/// Direct definition: largest CDF gap over every observed value.
fn ks_oracle(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
        .fold(0.0, f64::max)
}

fn random_corpus(seed: u64, captions: usize, len: usize) -> (Vec<Series>, Vec<Vec<bool>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::new();
    let mut masks = Vec::new();
    for i in 0..captions {
        let mask: Vec<bool> = (0..len).map(|_| rng.random_bool(0.15)).collect();
        // coarse grid forces ties
        let vals = mask
            .iter()
            .map(|&m| {
                Some(
                    (rng.random_range(0..100u32) as f64 / 100.0 + if m { 0.2 } else { 0.0 })
                        .min(1.0),
                )
            })
            .collect();
        series.push(ConfidenceSeries::new(format!("c{i}"), ScoreKind::TextOnly, vals).unwrap());
        masks.push(mask);
    }
    (series, masks)
}

#[test]
fn ks_matches_brute_force_on_10k_tokens() {
    let (series, masks) = random_corpus(4, 1000, 10);
    let report = score_statistics(&series, Some(&masks), 20).unwrap();
    let mut all: Vec<f64> = series.iter().flat_map(|s| s.scored()).collect();
    let mut noisy: Vec<f64> = series
        .iter()
        .zip(&masks)
        .flat_map(|(s, m)| {
            s.values()
                .iter()
                .zip(m)
                .filter(|(_, &m)| m)
                .filter_map(|(v, _)| *v)
        })
        .collect();
    let want = ks_oracle(&noisy, &all);
    let sep = report.separation.unwrap();
    assert!((sep.ks - want).abs() <= 1e-12, "{} vs {want}", sep.ks);
    all.sort_by(f64::total_cmp);
    noisy.sort_by(f64::total_cmp);
    assert!((ks_statistic(&noisy, &all) - want).abs() <= 1e-12);
    assert_eq!(report.counts_all.iter().sum::<u64>(), 10_000);
    assert!(report.mean_noisy.unwrap() > report.mean_all);
}

#[test]
fn histogram_counts_match_recount() {
    let (series, masks) = random_corpus(5, 200, 7);
    let bins = 8;
    let report = score_statistics(&series, Some(&masks), bins).unwrap();
    let mut all = vec![0u64; bins];
    let mut noisy = vec![0u64; bins];
    for (s, m) in series.iter().zip(&masks) {
        for (v, &is_noisy) in s.values().iter().zip(m) {
            let v = v.unwrap();
            let b = ((v * bins as f64) as usize).min(bins - 1);
            all[b] += 1;
            if is_noisy {
                noisy[b] += 1;
            }
        }
    }
    assert_eq!(report.counts_all, all);
    assert_eq!(report.counts_noisy, noisy);
    assert_eq!(report.bin_edges.len(), bins + 1);
}
