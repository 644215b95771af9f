//! Streaming moments, least-squares expansion fits, and distribution
//! distances (Kolmogorov-Smirnov, two-sample chi-square).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Mergeable accumulator for the first four central moments.
///
/// Pushing values and merging partial accumulators use the pairwise update
/// formulas for central moment sums, so a sum built from chunks agrees with
/// the sequential one to rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        *self = self.merge(&Moments { n: 1, mean: x, m2: 0.0, m3: 0.0, m4: 0.0 });
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let d = other.mean - self.mean;
        let d2 = d * d;
        let mean = self.mean + d * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d2 * d * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * other.m3 - nb * self.m3) / n;
        Moments { n: self.n + other.n, mean, m2, m3, m4 }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the sample variance, from the fourth central moment.
    pub fn variance_std_error(&self) -> f64 {
        if self.n < 4 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let s2 = self.variance();
        let m4 = self.m4 / n;
        ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }

    pub fn summary(&self) -> SummaryStats {
        let variance = self.variance();
        let mut extra = BTreeMap::new();
        extra.insert("variance_std_error".to_string(), self.variance_std_error());
        SummaryStats {
            reps: self.n,
            mean: self.mean,
            variance,
            std_error: (variance / self.n.max(1) as f64).sqrt(),
            extra,
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Monte Carlo aggregate of one scalar across replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub reps: u64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// Named auxiliary statistics (variance standard error, normalized moments, ...).
    pub extra: BTreeMap<String, f64>,
}

impl SummaryStats {
    pub fn variance_std_error(&self) -> f64 {
        self.extra.get("variance_std_error").copied().unwrap_or(f64::NAN)
    }
}

/// Summarizes a non-empty sample.
pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::config("cannot summarize an empty sample"));
    }
    Ok(values.iter().copied().collect::<Moments>().summary())
}

/// Basis functions available to expansion fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Basis {
    /// `z`
    Linear,
    /// `log z`
    Log,
    /// `1`
    Const,
    /// `1/z`
    Inverse,
}

impl Basis {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Basis::Linear => z,
            Basis::Log => z.ln(),
            Basis::Const => 1.0,
            Basis::Inverse => 1.0 / z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitModel {
    pub basis: Vec<Basis>,
    pub coefficients: Vec<f64>,
    pub window: (f64, f64),
    /// Max absolute deviation of the fitted form from the data on the window.
    pub residual_max: f64,
    pub points: usize,
}

impl FitModel {
    pub fn eval(&self, z: f64) -> f64 {
        self.basis.iter().zip(&self.coefficients).map(|(b, c)| c * b.eval(z)).sum()
    }

    pub fn coefficient(&self, basis: Basis) -> Option<f64> {
        self.basis.iter().position(|&b| b == basis).map(|i| self.coefficients[i])
    }
}

/// Ordinary least squares of `data` against `basis` over points with
/// `z` in the closed `window`.
pub fn fit(z_values: &[f64], data: &[f64], basis: &[Basis], window: (f64, f64)) -> Result<FitModel> {
    if basis.is_empty() {
        return Err(Error::Fit("empty basis".into()));
    }
    if z_values.len() != data.len() {
        return Err(Error::Fit(format!(
            "length mismatch: {} abscissae, {} values",
            z_values.len(),
            data.len()
        )));
    }
    let (lo, hi) = window;
    let idx: Vec<usize> = (0..z_values.len())
        .filter(|&i| z_values[i] >= lo && z_values[i] <= hi)
        .collect();
    if idx.len() < 10 {
        return Err(Error::Fit(format!("only {} points in window [{lo}, {hi}]", idx.len())));
    }
    if let Some(&i) = idx.iter().find(|&&i| !data[i].is_finite()) {
        return Err(Error::Fit(format!("non-finite data at z = {}", z_values[i])));
    }
    let rows = idx.len();
    let cols = basis.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    for (r, &i) in idx.iter().enumerate() {
        for (c, b) in basis.iter().enumerate() {
            a[(r, c)] = b.eval(z_values[i]);
        }
    }
    // column equilibration
    let mut scale = vec![1.0; cols];
    for (c, s) in scale.iter_mut().enumerate() {
        let m = a.column(c).amax();
        if m > 0.0 {
            *s = m;
            a.column_mut(c).scale_mut(1.0 / m);
        }
    }
    let b = DVector::from_iterator(rows, idx.iter().map(|&i| data[i]));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= smax * 1e-12 {
        return Err(Error::Fit(format!(
            "rank-deficient design on [{lo}, {hi}] (singular values {smin:e}..{smax:e})"
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let coefficients: Vec<f64> = (0..cols).map(|c| x[c] / scale[c]).collect();
    let mut model = FitModel {
        basis: basis.to_vec(),
        coefficients,
        window,
        residual_max: 0.0,
        points: rows,
    };
    model.residual_max = idx
        .iter()
        .map(|&i| (data[i] - model.eval(z_values[i])).abs())
        .fold(0.0, f64::max);
    Ok(model)
}

/// Standard normal CDF through the Chebyshev-fitted complementary error
/// function (relative error below 1.2e-7 everywhere).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let ans = t * poly.exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Sup-distance between the empirical CDF of `samples` and the standard normal CDF.
pub fn ks_distance(samples: &[f64]) -> f64 {
    ks_distance_to(samples, normal_cdf)
}

/// Sup-distance between the empirical CDF of `samples` and `cdf`.
/// Ties are handled as a single jump of the empirical CDF.
pub fn ks_distance_to<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn two_sample_ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let (na, nb) = (na as f64, nb as f64);
    c * ((na + nb) / (na * nb)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Two-sample chi-square homogeneity test on integer-valued samples.
///
/// Values are binned by integer, then adjacent bins are merged from the
/// left until each merged bin holds at least `min_count` pooled
/// observations (the remainder is folded into the last bin).
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_count: u64) -> Result<ChiSquareTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::config("chi-square needs two non-empty samples"));
    }
    let max = a.iter().chain(b).copied().max().unwrap_or(0) as usize;
    let mut ca = vec![0u64; max + 1];
    let mut cb = vec![0u64; max + 1];
    a.iter().for_each(|&v| ca[v as usize] += 1);
    b.iter().for_each(|&v| cb[v as usize] += 1);
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let (mut acc_a, mut acc_b) = (0u64, 0u64);
    for k in 0..=max {
        acc_a += ca[k];
        acc_b += cb[k];
        if acc_a + acc_b >= min_count {
            bins.push((acc_a, acc_b));
            acc_a = 0;
            acc_b = 0;
        }
    }
    if acc_a + acc_b > 0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc_a;
                last.1 += acc_b;
            }
            None => bins.push((acc_a, acc_b)),
        }
    }
    if bins.len() < 2 {
        return Ok(ChiSquareTest { statistic: 0.0, dof: 0, p_value: 1.0 });
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let ka = (nb / na).sqrt();
    let kb = (na / nb).sqrt();
    let statistic: f64 = bins
        .iter()
        .map(|&(x, y)| {
            let (x, y) = (x as f64, y as f64);
            (ka * x - kb * y).powi(2) / (x + y)
        })
        .sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Fit(e.to_string()))?;
    Ok(ChiSquareTest { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn constant_sample_has_zero_variance() {
        let s = summarize(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn empty_summary_is_refused() {
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn merge_of_halves_equals_whole() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 10.0 - 3.0).collect();
        let whole: Moments = xs.iter().copied().collect();
        let left: Moments = xs[..400].iter().copied().collect();
        let right: Moments = xs[400..].iter().copied().collect();
        let merged = left.merge(&right);
        assert!((merged.mean() - whole.mean()).abs() < 1e-12);
        assert!((merged.variance() - whole.variance()).abs() < 1e-12 * whole.variance());
        assert!((merged.variance_std_error() - whole.variance_std_error()).abs() < 1e-10);
    }

    #[test]
    fn uniform_moments_within_three_standard_errors() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m: Moments = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let s = m.summary();
        assert!((s.mean - 0.5).abs() < 3.0 * s.std_error);
        assert!((s.variance - 1.0 / 12.0).abs() < 3.0 * s.variance_std_error());
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(
            xs in proptest::collection::vec(-1e3f64..1e3, 3..60),
            cut1 in 0usize..60,
            cut2 in 0usize..60,
        ) {
            let n = xs.len();
            let (c1, c2) = (cut1.min(n), cut2.min(n));
            let (c1, c2) = (c1.min(c2), c1.max(c2));
            let a: Moments = xs[..c1].iter().copied().collect();
            let b: Moments = xs[c1..c2].iter().copied().collect();
            let c: Moments = xs[c2..].iter().copied().collect();
            let left = a.merge(&b).merge(&c);
            let right = c.merge(&a.merge(&b));
            let scale = 1.0 + left.variance().abs();
            prop_assert!((left.mean() - right.mean()).abs() <= 1e-12 * (1.0 + left.mean().abs()) * 1e3);
            prop_assert!((left.variance() - right.variance()).abs() <= 1e-12 * scale * 1e3);
        }
    }

    #[test]
    fn linear_fit_is_exact() {
        let z: Vec<f64> = (1..=100).map(f64::from).collect();
        let d: Vec<f64> = z.iter().map(|z| 2.0 * z + 3.0).collect();
        let m = fit(&z, &d, &[Basis::Linear, Basis::Const], (1.0, 100.0)).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((m.coefficients[1] - 3.0).abs() < 1e-10);
        assert!(m.residual_max < 1e-10);
    }

    #[test]
    fn full_expansion_basis_recovers_coefficients() {
        let z: Vec<f64> = (0..=2000).map(|i| 100.0 + 0.1 * i as f64).collect();
        let f = |z: f64| 2f64.sqrt() * z - z.ln() / 6.0 + 1.0 + 2f64.sqrt() / (144.0 * z);
        let d: Vec<f64> = z.iter().map(|&z| f(z)).collect();
        let basis = [Basis::Linear, Basis::Log, Basis::Const, Basis::Inverse];
        let m = fit(&z, &d, &basis, (100.0, 300.0)).unwrap();
        let expect = [2f64.sqrt(), -1.0 / 6.0, 1.0, 2f64.sqrt() / 144.0];
        for (c, e) in m.coefficients.iter().zip(expect) {
            assert!((c - e).abs() < 1e-8, "{c} vs {e}");
        }
    }

    #[test]
    fn rank_deficient_fit_is_refused() {
        let z: Vec<f64> = (1..=50).map(f64::from).collect();
        let d = z.clone();
        // only one distinct abscissa in window → z and 1 are collinear
        let zz = vec![5.0; 50];
        assert!(matches!(
            fit(&zz, &d, &[Basis::Linear, Basis::Const], (0.0, 10.0)),
            Err(Error::Fit(_))
        ));
        assert!(fit(&z, &d, &[Basis::Linear], (1.0, 5.0)).is_err());
    }

    #[test]
    fn normal_cdf_matches_reference() {
        let reference = statrs::distribution::Normal::standard();
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            assert!((normal_cdf(x) - reference.cdf(x)).abs() < 1.5e-7, "x = {x}");
        }
    }

    #[test]
    fn ks_of_normal_draws_is_small() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        // 99% quantile of the Kolmogorov distribution is 1.628/sqrt(n) ≈ 0.00515
        assert!(ks_distance(&xs) < 0.006);
    }

    #[test]
    fn ks_of_constant_sample_is_at_least_half() {
        assert!(ks_distance(&vec![0.3; 200]) >= 0.5);
        assert!(ks_distance(&vec![0.0; 200]) >= 0.5);
    }

    #[test]
    fn ks_of_shifted_normal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..100_000).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect();
        // sup |Φ(x-1) - Φ(x)| = Φ(1/2) - Φ(-1/2)
        let oracle = normal_cdf(0.5) - normal_cdf(-0.5);
        assert!((oracle - 0.3829).abs() < 1e-4);
        assert!((ks_distance(&xs) - oracle).abs() < 0.01);
    }

    #[test]
    fn two_sample_ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(two_sample_ks(&a, &a), 0.0);
        let b: Vec<f64> = (200..300).map(f64::from).collect();
        assert_eq!(two_sample_ks(&a, &b), 1.0);
    }

    #[test]
    fn chi_square_accepts_same_law_and_rejects_shift() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pois = rand_distr::Poisson::new(20.0).unwrap();
        let a: Vec<u64> = (0..20_000).map(|_| rng.sample::<f64, _>(pois) as u64).collect();
        let b: Vec<u64> = (0..20_000).map(|_| rng.sample::<f64, _>(pois) as u64).collect();
        let c: Vec<u64> = (0..20_000).map(|_| rng.sample::<f64, _>(pois) as u64 + 1).collect();
        assert!(chi_square_two_sample(&a, &b, 20).unwrap().p_value > 0.01);
        assert!(chi_square_two_sample(&a, &c, 20).unwrap().p_value < 1e-6);
    }
}
