//! Gaussian measures on `H` with covariance diagonal in the sine basis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::residual::NoiseModel;
use crate::rng::{NormalStream, TAG_PATH, TAG_SAMPLE};
use crate::spectral::{burgers_b, eigenvalue, HVec};

/// `N(mean, diag(variances))`; coefficient `n` of a draw has variance `variances[n-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMeasure {
    mean: HVec,
    variances: Vec<f64>,
}

/// Named reference measures accepted in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureId {
    /// Stationary law of the heat equation under `Q = diag(1/n²)`: `v_n = 2/n⁴`.
    Tcc,
    /// Stationary law under white noise: `v_n = 2/n²`.
    Wn,
    /// `v_n = 1/n⁴`.
    Burgers4,
    /// Explicit variance table.
    Custom,
}

impl GaussianMeasure {
    pub fn new(mean: HVec, variances: Vec<f64>) -> Result<Self> {
        if mean.len() != variances.len() {
            return Err(Error::Shape(format!(
                "mean has {} modes, variances {}",
                mean.len(),
                variances.len()
            )));
        }
        if let Some((i, v)) = variances
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Domain(format!("variance of mode {} is {v}", i + 1)));
        }
        Ok(Self { mean, variances })
    }

    pub fn centered(variances: Vec<f64>) -> Result<Self> {
        Self::new(HVec::zeros(variances.len()), variances)
    }

    pub fn point_mass(mean: HVec) -> Self {
        let variances = vec![0.0; mean.len()];
        Self { mean, variances }
    }

    pub fn from_id(id: MeasureId, len: usize) -> Result<Self> {
        match id {
            MeasureId::Tcc => Ok(stationary_tcc(len)),
            MeasureId::Wn => Ok(stationary_wn(len)),
            MeasureId::Burgers4 => Ok(burgers_training_measure(len)),
            MeasureId::Custom => Err(Error::config(
                "measure",
                "`custom` needs an explicit variance table",
            )),
        }
    }

    /// Reads a `n,variance` CSV table (one row per mode, `#` comments allowed)
    /// into a centered measure with `len` modes; unlisted modes get variance 0.
    pub fn from_variance_csv(table: &str, len: usize) -> Result<Self> {
        let mut variances = vec![0.0; len];
        for line in table
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (n, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("variance row `{line}` is not `n,v`")))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad mode `{n}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad variance `{v}`")))?;
            if n == 0 || n > len {
                return Err(Error::Format(format!("mode {n} outside 1..={len}")));
            }
            variances[n - 1] = v;
        }
        Self::centered(variances)
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    pub fn mean(&self) -> &HVec {
        &self.mean
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// One draw `mean + Σ ζ_n √v_n e_n` from the given stream.
    pub fn draw(&self, stream: &mut NormalStream) -> HVec {
        let coeffs = self
            .mean
            .coeffs()
            .iter()
            .zip(&self.variances)
            .map(|(m, v)| m + v.sqrt() * stream.normal())
            .collect();
        HVec::from_coeffs(coeffs)
    }

    /// Draw number `index` of block `block` under `(seed, tag)`.
    pub fn draw_at(&self, seed: u64, tag: u64, block: u64, index: u64) -> HVec {
        self.draw(&mut NormalStream::new(seed, tag, block, index))
    }

    /// `count` independent draws; draw `i` depends only on `(seed, i)`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<HVec> {
        par::map_indexed(count, |i| self.draw_at(seed, TAG_SAMPLE, 0, i as u64))
    }

    /// Monte Carlo estimate of `(∫ |x|^q μ(dx))^{1/q}`.
    pub fn moment_norm(&self, q: f64, count: usize, seed: u64) -> Result<f64> {
        if q < 1.0 || !q.is_finite() {
            return Err(Error::Domain(format!("moment order {q} < 1")));
        }
        if count == 0 {
            return Err(Error::config("count", "must be positive"));
        }
        Ok(moment_norm_of(&self.sample(count, seed), q))
    }

    /// Sum of the per-mode variances, `E|X - m|²`.
    pub fn trace(&self) -> f64 {
        self.variances.iter().sum()
    }
}

/// `(mean |x|^q)^{1/q}` over an explicit sample set.
pub fn moment_norm_of(samples: &[HVec], q: f64) -> f64 {
    let mean = samples.iter().map(|x| x.norm().powf(q)).sum::<f64>() / samples.len() as f64;
    mean.powf(1.0 / q)
}

/// `N(0, diag(1/(2n²λ_n))) = N(0, diag(2/n⁴))`.
pub fn stationary_tcc(len: usize) -> GaussianMeasure {
    let v = (1..=len)
        .map(|n| 1.0 / (2.0 * (n * n) as f64 * eigenvalue(n)))
        .collect();
    GaussianMeasure::centered(v).expect("finite positive variances")
}

/// `N(0, diag(1/(2λ_n))) = N(0, diag(2/n²))`.
pub fn stationary_wn(len: usize) -> GaussianMeasure {
    let v = (1..=len).map(|n| 1.0 / (2.0 * eigenvalue(n))).collect();
    GaussianMeasure::centered(v).expect("finite positive variances")
}

/// `N(0, diag(1/n⁴))`.
pub fn burgers_training_measure(len: usize) -> GaussianMeasure {
    let v = (1..=len).map(|n| (n as f64).powi(-4)).collect();
    GaussianMeasure::centered(v).expect("finite positive variances")
}

/// Spectral dynamics `dX = (AX + B(X) + u) dt + dW^Q` truncated at `N = noise.len()`.
#[derive(Debug, Clone)]
pub struct SpectralDynamics {
    pub noise: NoiseModel,
    pub control: HVec,
    pub nonlinear: bool,
}

impl SpectralDynamics {
    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.len() == 0
    }
}

/// End states of `count` independent trajectories started from 0 after
/// `steps` exponential-Euler steps of size `dt`:
/// `x ← e^{-ΛΔt}(x + Δt (B(x) + u) + ΔW)`.
pub fn empirical_stationary(
    dynamics: &SpectralDynamics,
    dt: f64,
    steps: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<HVec>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step {dt} must be positive")));
    }
    let len = dynamics.len();
    if dynamics.control.len() > len {
        return Err(Error::Shape("control longer than the state truncation".into()));
    }
    let control = dynamics.control.resized(len);
    let decay: Vec<f64> = (1..=len).map(|n| (-eigenvalue(n) * dt).exp()).collect();
    let sqrt_dt = dt.sqrt();
    let results = par::map_indexed(count, |path| {
        let mut stream = NormalStream::new(seed, TAG_PATH, 0, path as u64);
        let mut x = HVec::zeros(len);
        let mut increment = vec![0.0; len];
        for step in 0..steps {
            dynamics.noise.increment(&mut stream, sqrt_dt, &mut increment);
            let b = if dynamics.nonlinear {
                Some(burgers_b(&x))
            } else {
                None
            };
            let c = x.coeffs_mut();
            for i in 0..len {
                let drift = control.coeffs()[i] + b.as_ref().map_or(0.0, |b| b.coeffs()[i]);
                c[i] = decay[i] * (c[i] + dt * drift + increment[i]);
            }
            let norm = x.norm();
            if !(norm <= 1e6) {
                return Err(Error::SimulationDiverged {
                    step,
                    dt,
                    detail: format!("trajectory {path} reached |X| = {norm:e}"),
                });
            }
        }
        Ok(x)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn empirical_variances(samples: &[HVec]) -> Vec<f64> {
        let len = samples[0].len();
        let k = samples.len() as f64;
        (0..len)
            .map(|i| {
                let mean = samples.iter().map(|x| x.coeffs()[i]).sum::<f64>() / k;
                samples
                    .iter()
                    .map(|x| (x.coeffs()[i] - mean).powi(2))
                    .sum::<f64>()
                    / k
            })
            .collect()
    }

    #[test]
    fn zero_variance_gives_mean() {
        let m = HVec::from_coeffs(vec![1.0, -2.0, 0.5]);
        let mu = GaussianMeasure::point_mass(m.clone());
        assert!(mu.sample(10, 3).iter().all(|x| *x == m));
        assert_abs_diff_eq!(mu.moment_norm(3.0, 5, 1).unwrap(), m.norm(), epsilon = 1e-12);
    }

    #[test]
    fn single_mode_variance() {
        let mu = GaussianMeasure::centered(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let xs = mu.sample(100_000, 11);
        let v = empirical_variances(&xs);
        assert!((v[0] - 1.0).abs() < 0.03);
        assert!(xs.iter().all(|x| x.coeffs()[1..].iter().all(|c| *c == 0.0)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let mu = stationary_tcc(16);
        assert_eq!(mu.sample(50, 99), mu.sample(50, 99));
        assert_ne!(mu.sample(50, 99), mu.sample(50, 100));
        // draw i does not depend on the batch size
        assert_eq!(mu.sample(10, 99)[..], mu.sample(50, 99)[..10]);
    }

    #[test]
    fn moment_norms() {
        let mu = GaussianMeasure::centered(vec![0.5, 0.25, 0.125]).unwrap();
        let est = mu.moment_norm(2.0, 200_000, 5).unwrap();
        assert!((est - mu.trace().sqrt()).abs() / mu.trace().sqrt() < 0.01);

        let mu = GaussianMeasure::centered((1..=400).map(|n| 2.0 / (n as f64).powi(4)).collect())
            .unwrap();
        let expected = (2.0 * std::f64::consts::PI.powi(4) / 90.0).sqrt();
        assert_abs_diff_eq!(expected, 1.471_27, epsilon = 1e-5);
        let est = mu.moment_norm(2.0, 100_000, 6).unwrap();
        assert!((est - expected).abs() / expected < 0.02);

        assert!(mu.moment_norm(0.5, 10, 1).is_err());
    }

    #[test]
    fn moment_norm_monotone_in_q() {
        let xs = stationary_wn(32).sample(5_000, 2);
        let qs = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0];
        let norms: Vec<f64> = qs.iter().map(|q| moment_norm_of(&xs, *q)).collect();
        assert!(norms.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn named_measures() {
        let tcc = stationary_tcc(10);
        assert_eq!(tcc.variances()[0], 2.0);
        assert_eq!(tcc.variances()[1], 1.0 / 8.0);
        assert_abs_diff_eq!(tcc.variances()[9], 2e-4, epsilon = 1e-18);
        let wn = stationary_wn(4);
        assert_eq!(wn.variances(), &[2.0, 0.5, 2.0 / 9.0, 0.125]);
        let b = burgers_training_measure(3);
        assert_eq!(b.variances(), &[1.0, 1.0 / 16.0, 1.0 / 81.0]);
        assert!(GaussianMeasure::from_id(MeasureId::Custom, 3).is_err());
        let custom = GaussianMeasure::from_variance_csv("# n,v\n1,0.5\n3,2\n", 4).unwrap();
        assert_eq!(custom.variances(), &[0.5, 0.0, 2.0, 0.0]);
        assert!(GaussianMeasure::centered(vec![-1.0]).is_err());
    }

    #[test]
    fn covariance_is_diagonal_and_draws_independent() {
        let count = 20_000;
        let mu = GaussianMeasure::centered(vec![1.0, 0.5, 2.0]).unwrap();
        let xs = mu.sample(count, 8);
        let tol = 5.0 / (count as f64).sqrt();
        for a in 0..3 {
            for b in (a + 1)..3 {
                let c = xs.iter().map(|x| x.coeffs()[a] * x.coeffs()[b]).sum::<f64>()
                    / count as f64;
                let scale = (mu.variances()[a] * mu.variances()[b]).sqrt();
                assert!((c / scale).abs() < tol, "cov({a},{b}) = {c}");
            }
        }
        for i in 0..3 {
            let lag = xs
                .windows(2)
                .map(|w| w[0].coeffs()[i] * w[1].coeffs()[i])
                .sum::<f64>()
                / (count - 1) as f64
                / mu.variances()[i];
            assert!(lag.abs() < 3.0 / (count as f64).sqrt(), "lag-1 corr {lag}");
        }
    }

    #[test]
    fn empirical_stationary_zero_fixed_point() {
        let dyn0 = SpectralDynamics {
            noise: NoiseModel::none(8),
            control: HVec::zeros(8),
            nonlinear: false,
        };
        let xs = empirical_stationary(&dyn0, 1e-3, 100, 4, 1).unwrap();
        assert!(xs.iter().all(|x| *x == HVec::zeros(8)));
    }

    #[test]
    fn empirical_stationary_heat_variance() {
        let dynamics = SpectralDynamics {
            noise: NoiseModel::trace_class(16),
            control: HVec::zeros(16),
            nonlinear: false,
        };
        let xs = empirical_stationary(&dynamics, 2e-3, 10_000, 2000, 4).unwrap();
        let v = empirical_variances(&xs);
        for n in 1..=5 {
            let expected = 2.0 / (n as f64).powi(4);
            assert!(
                (v[n - 1] - expected).abs() / expected < 0.10,
                "mode {n}: {} vs {expected}",
                v[n - 1]
            );
        }
        let again = empirical_stationary(&dynamics, 2e-3, 50, 3, 4).unwrap();
        assert_eq!(again, empirical_stationary(&dynamics, 2e-3, 50, 3, 4).unwrap());
    }

    #[test]
    fn empirical_stationary_reports_blow_up() {
        let dynamics = SpectralDynamics {
            noise: NoiseModel::none(4),
            control: HVec::from_coeffs(vec![1e12, 0.0, 0.0, 0.0]),
            nonlinear: false,
        };
        let err = empirical_stationary(&dynamics, 1e-3, 10, 1, 0).unwrap_err();
        assert!(matches!(err, Error::SimulationDiverged { step: 0, .. }));
    }
}
