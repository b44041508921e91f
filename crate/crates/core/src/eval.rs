//! Accuracy metrics, residual norms, derivative errors against a quadratic
//! reference, and the bounded-inverse certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgno::{ActorNet, Critic};
use crate::measures::GaussianMeasure;
use crate::oracle::{LqSolution, QuadraticCritic};
use crate::par;
use crate::residual::{residual, residual_batch, ControlInput, ProblemKind, ProblemSpec};
use crate::rng::TAG_EVAL;
use crate::spectral::{eigenvalue, HVec};

// blocks of the TAG_EVAL stream family
const BLOCK_METRICS: u64 = 1;
const BLOCK_DERIV_X: u64 = 2;
const BLOCK_DERIV_H: u64 = 3;
const BLOCK_RESIDUAL: u64 = 4;

/// Values compared by [`metrics`]: scalars by absolute value, controls by the `H`-norm.
pub trait MetricValue {
    fn distance(&self, other: &Self) -> f64;
    fn magnitude(&self) -> f64;
}

impl MetricValue for f64 {
    fn distance(&self, other: &Self) -> f64 {
        (self - other).abs()
    }

    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl MetricValue for HVec {
    fn distance(&self, other: &Self) -> f64 {
        let len = self.len().max(other.len());
        self.resized(len).sub(&other.resized(len)).norm()
    }

    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub me: f64,
    pub rmse: f64,
    /// `None` when the reference vanishes at some sample.
    pub re1: Option<f64>,
    /// `None` when the reference vanishes on the whole sample.
    pub re2: Option<f64>,
    pub k: usize,
    pub seed: u64,
    pub description: String,
}

impl MetricReport {
    /// Names of the metrics that could not be formed.
    pub fn undefined(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.re1.is_none() {
            out.push("re1");
        }
        if self.re2.is_none() {
            out.push("re2");
        }
        out
    }
}

/// ME, RMSE, RE1, RE2 over precomputed `(|Q − V|, |V|)` pairs.
fn report_from_pairs(pairs: &[(f64, f64)], seed: u64, description: &str) -> MetricReport {
    let k = pairs.len() as f64;
    let me = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let sq: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let ref_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
    let re1 = if pairs.iter().all(|p| p.1 > 0.0) {
        Some(pairs.iter().map(|p| p.0 / p.1).sum::<f64>() / k)
    } else {
        None
    };
    MetricReport {
        me,
        rmse: (sq / k).sqrt(),
        re1,
        re2: (ref_sq > 0.0).then(|| (sq / ref_sq).sqrt()),
        k: pairs.len(),
        seed,
        description: description.to_string(),
    }
}

/// The four accuracy metrics over `k` draws from `mu`.
pub fn metrics<T, P, R>(predict: P, reference: R, mu: &GaussianMeasure, k: usize, seed: u64, description: &str) -> Result<MetricReport>
where
    T: MetricValue,
    P: Fn(&HVec) -> Result<T> + Sync + Send,
    R: Fn(&HVec) -> Result<T> + Sync + Send,
{
    if k == 0 {
        return Err(Error::config("k", "need at least one sample"));
    }
    let pairs = par::map_indexed(k, |i| {
        let x = mu.draw_at(seed, TAG_EVAL, BLOCK_METRICS, i as u64);
        let q = predict(&x)?;
        let v = reference(&x)?;
        Ok((q.distance(&v), v.magnitude()))
    });
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(report_from_pairs(&pairs, seed, description))
}

/// [`metrics`] on a given sample set.
pub fn metrics_on<T, P, R>(predict: P, reference: R, samples: &[HVec], description: &str) -> Result<MetricReport>
where
    T: MetricValue,
    P: Fn(&HVec) -> Result<T> + Sync + Send,
    R: Fn(&HVec) -> Result<T> + Sync + Send,
{
    if samples.is_empty() {
        return Err(Error::config("k", "need at least one sample"));
    }
    let pairs = par::map_slice(samples, |x| {
        let q = predict(x)?;
        let v = reference(x)?;
        Ok((q.distance(&v), v.magnitude()))
    });
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(report_from_pairs(&pairs, 0, description))
}

/// Critic values against a reference critic.
pub fn critic_metrics<C: Critic, O: Critic>(critic: &C, oracle: &O, mu: &GaussianMeasure, k: usize, seed: u64) -> Result<MetricReport> {
    metrics(|x| critic.value(x), |x| oracle.value(x), mu, k, seed, "critic")
}

/// Actor output against the closed-form feedback, compared in `H`.
pub fn actor_metrics(actor: &ActorNet, sol: &LqSolution, mu: &GaussianMeasure, k: usize, seed: u64) -> Result<MetricReport> {
    metrics(|x| actor.eval(x), |x| Ok(sol.control(x)), mu, k, seed, "actor")
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// `√E[s]` for nonnegative draws `s` with a delta-method standard error.
fn sqrt_mean_estimate(squares: &[f64]) -> Estimate {
    let k = squares.len() as f64;
    let mean = squares.iter().sum::<f64>() / k;
    let var = if squares.len() > 1 {
        squares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let value = mean.sqrt();
    let se_mean = (var / k).sqrt();
    Estimate {
        value,
        std_error: if value > 0.0 { se_mean / (2.0 * value) } else { se_mean.sqrt() },
    }
}

/// `‖F v‖_{L²(μ)}` with its standard error.
pub fn residual_l2_estimate<C: Critic>(
    critic: &C,
    actor: Option<&ActorNet>,
    spec: &ProblemSpec,
    mu: &GaussianMeasure,
    k: usize,
    seed: u64,
) -> Result<Estimate> {
    if k == 0 {
        return Err(Error::config("k", "need at least one sample"));
    }
    let squares = par::map_indexed(k, |i| -> Result<f64> {
        let x = mu.draw_at(seed, TAG_EVAL, BLOCK_RESIDUAL, i as u64);
        let r = residual_batch(critic, actor, spec, std::slice::from_ref(&x))?[0];
        Ok(r * r)
    });
    let squares = squares.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(sqrt_mean_estimate(&squares))
}

/// `√((1/K) Σ F v(x_k)²)`.
pub fn residual_l2_norm<C: Critic>(
    critic: &C,
    actor: Option<&ActorNet>,
    spec: &ProblemSpec,
    mu: &GaussianMeasure,
    k: usize,
    seed: u64,
) -> Result<f64> {
    Ok(residual_l2_estimate(critic, actor, spec, mu, k, seed)?.value)
}

/// The reference `J(·; u)` for a heat Kolmogorov spec.
pub fn kolmogorov_reference(spec: &ProblemSpec) -> Result<QuadraticCritic> {
    if spec.kind() != ProblemKind::HeatKolmogorov {
        return Err(Error::config("problem", "the Kolmogorov reference needs the heat Kolmogorov problem"));
    }
    QuadraticCritic::kolmogorov(
        spec.fixed_control(),
        spec.gamma(),
        spec.lambda(),
        spec.target(),
        &spec.noise().mode_variances(),
        spec.len(),
    )
}

/// The closed-form solution for a heat HJB spec.
pub fn hjb_reference(spec: &ProblemSpec) -> Result<LqSolution> {
    if spec.kind() != ProblemKind::HeatHjb {
        return Err(Error::config("problem", "the HJB reference needs the heat HJB problem"));
    }
    crate::oracle::lq_solve(
        spec.gamma(),
        spec.lambda(),
        spec.target(),
        &spec.noise().mode_variances(),
        spec.len(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedInverseReport {
    pub rmse_vs_oracle: f64,
    pub rmse_std_error: f64,
    pub residual_norm: f64,
    pub residual_std_error: f64,
    pub omega: f64,
    pub certified_bound: f64,
    pub mc_slack: f64,
    pub pass: bool,
    /// Whether `mu` is the stationary law of the fixed-control dynamics.
    pub applicable: bool,
    pub warning: Option<String>,
}

/// `‖v − w‖ ≤ ‖F w‖ / ω` for published or computed pairs, without sampling slack.
pub fn certificate_holds(rmse: f64, residual_norm: f64, omega: f64) -> bool {
    rmse <= residual_norm / omega
}

/// Stationary law of `dX = (AX + u) dt + √Q dW`: mean `u_n/λ_n`, variance `σ_n²/(2λ_n)`,
/// when `Q` is diagonal.
fn is_stationary(spec: &ProblemSpec, mu: &GaussianMeasure) -> bool {
    let noise = spec.noise();
    let n = spec.len();
    let diagonal = (1..=n).all(|i| (1..=n).all(|j| i == j || noise.covariance(i, j) == 0.0));
    if !diagonal || mu.len() > n {
        return false;
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (a.abs() + b.abs()) + 1e-300;
    (1..=mu.len()).all(|i| {
        let mean = spec.fixed_control().coeff(i) / eigenvalue(i);
        let var = noise.covariance(i, i) / (2.0 * eigenvalue(i));
        close(mu.mean().coeff(i), mean) && close(mu.variances()[i - 1], var)
    })
}

/// Compares the critic's distance to the exact `J(·; u)` with the residual-based bound.
pub fn bounded_inverse_report<C: Critic>(
    critic: &C,
    spec: &ProblemSpec,
    mu: &GaussianMeasure,
    k: usize,
    seed: u64,
) -> Result<BoundedInverseReport> {
    let oracle = kolmogorov_reference(spec)?;
    if k < 2 {
        return Err(Error::config("k", "need at least two samples"));
    }
    let rows = par::map_indexed(k, |i| -> Result<(f64, f64)> {
        let x = mu.draw_at(seed, TAG_EVAL, BLOCK_RESIDUAL, i as u64);
        let jet = critic.jet(&x)?;
        let r = residual(&jet, &x, spec, ControlInput::Fixed)?;
        Ok(((jet.value - oracle.eval(&x)).powi(2), r * r))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let err: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let res: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let rmse = sqrt_mean_estimate(&err);
    let resid = sqrt_mean_estimate(&res);
    let omega = spec.gamma();
    let bound = resid.value / omega;
    let combined = rmse.std_error + resid.std_error / omega;
    let margin = 3.0 * combined;
    let mc_slack = if bound > 0.0 { margin / bound } else { 0.0 };
    let applicable = is_stationary(spec, mu);
    Ok(BoundedInverseReport {
        rmse_vs_oracle: rmse.value,
        rmse_std_error: rmse.std_error,
        residual_norm: resid.value,
        residual_std_error: resid.std_error,
        omega,
        certified_bound: bound,
        mc_slack,
        pass: rmse.value <= bound + margin,
        applicable,
        warning: (!applicable).then(|| {
            "sampling measure is not the stationary law of the fixed-control dynamics; the bound is not certified".to_string()
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeErrors {
    /// `‖v − V‖_{L⁴(μ)}`.
    pub value_l4: f64,
    /// `‖Dv − DV‖_{L⁴(μ;H)}`.
    pub grad_l4: f64,
    /// `(∫∫ |(D²v − D²V)(x) h|⁴ μ(dx) μ′(dh))^{1/4}`.
    pub hess_mu_mu: f64,
    /// `(∫ ‖D²v − D²V‖_op⁴ μ(dx))^{1/4}`.
    pub hess_op: f64,
    /// `max_{n>d} 2M_n`, a floor for the operator-norm error.
    pub op_tail_floor: f64,
    pub k: usize,
}

/// Largest `|eigenvalue|` of a symmetric `d × d` matrix by power iteration;
/// stops after `max_iter` steps or when the
/// estimate moves by less than `tol` relative.
pub fn power_iteration_norm(matrix: &[f64], d: usize, max_iter: usize, tol: f64) -> f64 {
    if d == 0 {
        return 0.0;
    }
    // fixed start with irrational-ish weights so it is unlikely to be orthogonal to the top eigenvector
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.618_033_988_75 * ((i + 1) as f64).sqrt().fract()).collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let n0 = norm(&v);
    v.iter_mut().for_each(|a| *a /= n0);
    let mut estimate = 0.0f64;
    let mut w = vec![0.0; d];
    for _ in 0..max_iter {
        for i in 0..d {
            w[i] = (0..d).map(|j| matrix[i * d + j] * v[j]).sum();
        }
        // |Av| for unit v converges to the spectral radius from below, also for ±λ pairs
        let next = norm(&w);
        if next == 0.0 {
            return 0.0;
        }
        let wn = next;
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / wn);
        let converged = (next - estimate).abs() <= tol * next.max(1e-300);
        estimate = next;
        if converged {
            break;
        }
    }
    estimate
}

/// Value, gradient and Hessian errors of `critic` against a diagonal quadratic
/// reference. The reference Hessian is `diag(2M_n)` on all `N` modes; the
/// critic's lives on its first `d`, so the difference is block diagonal.
pub fn derivative_error_norms<C: Critic>(
    critic: &C,
    oracle: &QuadraticCritic,
    mu: &GaussianMeasure,
    mu_prime: &GaussianMeasure,
    k: usize,
    seed: u64,
) -> Result<DerivativeErrors> {
    let n = oracle.len();
    let d = critic.dim();
    if d > n {
        return Err(Error::Shape(format!("critic reads {d} modes, reference has {n}")));
    }
    if k == 0 {
        return Err(Error::config("k", "need at least one sample"));
    }
    let diag = oracle.hessian_diagonal();
    let op_tail_floor = diag[d..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rows = par::map_indexed(k, |i| -> Result<[f64; 4]> {
        let x = mu.draw_at(seed, TAG_EVAL, BLOCK_DERIV_X, i as u64).resized(n);
        let h = mu_prime.draw_at(seed, TAG_EVAL, BLOCK_DERIV_H, i as u64).resized(n);
        let jet = critic.jet(&x)?;
        let value = jet.value - oracle.eval(&x);
        let og = oracle.gradient(&x);
        let grad_sq: f64 = og
            .iter()
            .enumerate()
            .map(|(j, g)| (jet.grad.get(j).copied().unwrap_or(0.0) - g).powi(2))
            .sum();
        let mut block = jet.hess.clone();
        for j in 0..d {
            block[j * d + j] -= diag[j];
        }
        let mut hh_sq = 0.0;
        for r in 0..d {
            let row: f64 = (0..d).map(|c| block[r * d + c] * h.coeff(c + 1)).sum();
            hh_sq += row * row;
        }
        for j in d..n {
            hh_sq += (diag[j] * h.coeff(j + 1)).powi(2);
        }
        let op = power_iteration_norm(&block, d, 50, 1e-6).max(op_tail_floor);
        Ok([value.powi(4), grad_sq * grad_sq, hh_sq * hh_sq, op.powi(4)])
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mean = |c: usize| (rows.iter().map(|r| r[c]).sum::<f64>() / k as f64).powf(0.25);
    Ok(DerivativeErrors {
        value_l4: mean(0),
        grad_l4: mean(1),
        hess_mu_mu: mean(2),
        hess_op: mean(3),
        op_tail_floor,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hgno::CriticNet;
    use crate::measures::{stationary_tcc, stationary_wn};
    use crate::oracle::lq_solve;
    use crate::residual::Preset;
    use crate::rng::NormalStream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn metric_examples() {
        let mu = stationary_tcc(10);
        let v = |x: &HVec| Ok(1.0 + x.norm_sq());
        let same = metrics(v, v, &mu, 500, 1, "same").unwrap();
        assert_eq!((same.me, same.rmse, same.re1, same.re2), (0.0, 0.0, Some(0.0), Some(0.0)));

        let shifted = metrics(|x: &HVec| Ok(2.0 + x.norm_sq()), v, &mu, 500, 1, "shift").unwrap();
        assert_abs_diff_eq!(shifted.me, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(shifted.rmse, 1.0, epsilon = 1e-12);

        let scaled = metrics(|x: &HVec| Ok(1.1 * (1.0 + x.norm_sq())), v, &mu, 500, 1, "scale").unwrap();
        assert_abs_diff_eq!(scaled.re1.unwrap(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(scaled.re2.unwrap(), 0.1, epsilon = 1e-12);

        let zero_ref = metrics(|_: &HVec| Ok(1.0), |_: &HVec| Ok(0.0), &mu, 10, 1, "zero").unwrap();
        assert_eq!(zero_ref.undefined(), vec!["re1", "re2"]);
        assert!(metrics(v, v, &mu, 0, 1, "").is_err());
    }

    #[test]
    fn metrics_on_controls_use_the_h_norm() {
        let xs = vec![HVec::unit(1, 3), HVec::unit(2, 3)];
        let r = metrics_on(|x: &HVec| Ok(x.scaled(2.0)), |x: &HVec| Ok(x.clone()), &xs, "u").unwrap();
        assert_abs_diff_eq!(r.rmse, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.re2.unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn metrics_permutation_invariant() {
        let mut xs = stationary_wn(8).sample(300, 4);
        let p = |x: &HVec| Ok(x.coeff(1).sin());
        let r = |x: &HVec| Ok(x.coeff(1) + 2.0);
        let a = metrics_on(p, r, &xs, "").unwrap();
        xs.reverse();
        let b = metrics_on(p, r, &xs, "").unwrap();
        assert_abs_diff_eq!(a.me, b.me, epsilon = 1e-12);
        assert_abs_diff_eq!(a.rmse, b.rmse, epsilon = 1e-12);
        assert_abs_diff_eq!(a.re1.unwrap(), b.re1.unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.re2.unwrap(), b.re2.unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn re2_homogeneity() {
        let mu = stationary_tcc(6);
        for c in [0.0, 0.5, 1.0, 3.0, -2.0] {
            let r = metrics(
                move |x: &HVec| Ok(c * (1.0 + x.coeff(1))),
                |x: &HVec| Ok(1.0 + x.coeff(1)),
                &mu,
                200,
                2,
                "",
            )
            .unwrap();
            assert_abs_diff_eq!(r.re2.unwrap(), (c - 1.0).abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_critic_has_vanishing_residual_norm() {
        let n = 30;
        let spec = crate::residual::ProblemSpec::preset(Preset::HeatTcc, n);
        let oracle = kolmogorov_reference(&spec).unwrap();
        let norm = residual_l2_norm(&oracle, None, &spec, &stationary_tcc(n), 2000, 1).unwrap();
        assert!(norm < 1e-8, "{norm}");
        let hjb = spec.into_hjb();
        let sol = hjb_reference(&hjb).unwrap();
        let norm = residual_l2_norm(&sol.critic(), None, &hjb, &stationary_tcc(n), 2000, 1).unwrap();
        assert!(norm < 1e-8, "{norm}");
    }

    #[test]
    fn zero_net_residual_norm_matches_gaussian_moments() {
        // F 0 = |x|², so E[F²] = (Σ v_n)² + 2 Σ v_n²
        let n = 40;
        let spec = crate::residual::ProblemSpec::preset(Preset::HeatTcc, n);
        let mu = stationary_tcc(n);
        let tr: f64 = mu.variances().iter().sum();
        let sq: f64 = mu.variances().iter().map(|v| v * v).sum();
        let exact = (tr * tr + 2.0 * sq).sqrt();
        let est = residual_l2_estimate(&CriticNet::zeros(5, 3), None, &spec, &mu, 200_000, 3).unwrap();
        assert!((est.value - exact).abs() < 4.0 * est.std_error, "{} vs {exact} ± {}", est.value, est.std_error);
    }

    #[test]
    fn standard_error_halves_with_four_times_the_samples() {
        let n = 20;
        let spec = crate::residual::ProblemSpec::preset(Preset::HeatTcc, n);
        let mu = stationary_tcc(n);
        let net = CriticNet::zeros(3, 2);
        let spread = |k: usize| {
            let vals: Vec<f64> = (0..40)
                .map(|s| residual_l2_norm(&net, None, &spec, &mu, k, 100 + s).unwrap())
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        };
        let ratio = spread(500) / spread(2000);
        assert!((ratio - 2.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn bounded_inverse_examples() {
        let n = 20;
        let spec = crate::residual::ProblemSpec::preset(Preset::HeatTcc, n);
        let mu = stationary_tcc(n);
        let oracle = kolmogorov_reference(&spec).unwrap();
        let rep = bounded_inverse_report(&oracle, &spec, &mu, 500, 1).unwrap();
        assert!(rep.pass && rep.applicable && rep.warning.is_none());
        assert!(rep.rmse_vs_oracle < 1e-10 && rep.residual_norm < 1e-8);

        // an untrained net still satisfies the inequality
        let rep = bounded_inverse_report(&CriticNet::init(4, 8, 1), &spec, &mu, 2000, 2).unwrap();
        assert!(rep.pass, "{rep:?}");

        // the white-noise measure is not stationary for trace-class noise
        let rep = bounded_inverse_report(&oracle, &spec, &stationary_wn(n), 100, 1).unwrap();
        assert!(!rep.applicable && rep.warning.is_some());
        assert!(bounded_inverse_report(&oracle, &spec.clone().into_hjb(), &mu, 100, 1).is_err());

        assert!(certificate_holds(0.01383, 0.01610, 1.0));
        assert!(certificate_holds(0.03810, 0.08631, 1.0));
    }

    fn random_symmetric(d: usize, seed: u64) -> Vec<f64> {
        let mut s = NormalStream::new(seed, 5, 5, 5);
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v = s.normal();
                m[i * d + j] = v;
                m[j * d + i] = v;
            }
        }
        m
    }

    #[test]
    fn power_iteration_matches_symmetric_eigensolver() {
        let mut checked = 0;
        for seed in 0..40 {
            let d = 2 + (seed as usize % 9);
            let m = random_symmetric(d, seed);
            let eig = nalgebra::DMatrix::from_row_slice(d, d, &m).symmetric_eigen();
            let mut abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
            abs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            // only well-separated spectra converge in 50 steps
            if abs.len() > 1 && abs[1] / abs[0] > 0.7 {
                continue;
            }
            let est = power_iteration_norm(&m, d, 50, 1e-6);
            assert!((est - abs[0]).abs() / abs[0] < 1e-4, "seed {seed}: {est} vs {}", abs[0]);
            checked += 1;
        }
        assert!(checked >= 10);
        assert_eq!(power_iteration_norm(&[0.0; 4], 2, 50, 1e-6), 0.0);
    }

    #[test]
    fn derivative_errors_of_the_reference_vanish() {
        let n = 25;
        let spec = crate::residual::ProblemSpec::preset(Preset::HeatTcc, n);
        let oracle = kolmogorov_reference(&spec).unwrap();
        let mu = stationary_tcc(n);
        let e = derivative_error_norms(&oracle, &oracle, &mu, &mu, 200, 1).unwrap();
        assert!(e.value_l4 < 1e-14 && e.grad_l4 < 1e-14 && e.hess_mu_mu < 1e-14);
        assert_eq!(e.op_tail_floor, 0.0);
        assert!(e.hess_op < 1e-14);
    }

    #[test]
    fn truncated_reference_has_the_tail_errors() {
        let n = 30;
        let d = 6;
        let sol = lq_solve(1.0, 1.0, &HVec::zeros(n), &[], n).unwrap();
        let full = sol.critic();
        let head = QuadraticCritic {
            m: full.m[..d].to_vec(),
            q: full.q[..d].to_vec(),
            constant: full.constant,
        };
        let mu = stationary_wn(n);
        let e = derivative_error_norms(&head, &full, &mu, &mu, 20_000, 7).unwrap();
        let tail_floor = 2.0 * full.m[d];
        assert_abs_diff_eq!(e.op_tail_floor, tail_floor, epsilon = 1e-15);
        assert_abs_diff_eq!(e.hess_op, tail_floor, epsilon = 1e-12);
        assert!(e.hess_op >= e.op_tail_floor);
        // E[(Σ a_n h_n²)²] = (Σ a_n v_n)² + 2 Σ a_n² v_n² with a_n = (2M_n)²
        let v = mu.variances();
        let a: Vec<f64> = (d..n).map(|j| (2.0 * full.m[j]).powi(2)).collect();
        let s1: f64 = a.iter().zip(&v[d..]).map(|(a, v)| a * v).sum();
        let s2: f64 = a.iter().zip(&v[d..]).map(|(a, v)| (a * v).powi(2)).sum();
        let exact = (s1 * s1 + 2.0 * s2).powf(0.25);
        assert!((e.hess_mu_mu - exact).abs() / exact < 0.03, "{} vs {exact}", e.hess_mu_mu);
        assert!(e.hess_mu_mu < e.hess_op);
    }
}
