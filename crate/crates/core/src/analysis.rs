//! Laplace exponents, aging correlation estimators and convergence diagnostics.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{alpha_hat, Environment, JumpField};
use crate::error::{check_positive, check_unit_open, Error, Result};
use crate::path::{format_sig, JumpConvention, StepPath};
use crate::special::beta_reg;

/// `Σ w_x (1 - e^{-λ d_x})` over `(weight, depth)` pairs.
pub fn empirical_laplace(weight_depth: &[(f64, f64)], lambda: f64) -> f64 {
    weight_depth
        .iter()
        .map(|&(w, d)| -w * (-lambda * d).exp_m1())
        .sum()
}

/// Laplace exponent of the normalized finite-n clock, with `γ^{(n)} = c_n τ`.
pub fn finite_n_laplace(env: &Environment, lambda: f64) -> f64 {
    empirical_laplace(&env.scaled_weight_depth(), lambda)
}

/// `φ(λ) = Σ γ^a (1 - e^{-λ γ^{1-a}})` over the retained jumps.
pub fn jump_field_laplace(jumps: &JumpField, a: f64, lambda: f64) -> f64 {
    empirical_laplace(&jumps.weight_depth(a), lambda)
}

/// `ε^{α̂} Σ γ^a (1 - e^{-λ ε^{-1} γ^{1-a}})`, the exponent of the small-time
/// rescaled clock. `jumps.alpha_eff()` plays the role of α.
pub fn rescaled_laplace(jumps: &JumpField, a: f64, epsilon: f64, lambda: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    let index = alpha_hat(jumps.alpha_eff(), a)?.nondegenerate()?;
    Ok(epsilon.powf(index) * jump_field_laplace(jumps, a, lambda / epsilon))
}

/// Limit exponent `ĉ λ^{α̂}`.
pub fn limit_laplace(c_hat: f64, alpha_hat: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        c_hat * lambda.powf(alpha_hat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveLabel {
    FiniteN,
    JumpField,
    Rescaled,
    Limit,
}

impl CurveLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveLabel::FiniteN => "finite-n",
            CurveLabel::JumpField => "jump-field",
            CurveLabel::Rescaled => "rescaled",
            CurveLabel::Limit => "limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceCurve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub label: CurveLabel,
}

impl LaplaceCurve {
    /// Evaluates `exponent` on an increasing grid of nonnegative λ.
    pub fn evaluate<F>(label: CurveLabel, lambdas: &[f64], mut exponent: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if lambdas.is_empty() {
            return Err(Error::Empty("lambda grid"));
        }
        if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite()))
            || lambdas.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::param(
                "lambdas",
                "grid must be nonnegative and strictly increasing",
            ));
        }
        let values = lambdas
            .iter()
            .map(|&l| exponent(l))
            .collect::<Result<_>>()?;
        Ok(LaplaceCurve {
            lambdas: lambdas.to_vec(),
            values,
            label,
        })
    }

    /// Checks the subordinator shape on the grid: zero at λ = 0, nondecreasing,
    /// and every interior point on or above the chord of its neighbours.
    pub fn has_subordinator_shape(&self, tol: f64) -> bool {
        let zero_ok = self
            .lambdas
            .iter()
            .zip(&self.values)
            .all(|(l, v)| *l != 0.0 || v.abs() <= tol);
        let monotone = self.values.windows(2).all(|w| w[1] >= w[0] - tol);
        let concave = (1..self.values.len().saturating_sub(1)).all(|i| {
            let (l0, l1, l2) = (self.lambdas[i - 1], self.lambdas[i], self.lambdas[i + 1]);
            let (v0, v1, v2) = (self.values[i - 1], self.values[i], self.values[i + 1]);
            let chord = v0 + (v2 - v0) * (l1 - l0) / (l2 - l0);
            v1 >= chord - tol * (1.0 + chord.abs())
        });
        zero_ok && monotone && concave
    }
}

/// Writes curves as CSV `lambda,value,label`.
pub fn write_laplace_csv<W: Write>(curves: &[LaplaceCurve], mut out: W) -> std::io::Result<()> {
    writeln!(out, "lambda,value,label")?;
    for c in curves {
        for (l, v) in c.lambdas.iter().zip(&c.values) {
            writeln!(
                out,
                "{},{},{}",
                format_sig(*l),
                format_sig(*v),
                c.label.as_str()
            )?;
        }
    }
    Ok(())
}

/// Limit probability that `[t, t+s]` contains no jump of the self-similar
/// process:
/// `(sin πα̂ / π) ∫_{s/(t+s)}^1 θ^{-α̂} (1-θ)^{α̂-1} dθ = I_{t/(t+s)}(α̂, 1-α̂)`.
pub fn arcsine_pi(t: f64, s: f64, alpha_hat: f64) -> Result<f64> {
    check_positive("t", t)?;
    check_positive("s", s)?;
    check_unit_open("alpha_hat", alpha_hat)?;
    beta_reg(alpha_hat, 1.0 - alpha_hat, 1.0 / (1.0 + s / t))
}

/// `sin(πα̂)/π`, the reciprocal of `B(α̂, 1-α̂)`.
pub fn arcsine_prefactor(alpha_hat: f64) -> f64 {
    (PI * alpha_hat).sin() / PI
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgingKind {
    Pi,
    R,
    Q,
    Arcsine,
}

impl AgingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgingKind::Pi => "pi",
            AgingKind::R => "r",
            AgingKind::Q => "q",
            AgingKind::Arcsine => "arcsine",
        }
    }
}

/// Monte Carlo estimate of a two-time correlation with its binomial error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingEstimate {
    pub t: f64,
    pub s: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub replicates: usize,
    pub oracle: Option<f64>,
}

impl AgingEstimate {
    pub fn from_hits(t: f64, s: f64, hits: usize, replicates: usize, oracle: Option<f64>) -> Self {
        let p = hits as f64 / replicates as f64;
        AgingEstimate {
            t,
            s,
            estimate: p,
            stderr: (p * (1.0 - p) / replicates as f64).sqrt(),
            replicates,
            oracle,
        }
    }

    /// Distance to the oracle in units of the standard error, if both exist.
    pub fn z_score(&self) -> Option<f64> {
        self.oracle
            .map(|o| (self.estimate - o) / self.stderr.max(f64::MIN_POSITIVE))
    }
}

fn count_hits<F>(ensemble: &[StepPath], t: f64, s: f64, mut hit: F) -> Result<usize>
where
    F: FnMut(&StepPath) -> Result<bool>,
{
    check_positive("t", t)?;
    check_positive("s", s)?;
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    if let Some(short) = ensemble.iter().find(|p| p.horizon() < t + s) {
        return Err(Error::Range {
            time: t + s,
            horizon: short.horizon(),
        });
    }
    let mut hits = 0;
    for p in ensemble {
        if hit(p)? {
            hits += 1;
        }
    }
    Ok(hits)
}

/// No event in `(t, t+s]`.
pub fn pi_hit(path: &StepPath, t: f64, s: f64, convention: JumpConvention) -> Result<bool> {
    Ok(path.count_events(t, s, convention)? == 0)
}

/// Same stored value at `t` and `t+s`.
pub fn r_hit(path: &StepPath, t: f64, s: f64) -> Result<bool> {
    Ok(path.value_at(t)? == path.value_at(t + s)?)
}

/// Running maximum strictly increases during `(t, t+s]`.
pub fn q_hit(path: &StepPath, t: f64, s: f64) -> Result<bool> {
    Ok(path.running_sup(t)? < path.running_sup(t + s)?)
}

pub(crate) fn oracle_for(t: f64, s: f64, alpha_hat: Option<f64>) -> Result<Option<f64>> {
    alpha_hat.map(|ah| arcsine_pi(t, s, ah)).transpose()
}

/// Fraction of paths without an event in `(t, t+s]`.
pub fn estimate_pi(
    ensemble: &[StepPath],
    t: f64,
    s: f64,
    convention: JumpConvention,
    alpha_hat: Option<f64>,
) -> Result<AgingEstimate> {
    let hits = count_hits(ensemble, t, s, |p| pi_hit(p, t, s, convention))?;
    Ok(AgingEstimate::from_hits(
        t,
        s,
        hits,
        ensemble.len(),
        oracle_for(t, s, alpha_hat)?,
    ))
}

/// Fraction of paths with the same stored value at `t` and `t+s`.
pub fn estimate_r(
    ensemble: &[StepPath],
    t: f64,
    s: f64,
    alpha_hat: Option<f64>,
) -> Result<AgingEstimate> {
    let hits = count_hits(ensemble, t, s, |p| r_hit(p, t, s))?;
    Ok(AgingEstimate::from_hits(
        t,
        s,
        hits,
        ensemble.len(),
        oracle_for(t, s, alpha_hat)?,
    ))
}

/// Fraction of paths whose running maximum grows during `(t, t+s]`.
pub fn estimate_q(ensemble: &[StepPath], t: f64, s: f64) -> Result<AgingEstimate> {
    let hits = count_hits(ensemble, t, s, |p| q_hit(p, t, s))?;
    Ok(AgingEstimate::from_hits(t, s, hits, ensemble.len(), None))
}

/// One row of an aging table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgingRow {
    pub kind: AgingKind,
    pub estimate: AgingEstimate,
}

/// CSV `t,s,ratio,kind,estimate,stderr,replicates,oracle`; a missing oracle is an empty cell.
pub fn write_aging_csv<W: Write>(rows: &[AgingRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,s,ratio,kind,estimate,stderr,replicates,oracle")?;
    for r in rows {
        let e = &r.estimate;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            format_sig(e.t),
            format_sig(e.s),
            format_sig(e.t / e.s),
            r.kind.as_str(),
            format_sig(e.estimate),
            format_sig(e.stderr),
            e.replicates,
            e.oracle.map(format_sig).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_statistic(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::Empty("ks sample"));
    }
    if samples_a.iter().chain(samples_b).any(|x| x.is_nan()) {
        return Err(Error::param("samples", "NaN in sample"));
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        // step past every copy of x in both samples before comparing
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// Time fraction spent at each listed value over the whole horizon.
pub fn occupation_fractions(path: &StepPath, values: &[f64]) -> Vec<f64> {
    path.occupation_times(values)
        .into_iter()
        .map(|t| t / path.horizon())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{EventKind, PathEvent};
    use approx::assert_relative_eq;

    #[test]
    fn laplace_arithmetic() {
        assert_eq!(empirical_laplace(&[(2.0, 3.0)], 0.0), 0.0);
        assert_relative_eq!(empirical_laplace(&[(2.0, 3.0)], 1e6), 2.0);
        let v = empirical_laplace(&[(1.0, 1.0), (2.0, 0.5)], 1.0);
        let expected = (1.0 - (-1f64).exp()) + 2.0 * (1.0 - (-0.5f64).exp());
        assert_relative_eq!(v, expected, max_relative = 1e-15);
        assert!((v - 1.4191).abs() < 1e-4);
    }

    #[test]
    fn rescaled_laplace_at_unit_epsilon() {
        let f = JumpField::from_parts(0.5, 1.0, vec![2.0, 0.3], vec![0.2, 0.7], 1.0).unwrap();
        for &l in &[0.0, 0.4, 3.0] {
            assert_eq!(
                rescaled_laplace(&f, 0.2, 1.0, l).unwrap(),
                jump_field_laplace(&f, 0.2, l)
            );
        }
        assert!(matches!(
            rescaled_laplace(&f, 0.5, 0.1, 1.0),
            Err(Error::Degenerate(_))
        ));
        assert!(rescaled_laplace(&f, 0.2, 0.0, 1.0).is_err());
    }

    #[test]
    fn curve_shape_detection() {
        let grid = [0.0, 1.0, 2.0, 3.0];
        let good =
            LaplaceCurve::evaluate(CurveLabel::Limit, &grid, |l| Ok(limit_laplace(1.0, 0.5, l)))
                .unwrap();
        assert!(good.has_subordinator_shape(1e-12));
        let convex = LaplaceCurve::evaluate(CurveLabel::Limit, &grid, |l| Ok(l * l)).unwrap();
        assert!(!convex.has_subordinator_shape(1e-12));
        assert!(LaplaceCurve::evaluate(CurveLabel::Limit, &[1.0, 0.5], |_| Ok(0.0)).is_err());
    }

    #[test]
    fn arcsine_closed_forms() {
        assert!((arcsine_pi(1.0, 1.0, 0.5).unwrap() - 0.5).abs() < 1e-12);
        // t/(t+s) = 3/4: (2/pi) asin(sqrt(3/4)) = 2/3
        assert!((arcsine_pi(3.0, 1.0, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(arcsine_pi(1.0, 1e-12, 0.3).unwrap() > 0.999);
        assert!(arcsine_pi(1.0, 1.0, 1.0).is_err());
        assert!(arcsine_pi(0.0, 1.0, 0.5).is_err());
        assert_relative_eq!(arcsine_prefactor(0.5), 1.0 / PI);
    }

    fn constant_ensemble(k: usize) -> Vec<StepPath> {
        (0..k)
            .map(|i| StepPath::constant(1.0 + i as f64, 5.0).unwrap())
            .collect()
    }

    #[test]
    fn estimators_on_constant_paths() {
        let ens = constant_ensemble(7);
        let pi = estimate_pi(&ens, 1.0, 1.0, JumpConvention::Transition, Some(0.5)).unwrap();
        assert_eq!(pi.estimate, 1.0);
        assert_eq!(pi.stderr, 0.0);
        assert_eq!(pi.replicates, 7);
        assert!((pi.oracle.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(estimate_r(&ens, 1.0, 1.0, None).unwrap().estimate, 1.0);
        let q = estimate_q(&ens, 1.0, 1.0).unwrap();
        assert_eq!(q.estimate, 0.0);
        assert_eq!(q.oracle, None);
    }

    #[test]
    fn estimators_validate() {
        assert!(matches!(
            estimate_pi(&[], 1.0, 1.0, JumpConvention::Transition, None),
            Err(Error::Empty(_))
        ));
        let ens = constant_ensemble(2);
        assert!(matches!(
            estimate_r(&ens, 3.0, 3.0, None),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn every_path_jumps_in_window() {
        let p = StepPath::new(
            1.0,
            vec![PathEvent {
                time: 2.0,
                value: 3.0,
                kind: EventKind::Move,
            }],
            5.0,
        )
        .unwrap();
        let ens = vec![p; 4];
        assert_eq!(
            estimate_pi(&ens, 1.0, 3.0, JumpConvention::Transition, None)
                .unwrap()
                .estimate,
            0.0
        );
        assert_eq!(estimate_q(&ens, 1.0, 3.0).unwrap().estimate, 1.0);
    }

    #[test]
    fn aging_estimate_stderr() {
        let e = AgingEstimate::from_hits(1.0, 2.0, 30, 100, Some(0.25));
        assert_relative_eq!(e.stderr, (0.3f64 * 0.7 / 100.0).sqrt());
        assert_relative_eq!(e.z_score().unwrap(), 0.05 / e.stderr, max_relative = 1e-12);
    }

    #[test]
    fn ks_examples() {
        assert_eq!(
            ks_statistic(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap(),
            0.0
        );
        assert_eq!(ks_statistic(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_relative_eq!(
            ks_statistic(&[1.0, 2.0, 3.0], &[1.5, 2.5]).unwrap(),
            1.0 / 3.0
        );
        assert!(ks_statistic(&[], &[1.0]).is_err());
    }

    #[test]
    fn occupation_example() {
        let p = StepPath::new(
            7.0,
            vec![
                PathEvent {
                    time: 1.5,
                    value: 2.0,
                    kind: EventKind::Move,
                },
                PathEvent {
                    time: 2.0,
                    value: 7.0,
                    kind: EventKind::Move,
                },
                PathEvent {
                    time: 3.5,
                    value: 2.0,
                    kind: EventKind::Move,
                },
            ],
            4.0,
        )
        .unwrap();
        assert_eq!(occupation_fractions(&p, &[7.0, 2.0]), vec![0.75, 0.25]);
        assert_eq!(
            occupation_fractions(&StepPath::constant(3.0, 2.0).unwrap(), &[3.0]),
            vec![1.0]
        );
    }

    #[test]
    fn aging_csv_layout() {
        let rows = [
            AgingRow {
                kind: AgingKind::Pi,
                estimate: AgingEstimate::from_hits(1.0, 1.0, 1, 2, Some(0.5)),
            },
            AgingRow {
                kind: AgingKind::Q,
                estimate: AgingEstimate::from_hits(2.0, 1.0, 0, 2, None),
            },
        ];
        let mut buf = Vec::new();
        write_aging_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,s,ratio,kind,estimate,stderr,replicates,oracle");
        assert_eq!(lines[1], "1.00000000000,1.00000000000,1.00000000000,pi,0.500000000000,0.353553390593,2,0.500000000000");
        assert!(lines[2].ends_with(",q,0,0,2,"));
    }
}
