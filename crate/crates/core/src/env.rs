//! Random environments: Pareto trap landscapes for the finite complete graph
//! and truncated stable jump fields for the infinite-volume processes.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_positive, check_unit_open, Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::seed::{rng_from_seed, SimRng};

/// Maps a uniform `u ∈ (0, 1]` to a Pareto variate with `P(τ > t) = t^{-alpha}`, `t ≥ 1`.
#[inline]
pub fn pareto_from_uniform(u: f64, alpha: f64) -> f64 {
    u.powf(-1.0 / alpha)
}

/// Uniform on `(0, 1]`.
#[inline]
pub(crate) fn uniform_open0<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Standard exponential, strictly positive.
#[inline]
pub(crate) fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -uniform_open0(rng).ln().min(-f64::MIN_POSITIVE)
}

/// Finite trap landscape `{τ_x}` with tail index `alpha` and asymmetry `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentRecord")]
pub struct Environment {
    n: usize,
    alpha: f64,
    a: f64,
    tau: Vec<f64>,
    c_n: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvironmentRecord {
    n: usize,
    alpha: f64,
    a: f64,
    tau: Vec<f64>,
    c_n: f64,
}

impl TryFrom<EnvironmentRecord> for Environment {
    type Error = Error;

    fn try_from(rec: EnvironmentRecord) -> Result<Self> {
        if rec.n != rec.tau.len() {
            return Err(Error::param(
                "n",
                format!("{} differs from tau length {}", rec.n, rec.tau.len()),
            ));
        }
        let env = Environment::from_tau(rec.tau, rec.alpha, rec.a)?;
        if (env.c_n - rec.c_n).abs() > 1e-12 * env.c_n {
            return Err(Error::param(
                "c_n",
                format!("{} is inconsistent with n and alpha", rec.c_n),
            ));
        }
        Ok(env)
    }
}

fn check_asymmetry(a: f64) -> Result<()> {
    if (0.0..=1.0).contains(&a) {
        Ok(())
    } else {
        Err(Error::param("a", format!("{a} is outside the range [0,1]")))
    }
}

impl Environment {
    /// Wraps explicit trap parameters; every value must be at least 1.
    pub fn from_tau(tau: Vec<f64>, alpha: f64, a: f64) -> Result<Self> {
        check_unit_open("alpha", alpha)?;
        check_asymmetry(a)?;
        if tau.is_empty() {
            return Err(Error::param("n", "an environment needs at least one site"));
        }
        if let Some(bad) = tau.iter().find(|t| !(**t >= 1.0 && t.is_finite())) {
            return Err(Error::param(
                "tau",
                format!("{bad} is outside the Pareto support [1, inf)"),
            ));
        }
        let n = tau.len();
        Ok(Environment {
            n,
            alpha,
            a,
            tau,
            c_n: normalizer_cn(n, alpha)?,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn c_n(&self) -> f64 {
        self.c_n
    }

    /// Mean sojourn time `τ_x^{1-a}` at site `x`.
    pub fn depth(&self, x: usize) -> f64 {
        self.tau[x].powf(1.0 - self.a)
    }

    /// Transition weight `τ_x^a` of site `x`.
    pub fn weight(&self, x: usize) -> f64 {
        self.tau[x].powf(self.a)
    }

    pub fn depths(&self) -> Vec<f64> {
        (0..self.n).map(|x| self.depth(x)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n).map(|x| self.weight(x)).collect()
    }

    /// `(weight, depth)` pairs of the normalized landscape `c_n τ_x`.
    pub fn scaled_weight_depth(&self) -> Vec<(f64, f64)> {
        self.tau
            .iter()
            .map(|t| {
                let g = self.c_n * t;
                (g.powf(self.a), g.powf(1.0 - self.a))
            })
            .collect()
    }
}

/// Samples `n` i.i.d. pure-Pareto trap parameters.
pub fn sample_pareto_env(n: usize, alpha: f64, a: f64, seed: u64) -> Result<Environment> {
    let mut rng = rng_from_seed(seed);
    sample_pareto_env_with(n, alpha, a, &mut rng)
}

pub(crate) fn sample_pareto_env_with(
    n: usize,
    alpha: f64,
    a: f64,
    rng: &mut SimRng,
) -> Result<Environment> {
    check_unit_open("alpha", alpha)?;
    check_asymmetry(a)?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let tau = (0..n)
        .map(|_| pareto_from_uniform(uniform_open0(rng), alpha))
        .collect();
    Ok(Environment {
        n,
        alpha,
        a,
        tau,
        c_n: normalizer_cn(n, alpha)?,
    })
}

/// Upper quantile of the Pareto law: the `t ≥ 1` with `P(τ > t) = p`.
pub fn pareto_upper_quantile(p: f64, alpha: f64) -> f64 {
    p.powf(-1.0 / alpha)
}

/// `c_n = (inf{t : P(τ > t) ≤ 1/n})^{-1} = n^{-1/alpha}` for the pure Pareto tail.
///
/// For `n = 1` the infimum is taken over the support `[1, ∞)`, giving 1.
pub fn normalizer_cn(n: usize, alpha: f64) -> Result<f64> {
    check_unit_open("alpha", alpha)?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    Ok(1.0 / pareto_upper_quantile(1.0 / n as f64, alpha))
}

fn inf_as_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn null_as_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// The largest points of a Poisson process on `(0, ∞) × [0, window]` with
/// intensity `scale · alpha_eff · x^{-1-alpha_eff} dx dy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JumpFieldRecord")]
pub struct JumpField {
    alpha_eff: f64,
    window: f64,
    sizes: Vec<f64>,
    locations: Vec<f64>,
    scale: f64,
    /// Expected mass of the discarded jumps; infinite for an empty field.
    #[serde(serialize_with = "inf_as_null")]
    tail_mass: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JumpFieldRecord {
    alpha_eff: f64,
    window: f64,
    sizes: Vec<f64>,
    locations: Vec<f64>,
    scale: f64,
    #[serde(deserialize_with = "null_as_inf")]
    tail_mass: f64,
}

impl TryFrom<JumpFieldRecord> for JumpField {
    type Error = Error;

    fn try_from(r: JumpFieldRecord) -> Result<Self> {
        let field = JumpField::from_parts(r.alpha_eff, r.window, r.sizes, r.locations, r.scale)?;
        let consistent = (field.tail_mass.is_infinite() && r.tail_mass.is_infinite())
            || (field.tail_mass - r.tail_mass).abs() <= 1e-12 * field.tail_mass;
        if !consistent {
            return Err(Error::param(
                "tail_mass",
                format!("{} does not match the retained jumps", r.tail_mass),
            ));
        }
        Ok(field)
    }
}

impl JumpField {
    /// Builds a field from explicit jumps, recomputing the tail diagnostic.
    pub fn from_parts(
        alpha_eff: f64,
        window: f64,
        sizes: Vec<f64>,
        locations: Vec<f64>,
        scale: f64,
    ) -> Result<Self> {
        check_unit_open("alpha_eff", alpha_eff)?;
        check_positive("window", window)?;
        check_positive("scale", scale)?;
        if sizes.len() != locations.len() {
            return Err(Error::param(
                "locations",
                format!("{} locations for {} sizes", locations.len(), sizes.len()),
            ));
        }
        if sizes.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::param(
                "sizes",
                "jump sizes must be positive and finite",
            ));
        }
        if sizes.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::param(
                "sizes",
                "jump sizes must be strictly decreasing",
            ));
        }
        if locations.iter().any(|y| !(0.0..=window).contains(y)) {
            return Err(Error::param(
                "locations",
                format!("locations must lie in [0, {window}]"),
            ));
        }
        let tail_mass = if sizes.is_empty() {
            f64::INFINITY
        } else {
            tail_time_mass(alpha_eff, sizes.len(), window, scale)?
        };
        Ok(JumpField {
            alpha_eff,
            window,
            sizes,
            locations,
            scale,
            tail_mass,
        })
    }

    pub fn alpha_eff(&self) -> f64 {
        self.alpha_eff
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Sum of the retained jumps, i.e. the truncated `U(window)`.
    pub fn total_mass(&self) -> f64 {
        self.sizes.iter().sum()
    }

    /// Number of retained jumps strictly larger than `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.sizes.partition_point(|&s| s > threshold)
    }

    /// `(weight γ^a, depth γ^{1-a})` pairs for asymmetry `a`.
    pub fn weight_depth(&self, a: f64) -> Vec<(f64, f64)> {
        self.sizes
            .iter()
            .map(|g| (g.powf(a), g.powf(1.0 - a)))
            .collect()
    }
}

/// Draws the `max_jumps` largest jumps from the series representation
/// `J_i = (A_i / (scale · window))^{-1/alpha_eff}`, with `A_i` the arrival
/// times of a unit-rate Poisson process and locations uniform on the window.
pub fn sample_stable_jumps(
    alpha_eff: f64,
    window: f64,
    max_jumps: usize,
    scale: f64,
    seed: u64,
) -> Result<JumpField> {
    let mut rng = rng_from_seed(seed);
    sample_stable_jumps_with(alpha_eff, window, max_jumps, scale, &mut rng)
}

pub(crate) fn sample_stable_jumps_with(
    alpha_eff: f64,
    window: f64,
    max_jumps: usize,
    scale: f64,
    rng: &mut SimRng,
) -> Result<JumpField> {
    check_unit_open("alpha_eff", alpha_eff)?;
    check_positive("window", window)?;
    check_positive("scale", scale)?;
    let rate = scale * window;
    let inv_alpha = 1.0 / alpha_eff;
    let mut sizes = Vec::with_capacity(max_jumps);
    let mut locations = Vec::with_capacity(max_jumps);
    let mut arrival = 0.0;
    while sizes.len() < max_jumps {
        arrival += exp1(rng);
        let size = (arrival / rate).powf(-inv_alpha);
        let location = window * rng.random::<f64>();
        if size <= 0.0 {
            // underflow: nothing smaller is representable
            break;
        }
        if sizes.last().is_some_and(|&prev| size >= prev) {
            // two arrivals closer than one ulp; the later one is dropped
            continue;
        }
        sizes.push(size);
        locations.push(location);
    }
    let tail_mass = if sizes.is_empty() {
        f64::INFINITY
    } else {
        tail_time_mass(alpha_eff, sizes.len(), window, scale)?
    };
    Ok(JumpField {
        alpha_eff,
        window,
        sizes,
        locations,
        scale,
        tail_mass,
    })
}

/// All jumps larger than `threshold` on a window of length `length` starting
/// at `offset`, as `(location, size)` pairs in decreasing size order.
pub(crate) fn jumps_above_with(
    alpha_eff: f64,
    offset: f64,
    length: f64,
    threshold: f64,
    scale: f64,
    rng: &mut SimRng,
) -> Vec<(f64, f64)> {
    let rate = scale * length;
    let inv_alpha = 1.0 / alpha_eff;
    let mut out = Vec::new();
    let mut arrival = 0.0;
    loop {
        arrival += exp1(rng);
        let size = (arrival / rate).powf(-inv_alpha);
        if size <= threshold {
            return out;
        }
        out.push((offset + length * rng.random::<f64>(), size));
    }
}

/// Expected mass of the jumps beyond the `max_jumps` largest:
/// `(scale·window)^{1/α} · α/(1-α) · M^{-(1-α)/α}`.
pub fn tail_time_mass(alpha_eff: f64, max_jumps: usize, window: f64, scale: f64) -> Result<f64> {
    check_unit_open("alpha_eff", alpha_eff)?;
    check_positive("window", window)?;
    check_positive("scale", scale)?;
    if max_jumps == 0 {
        return Err(Error::param(
            "max_jumps",
            "must be at least 1 (the untruncated mass is infinite)",
        ));
    }
    let m = max_jumps as f64;
    Ok(
        (scale * window).powf(1.0 / alpha_eff) * alpha_eff / (1.0 - alpha_eff)
            * m.powf(-(1.0 - alpha_eff) / alpha_eff),
    )
}

/// Index `(α - a)/(1 - a)` of the small-time limit subordinator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaHat(f64);

impl AlphaHat {
    pub fn value(self) -> f64 {
        self.0
    }

    /// True when `a ≥ α`: no self-similar limit exists and aging is interrupted.
    pub fn is_degenerate(self) -> bool {
        self.0 <= 0.0
    }

    /// The index itself, or an error naming the `a ≥ α` regime.
    pub fn nondegenerate(self) -> Result<f64> {
        if self.is_degenerate() {
            Err(Error::Degenerate(format!(
                "alpha_hat = {} <= 0: the asymmetry a is at least alpha, so the small-time limit is trivial (interrupted aging)",
                self.0
            )))
        } else {
            Ok(self.0)
        }
    }
}

pub fn alpha_hat(alpha: f64, a: f64) -> Result<AlphaHat> {
    check_unit_open("alpha", alpha)?;
    if !(0.0..1.0).contains(&a) {
        return Err(Error::param("a", format!("{a} is outside the range [0,1)")));
    }
    Ok(AlphaHat((alpha - a) / (1.0 - a)))
}

/// `ĉ = α ∫_0^∞ (1 - e^{-x^{1-a}}) x^{-(1+α-a)} dx`.
///
/// The integral is split at 1. On `(0,1)` the substitution `v = x^{1-α}`
/// absorbs the `x^{-α}` singularity, on `(1,∞)` `w = x^{-(α-a)}` maps the slow
/// tail onto `(0,1)`; both integrands are then bounded.
pub fn c_hat(alpha: f64, a: f64) -> Result<f64> {
    check_unit_open("alpha", alpha)?;
    if !(0.0..alpha).contains(&a) {
        return Err(Error::param(
            "a",
            format!("{a} must lie in [0, alpha={alpha}); the constant diverges for a >= alpha"),
        ));
    }
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-12,
        max_subdivisions: 4000,
    };
    let beta = alpha - a;
    let head_power = (1.0 - a) / (1.0 - alpha);
    let head = integrate(
        |v| {
            let y = v.powf(head_power);
            if y == 0.0 {
                1.0
            } else {
                -(-y).exp_m1() / y
            }
        },
        0.0,
        1.0,
        opts,
    )?;
    let tail_power = (1.0 - a) / beta;
    let tail = integrate(|w| -(-w.powf(-tail_power)).exp_m1(), 0.0, 1.0, opts)?;
    Ok(alpha * (head.value / (1.0 - alpha) + tail.value / beta))
}
