//! Path simulators: the finite-n trap model, the truncated K process and the
//! self-similar small-time limit.

use crate::env::{exp1, jumps_above_with, sample_stable_jumps_with, Environment, JumpField};
use crate::error::{check_positive, Error, Result};
use crate::path::{ClockRecord, EventKind, PathEvent, StepPath};
use crate::seed::{rng_from_seed, SimRng};
use crate::special::gamma;
use rand::Rng;

// Ẑ extends its location window at most this many times (window 2^60).
const MAX_WINDOW_DOUBLINGS: usize = 60;

/// Draws site indices with probability proportional to fixed weights.
struct SiteSampler {
    cumulative: Vec<f64>,
}

impl SiteSampler {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        SiteSampler { cumulative }
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().expect("nonempty weights")
    }

    fn sample(&self, rng: &mut SimRng) -> usize {
        let target = rng.random::<f64>() * self.total();
        self.cumulative
            .partition_point(|&c| c <= target)
            .min(self.cumulative.len() - 1)
    }
}

/// Accumulates sojourns into a path, keyed by site identity.
///
/// A sojourn too short to advance the floating-point clock is dropped: the
/// next entry replaces the event that opened it.
struct PathBuilder {
    initial_site: usize,
    initial_value: f64,
    events: Vec<PathEvent>,
    sites: Vec<usize>,
}

impl PathBuilder {
    fn new(site: usize, value: f64) -> Self {
        PathBuilder {
            initial_site: site,
            initial_value: value,
            events: Vec::new(),
            sites: Vec::new(),
        }
    }

    fn last_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    fn enter(&mut self, time: f64, site: usize, value: f64) {
        if time <= self.last_time() {
            if self.events.pop().is_none() {
                self.initial_site = site;
                self.initial_value = value;
                return;
            }
            self.sites.pop();
        }
        let before = self.sites.last().copied().unwrap_or(self.initial_site);
        let kind = if before == site {
            EventKind::SelfLoop
        } else {
            EventKind::Move
        };
        self.events.push(PathEvent { time, value, kind });
        self.sites.push(site);
    }

    fn finish(self, horizon: f64) -> StepPath {
        StepPath::from_sorted_unchecked(self.initial_value, self.events, horizon)
    }
}

/// Gillespie simulation of the chain that leaves site `x` after an
/// `Exp(mean depths[x])` sojourn and enters `y` with probability ∝ `weights[y]`
/// (self-loops included). The initial site is drawn from the same law.
fn run_weighted_chain(
    weights: &[f64],
    depths: &[f64],
    horizon: f64,
    rng: &mut SimRng,
    mut clock: Option<&mut ClockRecord>,
) -> StepPath {
    let sampler = SiteSampler::new(weights);
    let total_rate = sampler.total();
    let track = clock.is_some();
    let mut exploration = 0.0;
    let mut mark = |rng: &mut SimRng| {
        if track {
            exploration += exp1(rng) / total_rate;
        }
        exploration
    };

    let r = mark(rng);
    let mut site = sampler.sample(rng);
    let mut builder = PathBuilder::new(site, depths[site]);
    let mut physical = depths[site] * exp1(rng);
    if let Some(c) = clock.as_deref_mut() {
        c.push(r, physical);
    }
    while physical <= horizon {
        let r = mark(rng);
        site = sampler.sample(rng);
        builder.enter(physical, site, depths[site]);
        physical += depths[site] * exp1(rng);
        if let Some(c) = clock.as_deref_mut() {
            c.push(r, physical);
        }
    }
    builder.finish(horizon)
}

/// Depth process `Z_n(t) = τ_{Y_n(t)}^{1-a}` of the trap model on the complete graph.
pub fn simulate_trap_path(env: &Environment, horizon: f64, seed: u64) -> Result<StepPath> {
    check_positive("horizon", horizon)?;
    let mut rng = rng_from_seed(seed);
    Ok(simulate_trap_path_with(env, horizon, &mut rng, None))
}

pub fn simulate_trap_path_with_clock(
    env: &Environment,
    horizon: f64,
    seed: u64,
) -> Result<(StepPath, ClockRecord)> {
    check_positive("horizon", horizon)?;
    let mut rng = rng_from_seed(seed);
    let mut clock = ClockRecord::default();
    let path = simulate_trap_path_with(env, horizon, &mut rng, Some(&mut clock));
    Ok((path, clock))
}

pub(crate) fn simulate_trap_path_with(
    env: &Environment,
    horizon: f64,
    rng: &mut SimRng,
    clock: Option<&mut ClockRecord>,
) -> StepPath {
    run_weighted_chain(&env.weights(), &env.depths(), horizon, rng, clock)
}

/// Truncated K process `Z_t = γ_{Y_t}^{1-a}` driven by the retained jumps.
///
/// Time the true process spends at the state ∞ through the discarded small
/// jumps is omitted; [`JumpField::tail_mass`] bounds its expected size per unit
/// exploration time.
pub fn simulate_k_path(jumps: &JumpField, a: f64, horizon: f64, seed: u64) -> Result<StepPath> {
    let mut rng = rng_from_seed(seed);
    simulate_k_path_with(jumps, a, horizon, &mut rng, None)
}

pub fn simulate_k_path_with_clock(
    jumps: &JumpField,
    a: f64,
    horizon: f64,
    seed: u64,
) -> Result<(StepPath, ClockRecord)> {
    let mut rng = rng_from_seed(seed);
    let mut clock = ClockRecord::default();
    let path = simulate_k_path_with(jumps, a, horizon, &mut rng, Some(&mut clock))?;
    Ok((path, clock))
}

pub(crate) fn simulate_k_path_with(
    jumps: &JumpField,
    a: f64,
    horizon: f64,
    rng: &mut SimRng,
    clock: Option<&mut ClockRecord>,
) -> Result<StepPath> {
    check_positive("horizon", horizon)?;
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::param("a", format!("{a} is outside the range [0,1]")));
    }
    if jumps.is_empty() {
        if a > jumps.alpha_eff() {
            // no retained trap: the walker sits at ∞
            return StepPath::constant(0.0, horizon);
        }
        return Err(Error::Degenerate(
            "empty jump field with a <= alpha: no dynamics representable".to_owned(),
        ));
    }
    let (weights, depths): (Vec<f64>, Vec<f64>) = jumps.weight_depth(a).into_iter().unzip();
    Ok(run_weighted_chain(&weights, &depths, horizon, rng, clock))
}

/// Everything produced by one draw of the self-similar limit process.
#[derive(Debug, Clone)]
pub struct ZhatSample {
    pub path: StepPath,
    /// Locations of the visited jumps and the clock after each sojourn.
    pub clock: ClockRecord,
    /// Final length of the location window.
    pub window: f64,
    /// Smallest jump size kept, fixed by the first window.
    pub threshold: f64,
}

/// Lévy-measure multiplier that gives the series subordinator the Laplace
/// exponent `c_hat · λ^{alpha_hat}`.
pub fn zhat_scale(alpha_hat: f64, c_hat: f64) -> f64 {
    c_hat / gamma(1.0 - alpha_hat)
}

/// Self-similar limit `Ẑ`: each jump `γ̂` of the limit subordinator, in
/// location order, is held for `γ̂ · Exp(1)` with value `γ̂`.
pub fn simulate_zhat_path(
    alpha_hat: f64,
    c_hat: f64,
    horizon: f64,
    max_jumps: usize,
    seed: u64,
) -> Result<StepPath> {
    Ok(simulate_zhat(alpha_hat, c_hat, horizon, max_jumps, seed)?.path)
}

/// As [`simulate_zhat_path`], keeping the clock and truncation details.
///
/// The first window `[0, 1]` keeps the `max_jumps` largest jumps; their
/// smallest size becomes the threshold. While the clock has not passed
/// `horizon` the window doubles, and the new half receives an independent
/// Poisson sample of all jumps above the threshold, so the retained set is
/// always the jumps above a fixed size on a growing window.
pub fn simulate_zhat(
    alpha_hat: f64,
    c_hat: f64,
    horizon: f64,
    max_jumps: usize,
    seed: u64,
) -> Result<ZhatSample> {
    if alpha_hat <= 0.0 {
        return Err(Error::Degenerate(format!(
            "alpha_hat = {alpha_hat} <= 0 arises when a >= alpha; the limit process does not exist"
        )));
    }
    crate::error::check_unit_open("alpha_hat", alpha_hat)?;
    check_positive("c_hat", c_hat)?;
    check_positive("horizon", horizon)?;
    if max_jumps == 0 {
        return Err(Error::param("max_jumps", "must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let scale = zhat_scale(alpha_hat, c_hat);
    let field = sample_stable_jumps_with(alpha_hat, 1.0, max_jumps, scale, &mut rng)?;
    let threshold = *field
        .sizes()
        .last()
        .ok_or(Error::Empty("limit jump field"))?;
    let mut batch: Vec<(f64, f64)> = field
        .locations()
        .iter()
        .copied()
        .zip(field.sizes().iter().copied())
        .collect();

    let mut window = 1.0;
    let mut clock = ClockRecord::default();
    let mut builder: Option<PathBuilder> = None;
    let mut physical = 0.0;
    let mut site = 0usize;
    let mut doublings = 0;
    loop {
        batch.sort_by(|x, y| x.0.total_cmp(&y.0));
        for &(location, size) in &batch {
            match builder.as_mut() {
                None => builder = Some(PathBuilder::new(site, size)),
                Some(b) => b.enter(physical, site, size),
            }
            site += 1;
            physical += size * exp1(&mut rng);
            clock.push(location, physical);
            if physical > horizon {
                let path = builder.expect("at least one sojourn").finish(horizon);
                return Ok(ZhatSample {
                    path,
                    clock,
                    window,
                    threshold,
                });
            }
        }
        if doublings == MAX_WINDOW_DOUBLINGS {
            return Err(Error::Degenerate(format!(
                "clock reached only {physical} < horizon {horizon} after {doublings} window doublings"
            )));
        }
        batch = jumps_above_with(alpha_hat, window, window, threshold, scale, &mut rng);
        window *= 2.0;
        doublings += 1;
    }
}

/// `Z^{(n)}_t = c_n^{1-a} Z_n(t / c_n^{1-a})`.
pub fn rescale_trap_path(path: &StepPath, c_n: f64, a: f64) -> Result<StepPath> {
    let k = c_n.powf(1.0 - a);
    path.rescale(k, 1.0 / k)
}

/// `Z^{(ε)}_t = ε^{-1} Z_{εt}`.
pub fn rescale_small_time(path: &StepPath, epsilon: f64) -> Result<StepPath> {
    check_positive("epsilon", epsilon)?;
    path.rescale(1.0 / epsilon, epsilon)
}

/// Unscaled horizon needed for a rescaled finite-n path to cover `[0, horizon]`.
pub fn trap_horizon_for(rescaled_horizon: f64, c_n: f64, a: f64) -> f64 {
    rescaled_horizon / c_n.powf(1.0 - a)
}
