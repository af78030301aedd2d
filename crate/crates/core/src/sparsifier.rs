//! Learning the AND/OR split of a value table and diagnosing the result.
//!
//! The raw table is baseline-shifted to `u(x_T) = v(x_T) - v(x_∅)` and split as
//! `v_and = 0.5 (u - ε) + θ`, `v_or = 0.5 (u - ε) - θ` with `θ_∅ = ε_∅ = 0`.
//! Both effect vectors are affine in `θ`, so `‖I_and‖₁ + ‖I_or‖₁` is convex and
//! piecewise linear. It is minimized by ADMM in AND coordinates, followed by
//! an exact support refinement that snaps to a vertex of the objective when
//! one is nearby.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, subset_mobius_in_place, Family, InteractionVector, Mask, ValueTable};
use crate::{linalg, splitting};

/// Learned split offsets `θ_T`, with `θ_∅ = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    n: usize,
    theta: Vec<f64>,
}

impl ThetaVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        let n = lattice::variables_for_len(theta.len())?;
        if theta[0] != 0.0 {
            return Err(Error::NonzeroEmptyEntry(theta[0]));
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                mask: i as u32,
                value: theta[i],
            });
        }
        Ok(Self { n, theta })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            theta: vec![0.0; lattice::table_len(n)?],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.theta
    }
}

/// Learned noise offsets `ε_T`, bounded by `|ε_T| <= bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseVector {
    n: usize,
    epsilon: Vec<f64>,
    bound: f64,
}

impl NoiseVector {
    pub fn new(epsilon: Vec<f64>, bound: f64) -> Result<Self> {
        let n = lattice::variables_for_len(epsilon.len())?;
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::Config(format!(
                "noise bound must be >= 0, got {bound}"
            )));
        }
        if let Some(i) = epsilon.iter().position(|e| !(e.abs() <= bound)) {
            return Err(Error::Config(format!(
                "noise entry {} at mask {i:#b} exceeds bound {bound}",
                epsilon[i]
            )));
        }
        Ok(Self { n, epsilon, bound })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.epsilon
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// The AND and OR component tables produced by one split.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSplit {
    pub and_table: Vec<f64>,
    pub or_table: Vec<f64>,
    pub theta: ThetaVector,
    pub epsilon: Option<NoiseVector>,
}

impl ComponentSplit {
    pub fn and_effects(&self) -> Result<InteractionVector> {
        lattice::mobius_and(&self.and_table)
    }

    pub fn or_effects(&self) -> Result<InteractionVector> {
        lattice::mobius_or(&self.or_table)
    }
}

/// Splits `u = raw - raw.baseline` into AND and OR components.
pub fn split_components(
    raw: &ValueTable,
    theta: &ThetaVector,
    noise: Option<&NoiseVector>,
) -> Result<ComponentSplit> {
    if theta.n != raw.n() {
        return Err(Error::Shape(format!(
            "theta has n = {}, table has n = {}",
            theta.n,
            raw.n()
        )));
    }
    if let Some(eps) = noise {
        if eps.n != raw.n() {
            return Err(Error::Shape(format!(
                "noise has n = {}, table has n = {}",
                eps.n,
                raw.n()
            )));
        }
    }
    let u = raw.shifted();
    let half: Vec<f64> = match noise {
        Some(eps) => u
            .iter()
            .zip(&eps.epsilon)
            .map(|(u, e)| 0.5 * (u - e))
            .collect(),
        None => u.iter().map(|u| 0.5 * u).collect(),
    };
    let mut and_table: Vec<f64> = half.iter().zip(&theta.theta).map(|(h, t)| h + t).collect();
    let mut or_table: Vec<f64> = half.iter().zip(&theta.theta).map(|(h, t)| h - t).collect();
    // ε_∅ may be nonzero in a hand-built NoiseVector; the components must still vanish at ∅
    and_table[0] = 0.0;
    or_table[0] = 0.0;
    Ok(ComponentSplit {
        and_table,
        or_table,
        theta: theta.clone(),
        epsilon: noise.cloned(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsifyConfig {
    pub max_iters: usize,
    /// Initial shrinkage width per iteration, in units of the table's output
    /// range `max |u|`. The solver rebalances it as it runs.
    pub step_size: f64,
    /// Relative primal and dual residual below which the solver stops.
    pub convergence_tol: f64,
    pub noise_enabled: bool,
    /// Absolute cap on `|ε_T|`; `None` means `0.02 (max u - min u)`.
    pub noise_bound: Option<f64>,
    /// Seeds the random initial θ when `init_scale > 0`.
    pub seed: u64,
    /// Half-width of the uniform initial θ, relative to the output range.
    pub init_scale: f64,
    /// Snap to an exact sparse vertex after descent when one is consistent.
    pub refine_support: bool,
    /// Reweighted re-solves used to pick the sparsest of equally good splits.
    pub reweight_passes: usize,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            step_size: 0.01,
            convergence_tol: 1e-6,
            noise_enabled: false,
            noise_bound: None,
            seed: 0,
            init_scale: 0.0,
            refine_support: true,
            reweight_passes: 2,
        }
    }
}

impl SparsifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "step_size must be > 0, got {}",
                self.step_size
            )));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::Config(format!(
                "convergence_tol must be > 0, got {}",
                self.convergence_tol
            )));
        }
        if let Some(b) = self.noise_bound {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("noise_bound must be >= 0, got {b}")));
            }
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init_scale must be >= 0, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// Result of [`optimize_theta`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparsifyOutcome {
    pub theta: ThetaVector,
    pub noise: Option<NoiseVector>,
    /// Objective of the best split found so far: the starting point, then one
    /// entry per solver iteration, then the loss of the returned split when
    /// refinement or tie-breaking changed it. A sparser split may be preferred
    /// at a loss at most 1e-9 (relative) above the best one.
    pub loss_history: Vec<f64>,
    pub refined: bool,
}

impl SparsifyOutcome {
    pub fn split(&self, raw: &ValueTable) -> Result<ComponentSplit> {
        split_components(raw, &self.theta, self.noise.as_ref())
    }

    /// AND and OR effects at the learned split.
    pub fn interactions(&self, raw: &ValueTable) -> Result<(InteractionVector, InteractionVector)> {
        let split = self.split(raw)?;
        Ok((split.and_effects()?, split.or_effects()?))
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap_or(&0.0)
    }

    /// `iteration,loss` rows.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, l) in self.loss_history.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// Evaluates the objective at a given `(θ, ε)`.
struct Workspace {
    half_u: Vec<f64>,
    and_fx: Vec<f64>,
    or_fx: Vec<f64>,
}

impl Workspace {
    fn new(u: &[f64]) -> Self {
        Self {
            half_u: u.iter().map(|v| 0.5 * v).collect(),
            and_fx: vec![0.0; u.len()],
            or_fx: vec![0.0; u.len()],
        }
    }

    /// Fills the effect buffers for `(θ, ε)` and returns the L1 objective.
    fn evaluate(&mut self, theta: &[f64], eps: Option<&[f64]>) -> f64 {
        let len = theta.len();
        for t in 0..len {
            let h = match eps {
                Some(e) => self.half_u[t] - 0.5 * e[t],
                None => self.half_u[t],
            };
            self.and_fx[t] = h + theta[t];
            // or effects read the OR component through the complement reflection
            self.or_fx[(len - 1) ^ t] = h - theta[t];
        }
        self.and_fx[0] = 0.0;
        self.or_fx[len - 1] = 0.0;
        subset_mobius_in_place(&mut self.and_fx);
        subset_mobius_in_place(&mut self.or_fx);
        self.and_fx[0] = 0.0;
        self.or_fx[0] = 0.0;
        for v in self.or_fx.iter_mut() {
            *v = -*v;
        }
        l1(&self.and_fx) + l1(&self.or_fx)
    }
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Learns the split that minimizes `‖I_and‖₁ + ‖I_or‖₁`.
pub fn optimize_theta(raw: &ValueTable, config: &SparsifyConfig) -> Result<SparsifyOutcome> {
    config.validate()?;
    let u = raw.shifted();
    let len = u.len();
    let (u_min, u_max) = u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let unit = if scale > 0.0 { scale } else { 1.0 };
    let noise_bound = config
        .noise_bound
        .unwrap_or(0.02 * (u_max - u_min))
        .max(0.0);

    let theta0 = initial_theta(len, config, scale);
    let mut ws = Workspace::new(&u);
    let start_loss = ws.evaluate(&theta0, None);
    let init_or = ws.or_fx.clone();

    let mut settings = splitting::SolverSettings {
        max_iters: config.max_iters,
        tol: config.convergence_tol,
        rho: 1.0 / (config.step_size * unit),
        noise_bound: config.noise_enabled.then_some(noise_bound),
        weights: None,
    };
    let solved = splitting::solve(&u, init_or, &settings);
    if let Some((iteration, loss)) = solved.diverged_at {
        return Err(Error::Diverged { iteration, loss });
    }
    let mut epsilon = solved.epsilon;
    let mut best_theta = theta_from_or(&target_of(&u, epsilon.as_deref()), &solved.or_effects)?;
    let mut best_loss = ws.evaluate(&best_theta, epsilon.as_deref());
    let mut history = Vec::with_capacity(solved.history.len() + 2);
    history.push(start_loss);
    history.extend(solved.history.iter().map(|&l| l.min(start_loss)));
    if start_loss < best_loss {
        best_theta = theta0;
        best_loss = start_loss;
    }

    let mut refined = false;
    (best_theta, best_loss) = polish(
        best_theta,
        best_loss,
        &u,
        epsilon.as_deref(),
        config,
        &mut ws,
        &mut refined,
    );

    // Plain L1 has flat faces of minimizers (a pair's AND and OR effects can
    // trade against its two singletons at equal cost). Reweighted passes walk
    // toward the sparsest split on such a face without giving up loss.
    for _ in 0..config.reweight_passes {
        let current = ws.evaluate(&best_theta, epsilon.as_deref());
        let peak = ws
            .and_fx
            .iter()
            .chain(&ws.or_fx)
            .fold(0.0f64, |m, e| m.max(e.abs()));
        if peak == 0.0 || current == 0.0 {
            break;
        }
        let weigh = |x: &[f64]| -> Vec<f64> {
            x.iter()
                .map(|e| REWEIGHT_FLOOR / (e.abs() / peak + REWEIGHT_FLOOR))
                .collect()
        };
        let support_before = support_size(&ws, peak);
        settings.weights = Some((weigh(&ws.and_fx), weigh(&ws.or_fx)));
        let pass = splitting::solve(&u, ws.or_fx.clone(), &settings);
        if pass.diverged_at.is_some() {
            break;
        }
        let theta = theta_from_or(&target_of(&u, pass.epsilon.as_deref()), &pass.or_effects)?;
        let loss = ws.evaluate(&theta, pass.epsilon.as_deref());
        let mut pass_refined = false;
        let (theta, loss) = polish(
            theta,
            loss,
            &u,
            pass.epsilon.as_deref(),
            config,
            &mut ws,
            &mut pass_refined,
        );
        ws.evaluate(&theta, pass.epsilon.as_deref());
        let sparser = support_size(&ws, peak) < support_before;
        if loss <= best_loss || (sparser && loss <= best_loss * (1.0 + REWEIGHT_SLACK)) {
            best_theta = theta;
            best_loss = loss;
            epsilon = pass.epsilon;
            refined = pass_refined;
        } else {
            break;
        }
    }
    if history.last() != Some(&best_loss) {
        history.push(best_loss);
    }

    let noise = match epsilon {
        Some(e) => Some(NoiseVector::new(e, noise_bound)?),
        None => None,
    };
    Ok(SparsifyOutcome {
        theta: ThetaVector::new(best_theta)?,
        noise,
        loss_history: history,
        refined,
    })
}

const REWEIGHT_FLOOR: f64 = 0.01;
const REWEIGHT_SLACK: f64 = 1e-9;

fn target_of(u: &[f64], eps: Option<&[f64]>) -> Vec<f64> {
    match eps {
        Some(e) => u.iter().zip(e).map(|(u, e)| u - e).collect(),
        None => u.to_vec(),
    }
}

fn support_size(ws: &Workspace, peak: f64) -> usize {
    let cut = 1e-9 * peak;
    ws.and_fx
        .iter()
        .chain(&ws.or_fx)
        .filter(|e| e.abs() > cut)
        .count()
}

/// Support refinement (when enabled) followed by singleton merging.
fn polish(
    mut theta: Vec<f64>,
    mut loss: f64,
    u: &[f64],
    eps: Option<&[f64]>,
    config: &SparsifyConfig,
    ws: &mut Workspace,
    refined: &mut bool,
) -> (Vec<f64>, f64) {
    if config.refine_support && loss > 0.0 {
        ws.evaluate(&theta, eps);
        if let Some((t, l)) = refine_support(&target_of(u, eps), &ws.and_fx, &ws.or_fx, loss) {
            theta = t;
            loss = l;
            *refined = true;
        }
    }
    // merging never raises the loss in exact arithmetic; allow for rounding
    let (merged, merged_loss) = merge_singletons(theta.clone(), ws, eps);
    if merged_loss <= loss * (1.0 + 1e-12) {
        (merged, merged_loss)
    } else {
        (theta, loss)
    }
}

/// `θ = 0.5 target - v_or` for the OR component generated by `or_effects`.
fn theta_from_or(target: &[f64], or_effects: &[f64]) -> Result<Vec<f64>> {
    let mut effects = or_effects.to_vec();
    effects[0] = 0.0;
    let v_or = lattice::zeta_or(&InteractionVector::new(Family::Or, effects)?)?;
    let mut theta: Vec<f64> = target.iter().zip(&v_or).map(|(t, o)| 0.5 * t - o).collect();
    theta[0] = 0.0;
    Ok(theta)
}

/// An order-one OR effect and an order-one AND effect on the same variable are
/// the same function of the mask, so the objective cannot tell them apart.
/// Moves every OR singleton onto its AND twin, which never raises the loss and
/// keeps singleton effects comparable across prompts.
fn merge_singletons(
    mut theta: Vec<f64>,
    ws: &mut Workspace,
    eps: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    ws.evaluate(&theta, eps);
    let len = theta.len();
    let shifts: Vec<(usize, f64)> = (0..len.trailing_zeros() as usize)
        .map(|i| (1usize << i, ws.or_fx[1 << i]))
        .filter(|&(_, o)| o != 0.0)
        .collect();
    for (t, th) in theta.iter_mut().enumerate().skip(1) {
        for &(bit, o) in &shifts {
            if t & bit != 0 {
                *th += o;
            }
        }
    }
    let loss = ws.evaluate(&theta, eps);
    (theta, loss)
}

fn initial_theta(len: usize, config: &SparsifyConfig, scale: f64) -> Vec<f64> {
    let mut theta = vec![0.0; len];
    if config.init_scale > 0.0 {
        // splitmix64: a seeded, platform-independent uniform stream
        let mut state = config.seed;
        let width = config.init_scale * if scale > 0.0 { scale } else { 1.0 };
        for t in theta.iter_mut().skip(1) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            let unit = (z >> 11) as f64 / (1u64 << 53) as f64;
            *t = width * (2.0 * unit - 1.0);
        }
    }
    theta
}

const REFINE_MAX_SUPPORT: usize = 256;
const REFINE_THRESHOLDS: [f64; 4] = [1e-1, 3e-2, 1e-2, 1e-3];

/// Looks for a sparse exact representation of `target` on the support of the
/// larger current effects; returns `(θ, loss)` when it beats `current_loss`.
fn refine_support(
    target: &[f64],
    and_fx: &[f64],
    or_fx: &[f64],
    current_loss: f64,
) -> Option<(Vec<f64>, f64)> {
    let len = target.len();
    let max_abs = and_fx
        .iter()
        .chain(or_fx)
        .fold(0.0f64, |m, e| m.max(e.abs()));
    if max_abs == 0.0 {
        return None;
    }
    let range = target.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut last_size = usize::MAX;

    for rel in REFINE_THRESHOLDS {
        let tau = rel * max_abs;
        let mut support: Vec<(Family, usize)> = Vec::new();
        for s in 1..len {
            if and_fx[s].abs() > tau {
                support.push((Family::And, s));
            }
            if or_fx[s].abs() > tau {
                support.push((Family::Or, s));
            }
        }
        if support.len() == last_size {
            continue;
        }
        last_size = support.len();
        if support.len() > REFINE_MAX_SUPPORT || support.len() >= len {
            break;
        }
        let columns: Vec<Vec<f64>> = support
            .iter()
            .map(|&(family, s)| {
                (0..len)
                    .map(|t| {
                        let on = match family {
                            Family::And => s & !t == 0,
                            Family::Or => s & t != 0,
                        };
                        if on {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let coef = linalg::lstsq_pivoted(columns, target.to_vec(), 1e-10);

        let mut and_effects = vec![0.0; len];
        let mut or_effects = vec![0.0; len];
        for (&(family, s), c) in support.iter().zip(&coef) {
            match family {
                Family::And => and_effects[s] = *c,
                Family::Or => or_effects[s] = *c,
            }
        }
        let and_iv = InteractionVector::new(Family::And, and_effects).ok()?;
        let or_iv = InteractionVector::new(Family::Or, or_effects).ok()?;
        let v_and = lattice::zeta_and(&and_iv).ok()?;
        let v_or = lattice::zeta_or(&or_iv).ok()?;
        let residual = (0..len)
            .map(|t| (v_and[t] + v_or[t] - target[t]).abs())
            .fold(0.0, f64::max);
        if residual > 1e-9 * range {
            continue;
        }
        let loss = and_iv.l1_norm() + or_iv.l1_norm();
        if loss <= current_loss {
            // θ = v_and - 0.5 target; recompute the effects from θ so the
            // returned split is self-consistent
            let mut theta: Vec<f64> = (0..len).map(|t| v_and[t] - 0.5 * target[t]).collect();
            theta[0] = 0.0;
            let mut ws = Workspace::new(target);
            let exact = ws.evaluate(&theta, None);
            if exact <= current_loss {
                return Some((theta, exact));
            }
        }
    }
    None
}

/// How the salience threshold τ is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum TauPolicy {
    Absolute(f64),
    /// Fraction of the largest absolute effect over the vectors analysed together.
    Relative(f64),
}

impl Default for TauPolicy {
    fn default() -> Self {
        TauPolicy::Relative(0.05)
    }
}

impl TauPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TauPolicy::Absolute(t) if t >= 0.0 && t.is_finite() => Ok(()),
            TauPolicy::Relative(f) if f > 0.0 && f < 1.0 => Ok(()),
            other => Err(Error::Config(format!("invalid threshold policy {other:?}"))),
        }
    }

    /// Resolves τ against the given vectors (typically both families of one
    /// analysis).
    pub fn resolve(&self, vectors: &[&InteractionVector]) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            TauPolicy::Absolute(t) => t,
            TauPolicy::Relative(f) => f * vectors.iter().fold(0.0f64, |m, iv| m.max(iv.max_abs())),
        })
    }
}

/// `Ω = {S : |I(S)| > τ}` for one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SalientSet {
    pub family: Family,
    pub masks: Vec<u32>,
    pub tau: f64,
}

impl SalientSet {
    pub fn contains(&self, mask: u32) -> bool {
        self.masks.binary_search(&mask).is_ok()
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// Salient set of a single vector at an already resolved τ.
pub fn salient_at(iv: &InteractionVector, tau: f64) -> SalientSet {
    let masks = iv
        .effects()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.abs() > tau)
        .map(|(s, _)| s as u32)
        .collect();
    SalientSet {
        family: iv.family(),
        masks,
        tau,
    }
}

/// Salient set of one vector; a relative policy resolves against this vector alone.
pub fn extract_salient(iv: &InteractionVector, policy: TauPolicy) -> Result<SalientSet> {
    let tau = policy.resolve(&[iv])?;
    Ok(salient_at(iv, tau))
}

/// Salient sets of both families with one shared τ.
pub fn extract_salient_pair(
    and_iv: &InteractionVector,
    or_iv: &InteractionVector,
    policy: TauPolicy,
) -> Result<(SalientSet, SalientSet)> {
    let tau = policy.resolve(&[and_iv, or_iv])?;
    Ok((salient_at(and_iv, tau), salient_at(or_iv, tau)))
}

/// `(family, mask)` of every interaction ordered by decreasing strength; ties
/// keep AND before OR, then numeric mask order.
pub fn rank_interactions(
    and_iv: &InteractionVector,
    or_iv: &InteractionVector,
) -> Vec<(Family, u32, f64)> {
    let mut all: Vec<(Family, u32, f64)> = Vec::with_capacity(2 * and_iv.effects().len());
    for iv in [and_iv, or_iv] {
        for (s, &e) in iv.effects().iter().enumerate().skip(1) {
            all.push((iv.family(), s as u32, e));
        }
    }
    all.sort_by(|a, b| {
        b.2.abs()
            .total_cmp(&a.2.abs())
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    all
}

/// Matching error of the top-`k` surrogate on all masked samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingErrorCurve {
    pub k: usize,
    /// Masks sorted by ascending true output.
    pub masks: Vec<u32>,
    pub values: Vec<f64>,
    pub approx: Vec<f64>,
    pub errors: Vec<f64>,
    /// Mean error of consecutive windows of [`SMOOTHING_WINDOW`] samples.
    pub smoothed: Vec<f64>,
    pub mean_error: f64,
    pub max_error: f64,
}

pub const SMOOTHING_WINDOW: usize = 50;

pub fn matching_error_curve(
    and_iv: &InteractionVector,
    or_iv: &InteractionVector,
    raw: &ValueTable,
    k_list: &[usize],
) -> Result<Vec<MatchingErrorCurve>> {
    if and_iv.n() != raw.n() || or_iv.n() != raw.n() {
        return Err(Error::Shape(format!(
            "interaction vectors (n = {}, {}) do not match table n = {}",
            and_iv.n(),
            or_iv.n(),
            raw.n()
        )));
    }
    let ranked = rank_interactions(and_iv, or_iv);
    let mut order: Vec<usize> = (0..raw.values().len()).collect();
    order.sort_by(|&a, &b| raw.values()[a].total_cmp(&raw.values()[b]).then(a.cmp(&b)));

    let mut curves = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let k = k.min(ranked.len());
        let len = raw.values().len();
        let mut a = vec![0.0; len];
        let mut o = vec![0.0; len];
        for &(family, s, e) in &ranked[..k] {
            match family {
                Family::And => a[s as usize] = e,
                Family::Or => o[s as usize] = e,
            }
        }
        let approx_all = lattice::reconstruct_all(
            &InteractionVector::new(Family::And, a)?,
            &InteractionVector::new(Family::Or, o)?,
            raw.baseline(),
        )?;
        let values: Vec<f64> = order.iter().map(|&t| raw.values()[t]).collect();
        let approx: Vec<f64> = order.iter().map(|&t| approx_all[t]).collect();
        let errors: Vec<f64> = values
            .iter()
            .zip(&approx)
            .map(|(v, a)| (v - a).abs())
            .collect();
        let smoothed = errors
            .chunks(SMOOTHING_WINDOW)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect();
        let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
        let max_error = errors.iter().cloned().fold(0.0, f64::max);
        curves.push(MatchingErrorCurve {
            k,
            masks: order.iter().map(|&t| t as u32).collect(),
            values,
            approx,
            errors,
            smoothed,
            mean_error,
            max_error,
        });
    }
    Ok(curves)
}

/// Advisory check of the smoothness conditions under which sparse
/// interactions are expected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub n: usize,
    /// `ū(m)`: mean of `u(x_S)` over `|S| = n - m`, for `m = 0..=n` masked variables.
    pub mean_by_masked: Vec<f64>,
    pub monotone: bool,
    /// Exponent `p` of the fit `ū ≈ c k^p` in the unmasked count `k`.
    pub exponent: Option<f64>,
    pub degenerate: bool,
}

pub fn smoothness_check(raw: &ValueTable) -> SmoothnessReport {
    let n = raw.n();
    let u = raw.shifted();
    let mut sums = vec![0.0; n + 1];
    let mut counts = vec![0usize; n + 1];
    for (s, v) in u.iter().enumerate() {
        let kept = (s as u32).count_ones() as usize;
        sums[n - kept] += v;
        counts[n - kept] += 1;
    }
    let mean_by_masked: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let slack = 1e-12 * mean_by_masked.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let monotone = mean_by_masked.windows(2).all(|w| w[1] <= w[0] + slack);

    // log ū against log k over k = n - m >= 1 with ū > 0
    let points: Vec<(f64, f64)> = (1..=n)
        .filter_map(|k| {
            let v = mean_by_masked[n - k];
            (v > 0.0).then(|| ((k as f64).ln(), v.ln()))
        })
        .collect();
    let exponent = if points.len() >= 2 {
        least_squares_slope(&points)
    } else {
        None
    };
    let degenerate = match exponent {
        None => true,
        Some(p) => p.abs() < 1e-9,
    };
    SmoothnessReport {
        n,
        mean_by_masked,
        monotone,
        exponent,
        degenerate,
    }
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Salient-count summary for one extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub n: usize,
    pub tau: f64,
    pub salient_count: usize,
    pub fitted_kappa: Option<f64>,
    /// `|I(S)|` over both families in non-increasing order.
    pub sorted_strengths: Vec<f64>,
}

impl SparsityReport {
    pub fn new(
        and_iv: &InteractionVector,
        or_iv: &InteractionVector,
        policy: TauPolicy,
    ) -> Result<Self> {
        let (sa, so) = extract_salient_pair(and_iv, or_iv, policy)?;
        let sorted_strengths = rank_interactions(and_iv, or_iv)
            .into_iter()
            .map(|(_, _, e)| e.abs())
            .collect();
        Ok(Self {
            n: and_iv.n(),
            tau: sa.tau,
            salient_count: sa.len() + so.len(),
            fitted_kappa: None,
            sorted_strengths,
        })
    }

    /// Share of the total strength carried by the `k` strongest interactions.
    pub fn top_share(&self, k: usize) -> f64 {
        let total: f64 = self.sorted_strengths.iter().sum();
        if total == 0.0 {
            return 1.0;
        }
        self.sorted_strengths.iter().take(k).sum::<f64>() / total
    }
}

/// κ from a least-squares fit of `log Γ` against `log n`; `None` with fewer
/// than two distinct `n` or any zero count.
pub fn fit_kappa(reports: &[SparsityReport]) -> Option<f64> {
    if reports.iter().any(|r| r.salient_count == 0) {
        return None;
    }
    let points: Vec<(f64, f64)> = reports
        .iter()
        .map(|r| ((r.n as f64).ln(), (r.salient_count as f64).ln()))
        .collect();
    least_squares_slope(&points)
}

/// Fits κ across a sweep and stores it on every report.
pub fn attach_kappa(reports: &mut [SparsityReport]) -> Option<f64> {
    let kappa = fit_kappa(reports);
    for r in reports.iter_mut() {
        r.fitted_kappa = kappa;
    }
    kappa
}

/// Convenience: mask handle for a raw index of an `n`-variable table.
pub fn mask_of(n: usize, index: u32) -> Result<Mask> {
    Mask::new(index, n)
}
