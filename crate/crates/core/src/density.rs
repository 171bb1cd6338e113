//! Density evolution over message dimensions.
//!
//! On the erasure channel every decoder message is uniform over a subspace,
//! and after a random label is applied all subspaces of one dimension are
//! equally likely. The state of the recursion is therefore the law of the
//! message dimension, an `(m + 1)`-vector, and the node updates become
//! repeated applications of the sum and intersection kernels.

use std::fmt;

use crate::ensemble::{DegreeDistribution, EnsembleSpec, LabelKind};
use crate::error::{Error, Result};
use crate::kernels::KernelTable;

/// Probability law of a message dimension, `p[k] = P(dim = k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionDistribution {
    p: Vec<f64>,
}

impl DimensionDistribution {
    /// Wraps a probability vector of length `m + 1`.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::InvalidEnsemble(
                "dimension distribution needs m + 1 >= 2 entries".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if p.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidEnsemble(format!(
                "not a probability vector (sum {total})"
            )));
        }
        Ok(Self { p })
    }

    /// Point mass on dimension `k`.
    pub fn delta(m: usize, k: usize) -> Self {
        assert!(k <= m);
        let mut p = vec![0.0; m + 1];
        p[k] = 1.0;
        Self { p }
    }

    pub fn m(&self) -> usize {
        self.p.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn expected_dim(&self) -> f64 {
        self.p.iter().enumerate().map(|(k, &x)| k as f64 * x).sum()
    }

    pub fn prob_nonzero(&self) -> f64 {
        self.p[1..].iter().sum()
    }

    fn l1_distance(&self, other: &Self) -> f64 {
        self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl fmt::Display for DimensionDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, x) in self.p.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x:.6}")?;
        }
        write!(f, ")")
    }
}

/// Stopping rules for [`evolve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeOptions {
    pub max_iters: usize,
    /// Expected dimension below which the recursion counts as converged.
    pub success_threshold: f64,
    /// L1 change between successive states below which the recursion stops.
    pub stall_tolerance: f64,
    /// Expected dimension below which a decreasing trajectory is inside the
    /// attraction basin of the zero-dimension point mass, provided that
    /// point is linearly stable. Only consulted when the run ends without
    /// reaching `success_threshold`.
    pub linear_regime: f64,
}

impl Default for DeOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            success_threshold: 1e-8,
            stall_tolerance: 1e-12,
            linear_regime: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeOutcome {
    /// Expected dimension fell below the success threshold.
    Converged,
    /// Ended inside the linear regime of a stable zero fixed point; the
    /// remaining decay is geometric or slower but certain.
    ConvergedLinear,
    /// Successive states stopped changing away from zero.
    Stalled,
    MaxIterations,
}

impl DeOutcome {
    pub fn is_success(self) -> bool {
        matches!(self, DeOutcome::Converged | DeOutcome::ConvergedLinear)
    }
}

/// Every variable-to-check state `P_v^(l)`, `l = 1, 2, ...`, of one run.
#[derive(Clone, Debug)]
pub struct DeTrace {
    pub epsilon: f64,
    pub states: Vec<DimensionDistribution>,
    /// Check-to-variable law produced from the last state.
    pub final_check: DimensionDistribution,
    pub outcome: DeOutcome,
    /// Spectral radius of the linearised recursion at the zero fixed point.
    pub linear_gain: f64,
}

impl DeTrace {
    pub fn iterations(&self) -> usize {
        self.states.len()
    }

    pub fn last(&self) -> &DimensionDistribution {
        self.states.last().expect("trace is never empty")
    }

    pub fn expected_dims(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.expected_dim()).collect()
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if (0.0..=1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::EpsilonOutOfRange(epsilon))
    }
}

/// Dimension law of the channel message when each of `m` bits is erased with
/// probability `epsilon`: Binomial(m, epsilon).
pub fn channel_distribution(m: usize, epsilon: f64) -> Result<DimensionDistribution> {
    check_epsilon(epsilon)?;
    let mut p = vec![0.0; m + 1];
    let mut binom = 1.0f64;
    for (i, slot) in p.iter_mut().enumerate() {
        *slot = binom * epsilon.powi(i as i32) * (1.0 - epsilon).powi((m - i) as i32);
        binom = binom * (m - i) as f64 / (i + 1) as f64;
    }
    Ok(DimensionDistribution { p })
}

fn step(acc: &[f64], transition: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; acc.len()];
    for (a, row) in acc.iter().zip(transition) {
        if *a == 0.0 {
            continue;
        }
        for (o, t) in out.iter_mut().zip(row) {
            *o += a * t;
        }
    }
    out
}

/// Folds `transition` onto `start` `d - offset` times for each degree `d`
/// and averages with the degree weights.
fn fold_average(
    start: &[f64],
    transition: &[Vec<f64>],
    weights: impl Iterator<Item = (usize, f64)>,
    offset: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; start.len()];
    let mut acc = start.to_vec();
    let mut folds = 0usize;
    for (d, w) in weights {
        while folds + offset < d {
            acc = step(&acc, transition);
            folds += 1;
        }
        for (o, a) in out.iter_mut().zip(&acc) {
            *o += w * a;
        }
    }
    // Off the simplex the update is not norm preserving (a total of 1 + δ
    // comes back as (1 + δ)^(d-1)), so rounding error must not accumulate.
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}

/// Check-node half iteration: a degree-`r` check emits the sum of `r - 1`
/// independent incoming subspaces.
pub fn check_update(
    table: &KernelTable,
    p_v: &DimensionDistribution,
    rho: &DegreeDistribution,
) -> DimensionDistribution {
    let t = table.sum_with(&p_v.p);
    DimensionDistribution {
        p: fold_average(&p_v.p, &t, rho.iter(), 2),
    }
}

/// Variable-node half iteration: a degree-`d` variable emits the
/// intersection of its channel subspace with `d - 1` incoming subspaces.
pub fn var_update(
    table: &KernelTable,
    p_c: &DimensionDistribution,
    lambda: &DegreeDistribution,
    epsilon: f64,
) -> Result<DimensionDistribution> {
    let channel = channel_distribution(table.m(), epsilon)?;
    let t = table.intersect_with(&p_c.p);
    Ok(DimensionDistribution {
        p: fold_average(&channel.p, &t, lambda.iter(), 1),
    })
}

fn ensure_supported(e: &EnsembleSpec) -> Result<()> {
    match e.labels {
        LabelKind::FiniteField { .. } if e.m > 3 => Err(Error::Unsupported(format!(
            "dimension density evolution does not describe finite-field labels for m = {} > 3",
            e.m
        ))),
        _ => Ok(()),
    }
}

/// Spectral radius of the recursion linearised at the zero-dimension point.
///
/// To first order only degree-2 variables and a single nonzero check input
/// contribute, so the Jacobian on dimensions `1..=m` is
/// `λ'(0) ρ'(1) Σ_i P_ch(i) K_var(k | i, j)`. Intersection never raises
/// the dimension, so the matrix is upper triangular and its spectral radius
/// is its largest diagonal entry.
pub fn linear_gain(e: &EnsembleSpec, epsilon: f64) -> Result<f64> {
    let table = KernelTable::cached(e.m);
    let channel = channel_distribution(e.m, epsilon)?;
    let scale = e.lambda_prime_zero() * e.rho_prime_one();
    let mut radius = 0.0f64;
    for j in 1..=e.m {
        for k in 1..=e.m {
            let entry: f64 = channel
                .p
                .iter()
                .enumerate()
                .map(|(i, &pi)| pi * table.intersect(i, j)[k])
                .sum::<f64>()
                * scale;
            if k > j {
                debug_assert_eq!(entry, 0.0);
            } else if k == j {
                radius = radius.max(entry.abs());
            }
        }
    }
    Ok(radius)
}

/// Runs the recursion from `P_v^(1)` = channel law until it converges to the
/// zero point mass, stalls, or hits `max_iters`.
///
/// Convergence to zero is only accepted while the zero fixed point is
/// linearly stable (`linear_gain < 1`); above that, small-but-positive fixed
/// points are reported as stalls rather than as successes.
pub fn evolve(e: &EnsembleSpec, epsilon: f64, opts: &DeOptions) -> Result<DeTrace> {
    ensure_supported(e)?;
    check_epsilon(epsilon)?;
    let table = KernelTable::cached(e.m);
    let gain = linear_gain(e, epsilon)?;
    let stable = gain < 1.0;

    let mut p_v = channel_distribution(e.m, epsilon)?;
    let mut states = vec![p_v.clone()];
    let mut prev_expected = f64::INFINITY;
    let reached = |ed: f64| ed == 0.0 || (stable && ed < opts.success_threshold);

    let mut outcome = loop {
        let ed = p_v.expected_dim();
        if reached(ed) {
            break DeOutcome::Converged;
        }
        if states.len() >= opts.max_iters {
            break DeOutcome::MaxIterations;
        }
        let p_c = check_update(&table, &p_v, &e.rho);
        let next = var_update(&table, &p_c, &e.lambda, epsilon)?;
        let change = next.l1_distance(&p_v);
        prev_expected = ed;
        p_v = next;
        states.push(p_v.clone());
        if change < opts.stall_tolerance && !reached(p_v.expected_dim()) {
            break DeOutcome::Stalled;
        }
    };

    if !outcome.is_success() {
        let ed = p_v.expected_dim();
        if stable && ed < opts.linear_regime && ed < prev_expected {
            outcome = DeOutcome::ConvergedLinear;
        }
    }
    let final_check = check_update(&table, &p_v, &e.rho);
    Ok(DeTrace {
        epsilon,
        states,
        final_check,
        outcome,
        linear_gain: gain,
    })
}

/// Supremum of erasure probabilities for which [`evolve`] succeeds, by
/// bisection on `[0, 1]`.
pub fn bp_threshold(e: &EnsembleSpec, opts: &DeOptions) -> Result<f64> {
    const STEPS: usize = 40;
    ensure_supported(e)?;
    if evolve(e, 1.0, opts)?.outcome.is_success() {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..STEPS {
        let mid = 0.5 * (lo + hi);
        if evolve(e, mid, opts)?.outcome.is_success() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Left-hand side of the stability condition,
/// `λ'(0) ρ'(1) ((1 + B)^m - 1) / (2^m - 1)`.
pub fn stability_gain(e: &EnsembleSpec, battacharyya: f64) -> f64 {
    let m = e.m as i32;
    e.lambda_prime_zero() * e.rho_prime_one() * ((1.0 + battacharyya).powi(m) - 1.0)
        / (2f64.powi(m) - 1.0)
}

/// Whether the zero-error fixed point is unstable for a channel with
/// Battacharyya constant `battacharyya`.
pub fn stability_unstable(e: &EnsembleSpec, battacharyya: f64) -> bool {
    stability_gain(e, battacharyya) > 1.0
}

/// Erasure probability at which the stability condition binds, with the
/// erasure channel's Battacharyya constant `B = ε`. Returns 1 when the
/// condition never binds on `[0, 1]`.
pub fn stability_bound(e: &EnsembleSpec) -> f64 {
    if stability_gain(e, 1.0) <= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if stability_gain(e, mid) > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Law of the extrinsic degrees of freedom of a random symbol at the fixed
/// point reached from `epsilon`: a degree-`d` symbol (node perspective)
/// intersects `d` independent check messages, starting from the full space.
pub fn extrinsic_fixed_point(
    e: &EnsembleSpec,
    epsilon: f64,
    opts: &DeOptions,
) -> Result<DimensionDistribution> {
    let trace = evolve(e, epsilon, opts)?;
    if trace.outcome.is_success() {
        return Ok(DimensionDistribution::delta(e.m, 0));
    }
    let table = KernelTable::cached(e.m);
    let t = table.intersect_with(&trace.final_check.p);
    let start = DimensionDistribution::delta(e.m, e.m);
    let nodes = e.node_perspective();
    Ok(DimensionDistribution {
        p: fold_average(&start.p, &t, nodes.into_iter(), 0),
    })
}

/// Law of a random symbol's full decision (channel message intersected with
/// all incoming check messages) at the fixed point reached from `epsilon`.
/// `prob_nonzero` of the result is the predicted symbol-erasure rate.
pub fn decision_distribution(
    e: &EnsembleSpec,
    epsilon: f64,
    opts: &DeOptions,
) -> Result<DimensionDistribution> {
    let ext = extrinsic_fixed_point(e, epsilon, opts)?;
    let table = KernelTable::cached(e.m);
    let t = table.intersect_with(channel_distribution(e.m, epsilon)?.probs());
    let mut p = vec![0.0; e.m + 1];
    for (row, &w) in t.iter().zip(ext.probs()) {
        for (acc, &x) in p.iter_mut().zip(row) {
            *acc += w * x;
        }
    }
    Ok(DimensionDistribution { p })
}
