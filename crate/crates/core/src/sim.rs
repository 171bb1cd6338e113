//! Finite-length simulation: configuration-model Tanner graphs, BEC
//! transmission of the all-zero codeword, and two flooding BP decoders.
//!
//! Messages on an edge live in two coordinate systems. A check-to-variable
//! message is a set of candidate values for the variable symbol `x`; a
//! variable-to-check message is a set of candidates for `W x`, where `W` is the
//! edge label. The check constraint is `Σ W_e x_e = 0`.
//!
//! [`SubspaceDecoder`] keeps each message as a subspace. [`ProbVecDecoder`]
//! keeps full probability vectors of length `2^m` and does the check-node
//! convolution with Walsh–Hadamard transforms; it needs `2^m` floats per
//! edge and direction, so it is meant for small `m` and short codes.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensemble::{DegreeDistribution, EnsembleSpec, LabelKind};
use crate::gf2::{self, BitMatrix, SubspaceBasis};
use crate::{fmt6, Error, Result};

/// Residual symbol-erasure fraction above which a trial counts as a failure.
pub const FAILURE_FRACTION: f64 = 0.01;

/// Entries below this are treated as zero by the probability-vector decoder.
const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub var: usize,
    pub chk: usize,
}

/// Bipartite graph with one invertible `m × m` label per edge.
#[derive(Clone, Debug)]
pub struct TannerGraph {
    m: usize,
    n_chk: usize,
    edges: Vec<Edge>,
    labels: Vec<BitMatrix>,
    inverse_labels: Vec<BitMatrix>,
    var_edges: Vec<Vec<usize>>,
    chk_edges: Vec<Vec<usize>>,
}

impl TannerGraph {
    /// Graph from an explicit edge list, all labels set to the identity.
    pub fn from_edges(m: usize, n_var: usize, n_chk: usize, edges: Vec<Edge>) -> Result<Self> {
        if m == 0 || m > gf2::MAX_DIM {
            return Err(Error::BadShape { rows: m, cols: m });
        }
        let mut var_edges = vec![Vec::new(); n_var];
        let mut chk_edges = vec![Vec::new(); n_chk];
        for (i, e) in edges.iter().enumerate() {
            if e.var >= n_var || e.chk >= n_chk {
                return Err(Error::InvalidEnsemble(format!(
                    "edge {i} ({}, {}) outside {n_var} variables and {n_chk} checks",
                    e.var, e.chk
                )));
            }
            var_edges[e.var].push(i);
            chk_edges[e.chk].push(i);
        }
        let id = BitMatrix::identity(m);
        Ok(Self {
            m,
            n_chk,
            labels: vec![id.clone(); edges.len()],
            inverse_labels: vec![id; edges.len()],
            edges,
            var_edges,
            chk_edges,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_var(&self) -> usize {
        self.var_edges.len()
    }

    pub fn n_chk(&self) -> usize {
        self.n_chk
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn label(&self, edge: usize) -> &BitMatrix {
        &self.labels[edge]
    }

    pub fn var_edges(&self, v: usize) -> &[usize] {
        &self.var_edges[v]
    }

    pub fn chk_edges(&self, c: usize) -> &[usize] {
        &self.chk_edges[c]
    }

    /// Replaces the label of `edge`; fails if the matrix is not invertible.
    pub fn set_label(&mut self, edge: usize, label: BitMatrix) -> Result<()> {
        if label.n_rows() != self.m || label.n_cols() != self.m {
            return Err(Error::DimensionMismatch {
                left: self.m,
                right: label.n_cols(),
            });
        }
        let inv = label
            .inverse()
            .ok_or_else(|| Error::InvalidEnsemble(format!("label on edge {edge} is singular")))?;
        self.labels[edge] = label;
        self.inverse_labels[edge] = inv;
        Ok(())
    }

    /// Degree histogram `degree -> node count` of the variable side.
    pub fn var_degree_counts(&self) -> BTreeMap<usize, usize> {
        degree_counts(&self.var_edges)
    }

    pub fn chk_degree_counts(&self) -> BTreeMap<usize, usize> {
        degree_counts(&self.chk_edges)
    }
}

fn degree_counts(adj: &[Vec<usize>]) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for a in adj {
        *out.entry(a.len()).or_insert(0) += 1;
    }
    out
}

/// Splits `total` nodes over degrees by largest remainder.
fn apportion(fractions: &BTreeMap<usize, f64>, total: usize) -> Vec<(usize, usize)> {
    let quotas: Vec<(usize, f64)> = fractions.iter().map(|(&d, &f)| (d, f * total as f64)).collect();
    let mut counts: Vec<(usize, usize)> = quotas.iter().map(|&(d, q)| (d, q.floor() as usize)).collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    // Largest fractional part first; ties go to the smaller degree.
    order.sort_by(|&a, &b| {
        let fa = quotas[a].1 - quotas[a].1.floor();
        let fb = quotas[b].1 - quotas[b].1.floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i].1 += 1;
    }
    counts
}

fn expand_degrees(counts: &[(usize, usize)]) -> Vec<usize> {
    counts
        .iter()
        .flat_map(|&(d, c)| std::iter::repeat_n(d, c))
        .collect()
}

/// Degree sequences for `n` variables. The check count is the nearest integer
/// to `|E| ∫ρ`; any socket surplus or deficit is absorbed one socket at a time
/// by the checks, starting from the last (highest-degree) one, never going
/// below degree 2.
fn degree_sequences(n: usize, lambda: &DegreeDistribution, rho: &DegreeDistribution) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Unbalanceable("no variable nodes".into()));
    }
    let var_deg = expand_degrees(&apportion(&lambda.node_perspective(), n));
    let n_edges: usize = var_deg.iter().sum();
    let n_chk = ((n_edges as f64 * rho.integral()).round() as usize).max(1);
    let mut chk_deg = expand_degrees(&apportion(&rho.node_perspective(), n_chk));
    if n_edges < 2 * n_chk {
        return Err(Error::Unbalanceable(format!(
            "{n_edges} edges cannot give {n_chk} checks degree at least 2"
        )));
    }
    let mut diff = n_edges as i64 - chk_deg.iter().sum::<usize>() as i64;
    let mut idx = n_chk - 1;
    while diff != 0 {
        if diff > 0 {
            chk_deg[idx] += 1;
            diff -= 1;
        } else if chk_deg[idx] > 2 {
            chk_deg[idx] -= 1;
            diff += 1;
        }
        idx = if idx == 0 { n_chk - 1 } else { idx - 1 };
    }
    Ok((var_deg, chk_deg))
}

/// Configuration-model graph with `n` variable nodes: degree counts follow the
/// node-perspective distributions and sockets are matched by a uniform random
/// permutation. Multi-edges are kept. Labels start as the identity.
pub fn sample_graph<R: Rng + ?Sized>(n: usize, e: &EnsembleSpec, rng: &mut R) -> Result<TannerGraph> {
    let (var_deg, chk_deg) = degree_sequences(n, &e.lambda, &e.rho)?;
    let var_sockets: Vec<usize> = var_deg
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat_n(v, d))
        .collect();
    let mut chk_sockets: Vec<usize> = chk_deg
        .iter()
        .enumerate()
        .flat_map(|(c, &d)| std::iter::repeat_n(c, d))
        .collect();
    chk_sockets.shuffle(rng);
    let edges = var_sockets
        .into_iter()
        .zip(chk_sockets)
        .map(|(var, chk)| Edge { var, chk })
        .collect();
    TannerGraph::from_edges(e.m, n, chk_deg.len(), edges)
}

/// Draws one label: uniform over the invertible matrices, or multiplication
/// by a uniform nonzero field element.
pub fn sample_label<R: Rng + ?Sized>(m: usize, labels: &LabelKind, rng: &mut R) -> Result<BitMatrix> {
    match *labels {
        LabelKind::GeneralLinear => Ok(gf2::random_invertible(m, rng)),
        LabelKind::FiniteField { poly } => {
            let elem = rng.random_range(1..(1u64 << m));
            gf2::field_multiplication_matrix(m, poly, elem)
        }
    }
}

/// Replaces every label of `g` with an independent draw for the ensemble.
pub fn sample_labels<R: Rng + ?Sized>(mut g: TannerGraph, e: &EnsembleSpec, rng: &mut R) -> Result<TannerGraph> {
    if g.m != e.m {
        return Err(Error::DimensionMismatch {
            left: g.m,
            right: e.m,
        });
    }
    for edge in 0..g.n_edges() {
        let w = sample_label(e.m, &e.labels, rng)?;
        g.set_label(edge, w)?;
    }
    Ok(g)
}

/// Graph plus labels in one call.
pub fn sample_code<R: Rng + ?Sized>(n: usize, e: &EnsembleSpec, rng: &mut R) -> Result<TannerGraph> {
    let g = sample_graph(n, e, rng)?;
    sample_labels(g, e, rng)
}

/// Channel messages after sending the all-zero codeword: each symbol's message
/// is the span of its erased coordinates.
pub fn transmit_bec<R: Rng + ?Sized>(n: usize, m: usize, epsilon: f64, rng: &mut R) -> Result<Vec<SubspaceBasis>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    Ok((0..n)
        .map(|_| {
            let mut mask = 0u64;
            for c in 0..m {
                if rng.random::<f64>() < epsilon {
                    mask |= 1 << c;
                }
            }
            SubspaceBasis::coordinate(m, mask)
        })
        .collect())
}

/// Unnormalised Walsh–Hadamard transform, `φ(α) = Σ_β ψ(β) (-1)^{α·β}`.
pub fn wht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    wht_in_place(&mut out)?;
    Ok(out)
}

pub fn wht_in_place(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Uniform distribution on the elements of `v`, indexed by packed vector.
pub fn uniform_on(v: &SubspaceBasis) -> Vec<f64> {
    let mut out = vec![0.0; 1 << v.ambient_dim()];
    let elems = v.elements();
    let p = 1.0 / elems.len() as f64;
    for x in elems {
        out[x as usize] = p;
    }
    out
}

/// Checks that `psi` is uniform on a subspace `V` and that its transform is the
/// indicator of `V⊥`; returns `V`.
pub fn erasure_message_support(psi: &[f64], tol: f64) -> std::result::Result<SubspaceBasis, String> {
    let n = psi.len();
    if !n.is_power_of_two() || n < 2 {
        return Err(format!("length {n} is not a power of two above 1"));
    }
    let m = n.trailing_zeros() as usize;
    let support: Vec<u64> = (0..n as u64).filter(|&a| psi[a as usize] > tol).collect();
    let Some(&first) = support.first() else {
        return Err("empty support".into());
    };
    let level = psi[first as usize];
    if let Some(&bad) = support.iter().find(|&&a| (psi[a as usize] - level).abs() > tol) {
        return Err(format!("nonzero entries differ: psi[{first}] = {level}, psi[{bad}] = {}", psi[bad as usize]));
    }
    if psi.iter().any(|&x| x < -tol) {
        return Err("negative entry".into());
    }
    let v = SubspaceBasis::span(m, support.iter().copied());
    if (1usize << v.dim()) != support.len() || support[0] != 0 {
        return Err(format!("support of size {} is not a subspace", support.len()));
    }
    let phi = wht(psi).map_err(|e| e.to_string())?;
    let dual = v.orthogonal_complement();
    for (a, &f) in phi.iter().enumerate() {
        let want = if dual.contains(a as u64) { 1.0 } else { 0.0 };
        if (f - want).abs() > tol {
            return Err(format!("transform at {a} is {f}, expected {want}"));
        }
    }
    Ok(v)
}

/// For every index `i`, `seed` combined by `op` with all entries but `i`.
/// Small degrees fold directly; larger ones use a prefix/suffix scan.
fn leave_one_out<T: Clone>(items: &[&T], seed: &T, op: impl Fn(&T, &T) -> T) -> Vec<T> {
    let d = items.len();
    if d <= 4 {
        return (0..d)
            .map(|i| {
                items
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .fold(seed.clone(), |acc, (_, x)| op(&acc, x))
            })
            .collect();
    }
    let mut out = Vec::with_capacity(d);
    let mut acc = seed.clone();
    for it in items {
        out.push(acc.clone());
        acc = op(&acc, it);
    }
    let mut suffix: Option<T> = None;
    for i in (0..d).rev() {
        if let Some(s) = &suffix {
            out[i] = op(&out[i], s);
        }
        suffix = Some(match suffix {
            None => items[i].clone(),
            Some(s) => op(&s, items[i]),
        });
    }
    out
}

/// Outcome of one decoding run.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeTrace {
    pub m: usize,
    pub n_edges: usize,
    /// `histograms[l][k]`: variable-to-check messages of dimension `k` sent in
    /// iteration `l + 1`.
    pub histograms: Vec<Vec<usize>>,
    /// First iteration after which every decision has dimension 0.
    pub success_iteration: Option<usize>,
    /// Iterations run; decoding continues past success until the messages stop
    /// changing so that histograms can be padded exactly.
    pub iterations_run: usize,
    /// Symbols whose final decision is not a single value.
    pub symbol_erasures: usize,
    /// Bits not pinned by the final decisions.
    pub bit_erasures: usize,
    pub n: usize,
}

impl DecodeTrace {
    pub fn success(&self) -> bool {
        self.success_iteration.is_some()
    }

    /// Iterations to success, or iterations run on failure.
    pub fn iterations(&self) -> usize {
        self.success_iteration.unwrap_or(self.iterations_run)
    }

    pub fn symbol_erasure_rate(&self) -> f64 {
        self.symbol_erasures as f64 / self.n.max(1) as f64
    }

    pub fn bit_erasure_rate(&self) -> f64 {
        self.bit_erasures as f64 / (self.n * self.m).max(1) as f64
    }

    /// Histogram of iteration `iter` (1-based); past the end the messages are
    /// fixed, so the last histogram repeats.
    pub fn histogram_at(&self, iter: usize) -> Vec<usize> {
        assert!(iter >= 1);
        match self.histograms.get(iter - 1).or(self.histograms.last()) {
            Some(h) => h.clone(),
            None => {
                // Decoded from the channel alone: every message is zero.
                let mut h = vec![0; self.m + 1];
                h[0] = self.n_edges;
                h
            }
        }
    }
}

/// Operations the subspace decoder needs from its message type.
trait Space: Clone + PartialEq {
    fn full(m: usize) -> Self;
    fn zero(m: usize) -> Self;
    fn meet(&self, other: &Self) -> Self;
    fn join(&self, other: &Self) -> Self;
    fn image(&self, w: &BitMatrix) -> Self;
    fn dim(&self) -> usize;
    /// Coordinates that are not zero on the whole subspace.
    fn free_bits(&self) -> u64;
    fn from_basis(s: &SubspaceBasis) -> Self;
    fn to_basis(&self, m: usize) -> SubspaceBasis;
}

impl Space for SubspaceBasis {
    fn full(m: usize) -> Self {
        SubspaceBasis::full(m)
    }
    fn zero(m: usize) -> Self {
        SubspaceBasis::zero(m)
    }
    fn meet(&self, other: &Self) -> Self {
        self.intersection(other).expect("same ambient dimension")
    }
    fn join(&self, other: &Self) -> Self {
        self.sum(other).expect("same ambient dimension")
    }
    fn image(&self, w: &BitMatrix) -> Self {
        self.transform(w).expect("square label")
    }
    fn dim(&self) -> usize {
        SubspaceBasis::dim(self)
    }
    fn free_bits(&self) -> u64 {
        self.coordinate_support()
    }
    fn from_basis(s: &SubspaceBasis) -> Self {
        s.clone()
    }
    fn to_basis(&self, _m: usize) -> SubspaceBasis {
        self.clone()
    }
}

/// Subspace of `GF(2)^m`, `m <= 6`, as the bitmask of its `2^m` elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ElemSet(u64);

/// Positions whose index has bit `j` clear.
const LOW_HALF: [u64; 6] = [
    0x5555_5555_5555_5555,
    0x3333_3333_3333_3333,
    0x0f0f_0f0f_0f0f_0f0f,
    0x00ff_00ff_00ff_00ff,
    0x0000_ffff_0000_ffff,
    0x0000_0000_ffff_ffff,
];

impl ElemSet {
    const MAX_M: usize = 6;

    /// `{s ⊕ x : s ∈ self}`.
    fn shifted(self, x: u64) -> u64 {
        let mut s = self.0;
        for (j, &low) in LOW_HALF.iter().enumerate() {
            if x >> j & 1 == 1 {
                let k = 1 << j;
                s = ((s & low) << k) | ((s >> k) & low);
            }
        }
        s
    }

    fn with(self, x: u64) -> Self {
        if self.0 >> x & 1 == 1 {
            self
        } else {
            ElemSet(self.0 | self.shifted(x))
        }
    }
}

impl Space for ElemSet {
    fn full(m: usize) -> Self {
        ElemSet(if m == Self::MAX_M { u64::MAX } else { (1u64 << (1 << m)) - 1 })
    }
    fn zero(_m: usize) -> Self {
        ElemSet(1)
    }
    fn meet(&self, other: &Self) -> Self {
        ElemSet(self.0 & other.0)
    }
    fn join(&self, other: &Self) -> Self {
        let mut r = *self;
        loop {
            let rest = other.0 & !r.0;
            if rest == 0 {
                return r;
            }
            r = r.with(rest.trailing_zeros() as u64);
        }
    }
    fn image(&self, w: &BitMatrix) -> Self {
        let mut covered = ElemSet(1);
        let mut out = ElemSet(1);
        loop {
            let rest = self.0 & !covered.0;
            if rest == 0 {
                return out;
            }
            let x = rest.trailing_zeros() as u64;
            covered = covered.with(x);
            out = out.with(w.mul_vec(x));
        }
    }
    fn dim(&self) -> usize {
        self.0.count_ones().trailing_zeros() as usize
    }
    fn free_bits(&self) -> u64 {
        let mut acc = 0;
        let mut rest = self.0;
        while rest != 0 {
            acc |= rest.trailing_zeros() as u64;
            rest &= rest - 1;
        }
        acc
    }
    fn from_basis(s: &SubspaceBasis) -> Self {
        ElemSet(s.elements().iter().fold(0, |acc, &x| acc | 1 << x))
    }
    fn to_basis(&self, m: usize) -> SubspaceBasis {
        let mut rest = self.0;
        let mut elems = Vec::new();
        while rest != 0 {
            elems.push(rest.trailing_zeros() as u64);
            rest &= rest - 1;
        }
        SubspaceBasis::span(m, elems)
    }
}

#[derive(Clone, Debug)]
struct Flooding<S> {
    channel: Vec<S>,
    v2c: Vec<S>,
    c2v: Vec<S>,
    // Buffers for the next round, swapped in after each step.
    next_v2c: Vec<S>,
    next_c2v: Vec<S>,
}

impl<S: Space> Flooding<S> {
    fn new(g: &TannerGraph, channel: &[SubspaceBasis]) -> Self {
        let full = vec![S::full(g.m); g.n_edges()];
        Self {
            channel: channel.iter().map(S::from_basis).collect(),
            v2c: full.clone(),
            c2v: full.clone(),
            next_v2c: full.clone(),
            next_c2v: full,
        }
    }

    fn step(&mut self, g: &TannerGraph) -> bool {
        let mut v2c = std::mem::take(&mut self.next_v2c);
        for (v, edges) in g.var_edges.iter().enumerate() {
            let incoming: Vec<&S> = edges.iter().map(|&e| &self.c2v[e]).collect();
            let others = leave_one_out(&incoming, &self.channel[v], S::meet);
            for (&e, o) in edges.iter().zip(&others) {
                v2c[e] = o.image(&g.labels[e]);
            }
        }
        let zero = S::zero(g.m);
        let mut c2v = std::mem::take(&mut self.next_c2v);
        for edges in &g.chk_edges {
            let incoming: Vec<&S> = edges.iter().map(|&e| &v2c[e]).collect();
            let others = leave_one_out(&incoming, &zero, S::join);
            for (&e, o) in edges.iter().zip(&others) {
                c2v[e] = o.image(&g.inverse_labels[e]);
            }
        }
        let changed = v2c != self.v2c || c2v != self.c2v;
        self.next_v2c = std::mem::replace(&mut self.v2c, v2c);
        self.next_c2v = std::mem::replace(&mut self.c2v, c2v);
        changed
    }

    fn decisions(&self, g: &TannerGraph) -> Vec<S> {
        g.var_edges
            .iter()
            .zip(&self.channel)
            .map(|(edges, ch)| edges.iter().fold(ch.clone(), |acc, &e| acc.meet(&self.c2v[e])))
            .collect()
    }

    fn histogram(&self, m: usize) -> Vec<usize> {
        let mut h = vec![0; m + 1];
        for s in &self.v2c {
            h[s.dim()] += 1;
        }
        h
    }
}

#[derive(Clone, Debug)]
enum Engine {
    Small(Flooding<ElemSet>),
    General(Flooding<SubspaceBasis>),
}

macro_rules! with_engine {
    ($engine:expr, $f:ident => $body:expr) => {
        match $engine {
            Engine::Small($f) => $body,
            Engine::General($f) => $body,
        }
    };
}

/// Subspace BP with a flooding schedule. Check-to-variable messages start as
/// the whole space.
#[derive(Clone, Debug)]
pub struct SubspaceDecoder<'g> {
    graph: &'g TannerGraph,
    engine: Engine,
    iteration: usize,
}

impl<'g> SubspaceDecoder<'g> {
    pub fn new(graph: &'g TannerGraph, channel: Vec<SubspaceBasis>) -> Result<Self> {
        if channel.len() != graph.n_var() {
            return Err(Error::InvalidEnsemble(format!(
                "{} channel messages for {} variables",
                channel.len(),
                graph.n_var()
            )));
        }
        if let Some(bad) = channel.iter().find(|c| c.ambient_dim() != graph.m) {
            return Err(Error::DimensionMismatch {
                left: graph.m,
                right: bad.ambient_dim(),
            });
        }
        // Up to m = 6 a subspace fits in one word as its element set.
        let engine = if graph.m <= ElemSet::MAX_M {
            Engine::Small(Flooding::new(graph, &channel))
        } else {
            Engine::General(Flooding::new(graph, &channel))
        };
        Ok(Self {
            graph,
            engine,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Variable-to-check messages, in the label's coordinates.
    pub fn v2c(&self) -> Vec<SubspaceBasis> {
        let m = self.graph.m;
        with_engine!(&self.engine, f => f.v2c.iter().map(|s| s.to_basis(m)).collect())
    }

    /// Check-to-variable messages, in the variable's coordinates.
    pub fn c2v(&self) -> Vec<SubspaceBasis> {
        let m = self.graph.m;
        with_engine!(&self.engine, f => f.c2v.iter().map(|s| s.to_basis(m)).collect())
    }

    /// One round: all variable nodes, then all check nodes. Returns whether any
    /// message changed.
    pub fn step(&mut self) -> bool {
        self.iteration += 1;
        let g = self.graph;
        with_engine!(&mut self.engine, f => f.step(g))
    }

    /// Channel message intersected with every incoming check message.
    pub fn decisions(&self) -> Vec<SubspaceBasis> {
        let m = self.graph.m;
        with_engine!(&self.engine, f => f.decisions(self.graph).iter().map(|s| s.to_basis(m)).collect())
    }

    /// `(dimension, free coordinates)` of every decision.
    fn decision_summary(&self) -> Vec<(usize, u64)> {
        with_engine!(&self.engine, f => f
            .decisions(self.graph)
            .iter()
            .map(|s| (s.dim(), s.free_bits()))
            .collect())
    }

    fn histogram(&self) -> Vec<usize> {
        with_engine!(&self.engine, f => f.histogram(self.graph.m))
    }
}

/// Runs [`SubspaceDecoder`] until the messages stop changing or `max_iter`
/// rounds have run.
pub fn bp_decode_subspace(g: &TannerGraph, channel: Vec<SubspaceBasis>, max_iter: usize) -> Result<DecodeTrace> {
    let mut dec = SubspaceDecoder::new(g, channel)?;
    let all_zero = |d: &[(usize, u64)]| d.iter().all(|x| x.0 == 0);
    let mut histograms = Vec::new();
    let mut decisions = dec.decision_summary();
    let mut success_iteration = all_zero(&decisions).then_some(0);
    // With every symbol known from the channel nothing is left to do.
    if success_iteration.is_none() {
        while dec.iteration() < max_iter {
            let changed = dec.step();
            histograms.push(dec.histogram());
            decisions = dec.decision_summary();
            if success_iteration.is_none() && all_zero(&decisions) {
                success_iteration = Some(dec.iteration());
            }
            if !changed {
                break;
            }
        }
    }
    Ok(DecodeTrace {
        m: g.m,
        n_edges: g.n_edges(),
        iterations_run: dec.iteration(),
        symbol_erasures: decisions.iter().filter(|d| d.0 > 0).count(),
        bit_erasures: decisions.iter().map(|d| d.1.count_ones() as usize).sum(),
        histograms,
        success_iteration,
        n: g.n_var(),
    })
}

/// Label permutation on a probability vector: `out[W a] = psi[a]`.
fn permute(psi: &[f64], w: &BitMatrix) -> Vec<f64> {
    let mut out = vec![0.0; psi.len()];
    for (a, &p) in psi.iter().enumerate() {
        out[w.mul_vec(a as u64) as usize] = p;
    }
    out
}

fn normalize(v: &mut [f64]) {
    for x in v.iter_mut() {
        if x.abs() < PROB_TOL {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
}

/// Reference BP over full probability vectors.
#[derive(Clone, Debug)]
pub struct ProbVecDecoder<'g> {
    graph: &'g TannerGraph,
    channel: Vec<Vec<f64>>,
    v2c: Vec<Vec<f64>>,
    c2v: Vec<Vec<f64>>,
    iteration: usize,
}

impl<'g> ProbVecDecoder<'g> {
    pub fn new(graph: &'g TannerGraph, channel: Vec<Vec<f64>>) -> Result<Self> {
        let q = 1usize << graph.m;
        if channel.len() != graph.n_var() {
            return Err(Error::InvalidEnsemble(format!(
                "{} channel messages for {} variables",
                channel.len(),
                graph.n_var()
            )));
        }
        if let Some(bad) = channel.iter().find(|c| c.len() != q) {
            return Err(Error::NotPowerOfTwo(bad.len()));
        }
        let uniform = vec![1.0 / q as f64; q];
        Ok(Self {
            graph,
            channel,
            v2c: vec![uniform.clone(); graph.n_edges()],
            c2v: vec![uniform; graph.n_edges()],
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn v2c(&self) -> &[Vec<f64>] {
        &self.v2c
    }

    pub fn c2v(&self) -> &[Vec<f64>] {
        &self.c2v
    }

    pub fn step(&mut self) -> bool {
        let g = self.graph;
        let q = 1usize << g.m;
        let ones = vec![1.0; q];
        let product = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<f64>>();

        let mut v2c = vec![Vec::new(); g.n_edges()];
        for (v, edges) in g.var_edges.iter().enumerate() {
            let incoming: Vec<&Vec<f64>> = edges.iter().map(|&e| &self.c2v[e]).collect();
            let others = leave_one_out(&incoming, &self.channel[v], product);
            for (&e, mut x) in edges.iter().zip(others) {
                normalize(&mut x);
                v2c[e] = permute(&x, &g.labels[e]);
            }
        }

        let mut c2v = vec![Vec::new(); g.n_edges()];
        for edges in &g.chk_edges {
            let spectra: Vec<Vec<f64>> = edges
                .iter()
                .map(|&e| wht(&v2c[e]).expect("power-of-two length"))
                .collect();
            let refs: Vec<&Vec<f64>> = spectra.iter().collect();
            let others = leave_one_out(&refs, &ones, product);
            for (&e, mut o) in edges.iter().zip(others) {
                wht_in_place(&mut o).expect("power-of-two length");
                normalize(&mut o);
                c2v[e] = permute(&o, &g.inverse_labels[e]);
            }
        }
        let changed = v2c != self.v2c || c2v != self.c2v;
        self.v2c = v2c;
        self.c2v = c2v;
        self.iteration += 1;
        changed
    }

    pub fn decisions(&self) -> Vec<Vec<f64>> {
        self.graph
            .var_edges
            .iter()
            .enumerate()
            .map(|(v, edges)| {
                let mut x = self.channel[v].clone();
                for &e in edges {
                    for (a, b) in x.iter_mut().zip(&self.c2v[e]) {
                        *a *= b;
                    }
                }
                normalize(&mut x);
                x
            })
            .collect()
    }

    fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.graph.m + 1];
        for s in &self.v2c {
            h[support_dim(s)] += 1;
        }
        h
    }
}

/// `log2` of the support size.
fn support_dim(psi: &[f64]) -> usize {
    let count = psi.iter().filter(|&&x| x > PROB_TOL).count();
    count.max(1).ilog2() as usize
}

/// Runs [`ProbVecDecoder`] with the same stopping rule as
/// [`bp_decode_subspace`].
pub fn bp_decode_probvec(g: &TannerGraph, channel: Vec<Vec<f64>>, max_iter: usize) -> Result<DecodeTrace> {
    let mut dec = ProbVecDecoder::new(g, channel)?;
    let mut histograms = Vec::new();
    let known = |d: &[Vec<f64>]| d.iter().all(|x| support_dim(x) == 0);
    let mut decisions = dec.decisions();
    let mut success_iteration = known(&decisions).then_some(0);
    if success_iteration.is_none() {
        while dec.iteration() < max_iter {
            let changed = dec.step();
            histograms.push(dec.histogram());
            decisions = dec.decisions();
            if success_iteration.is_none() && known(&decisions) {
                success_iteration = Some(dec.iteration());
            }
            if !changed {
                break;
            }
        }
    }
    let q = 1u64 << g.m;
    Ok(DecodeTrace {
        m: g.m,
        n_edges: g.n_edges(),
        iterations_run: dec.iteration(),
        symbol_erasures: decisions.iter().filter(|d| support_dim(d) > 0).count(),
        bit_erasures: decisions
            .iter()
            .map(|d| {
                (0..q)
                    .filter(|&a| d[a as usize] > PROB_TOL)
                    .fold(0u64, |acc, a| acc | a)
                    .count_ones() as usize
            })
            .sum(),
        histograms,
        success_iteration,
        n: g.n_var(),
    })
}

/// Steps both decoders in lockstep for up to `max_iter` rounds and checks that
/// every probability-vector message is a valid erasure message whose support
/// equals the corresponding subspace message. Returns the rounds compared.
pub fn compare_decoders(g: &TannerGraph, channel: &[SubspaceBasis], max_iter: usize) -> std::result::Result<usize, String> {
    let mut sub = SubspaceDecoder::new(g, channel.to_vec()).map_err(|e| e.to_string())?;
    let mut prob =
        ProbVecDecoder::new(g, channel.iter().map(uniform_on).collect()).map_err(|e| e.to_string())?;
    const TOL: f64 = 1e-9;
    for (v, psi) in prob.channel.iter().enumerate() {
        let s = erasure_message_support(psi, TOL).map_err(|e| format!("channel {v}: {e}"))?;
        if s != channel[v] {
            return Err(format!("channel {v}: support {s:?} != {:?}", channel[v]));
        }
    }
    for _ in 0..max_iter {
        let a = sub.step();
        let b = prob.step();
        let it = sub.iteration();
        for (dir, subs, probs) in [("v2c", sub.v2c(), prob.v2c()), ("c2v", sub.c2v(), prob.c2v())] {
            for (e, (s, psi)) in subs.iter().zip(probs).enumerate() {
                let support = erasure_message_support(psi, TOL)
                    .map_err(|err| format!("iteration {it}, {dir} edge {e}: {err}"))?;
                if &support != s {
                    return Err(format!("iteration {it}, {dir} edge {e}: {support:?} != {s:?}"));
                }
            }
        }
        if a != b {
            return Err(format!("iteration {it}: decoders disagree on whether anything changed"));
        }
        if !a {
            break;
        }
    }
    Ok(sub.iteration())
}

/// One Monte Carlo trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub trace: DecodeTrace,
}

/// Aggregated Monte Carlo results.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub ensemble: EnsembleSpec,
    pub n: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub trials: Vec<TrialResult>,
}

fn mean_stderr(xs: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl Experiment {
    /// Fraction of trials with at least one unrecovered symbol.
    pub fn block_failure_rate(&self) -> f64 {
        self.fraction(|t| !t.success())
    }

    /// Fraction of trials whose terminal symbol-erasure rate exceeds
    /// `fraction`. Small stopping sets leave a handful of symbols erased even
    /// below threshold; this counts only failures that involve a
    /// non-vanishing share of the code.
    pub fn failure_rate(&self, fraction: f64) -> f64 {
        self.fraction(|t| t.symbol_erasure_rate() > fraction)
    }

    fn fraction(&self, pred: impl Fn(&DecodeTrace) -> bool) -> f64 {
        self.trials.iter().filter(|t| pred(&t.trace)).count() as f64 / self.trials.len() as f64
    }

    /// Mean and standard error of the terminal symbol-erasure rate.
    pub fn symbol_erasure_rate(&self) -> (f64, f64) {
        mean_stderr(self.trials.iter().map(|t| t.trace.symbol_erasure_rate()))
    }

    pub fn bit_erasure_rate(&self) -> (f64, f64) {
        mean_stderr(self.trials.iter().map(|t| t.trace.bit_erasure_rate()))
    }

    /// Longest trace among the trials.
    pub fn max_iterations_run(&self) -> usize {
        self.trials.iter().map(|t| t.trace.histograms.len()).max().unwrap_or(0)
    }

    /// Per-dimension mean and standard error over trials of the fraction of
    /// variable-to-check messages with that dimension in iteration `iter`.
    pub fn dimension_fractions(&self, iter: usize) -> Vec<(f64, f64)> {
        let m = self.ensemble.m;
        let rows: Vec<Vec<f64>> = self
            .trials
            .iter()
            .map(|t| {
                let edges = t.trace.n_edges as f64;
                t.trace.histogram_at(iter).iter().map(|&c| c as f64 / edges).collect()
            })
            .collect();
        (0..=m)
            .map(|k| mean_stderr(rows.iter().map(|r| r[k])))
            .collect()
    }

    fn header<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "# seed={} n={} epsilon={} trials={} max_iter={} lambda=\"{}\" rho=\"{}\" m={} labels={}",
            self.seed,
            self.n,
            fmt6(self.epsilon),
            self.trials.len(),
            self.max_iter,
            self.ensemble.lambda,
            self.ensemble.rho,
            self.ensemble.m,
            self.ensemble.labels
        )
    }

    /// `trial,iterations,symbol_erasure_rate,bit_erasure_rate`.
    pub fn write_trials_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        self.header(&mut out)?;
        writeln!(out, "trial,iterations,symbol_erasure_rate,bit_erasure_rate")?;
        for t in &self.trials {
            writeln!(
                out,
                "{},{},{},{}",
                t.trial,
                t.trace.iterations(),
                fmt6(t.trace.symbol_erasure_rate()),
                fmt6(t.trace.bit_erasure_rate())
            )?;
        }
        Ok(())
    }

    /// `iter,dim,count`: message counts summed over trials, each trial padded
    /// with its final histogram up to the longest run.
    pub fn write_histogram_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        self.header(&mut out)?;
        writeln!(out, "iter,dim,count")?;
        for iter in 1..=self.max_iterations_run() {
            let mut total = vec![0usize; self.ensemble.m + 1];
            for t in &self.trials {
                for (k, c) in t.trace.histogram_at(iter).into_iter().enumerate() {
                    total[k] += c;
                }
            }
            for (k, c) in total.into_iter().enumerate() {
                writeln!(out, "{iter},{k},{c}")?;
            }
        }
        Ok(())
    }
}

/// RNG of one trial: the master seed selects the key, the trial index the
/// stream, so results do not depend on scheduling.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Draws a code and a channel realisation for `trial` and decodes it.
pub fn run_trial(e: &EnsembleSpec, n: usize, epsilon: f64, max_iter: usize, seed: u64, trial: usize) -> Result<TrialResult> {
    let mut rng = trial_rng(seed, trial);
    let g = sample_code(n, e, &mut rng)?;
    let channel = transmit_bec(n, e.m, epsilon, &mut rng)?;
    let trace = bp_decode_subspace(&g, channel, max_iter)?;
    Ok(TrialResult { trial, trace })
}

/// Independent trials in parallel.
pub fn run_experiment(
    e: &EnsembleSpec,
    n: usize,
    epsilon: f64,
    trials: usize,
    max_iter: usize,
    seed: u64,
) -> Result<Experiment> {
    if trials == 0 {
        return Err(Error::InvalidEnsemble("at least one trial is required".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(e, n, epsilon, max_iter, seed, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment {
        ensemble: e.clone(),
        n,
        epsilon,
        max_iter,
        seed,
        trials: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::enumerate_subspaces;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn ens(l: &str, r: &str, m: usize) -> EnsembleSpec {
        EnsembleSpec::parse(l, r, m).unwrap()
    }

    #[test]
    fn regular_graph_counts() {
        let e = ens("y", "y^2", 2);
        let g = sample_graph(6, &e, &mut rng(1)).unwrap();
        assert_eq!((g.n_var(), g.n_chk(), g.n_edges()), (6, 4, 12));
        assert!(g.var_edges.iter().all(|v| v.len() == 2));
        assert!(g.chk_edges.iter().all(|c| c.len() == 3));
    }

    #[test]
    fn irregular_degree_histogram() {
        let e = ens("0.5y + 0.5y^4", "y^5", 1);
        let g = sample_graph(10_000, &e, &mut rng(2)).unwrap();
        let edges = g.n_edges() as f64;
        let var = g.var_degree_counts();
        for (d, w) in e.lambda.iter() {
            let frac = (var[&d] * d) as f64 / edges;
            assert!((frac - w).abs() < 1e-3, "degree {d}: {frac} vs {w}");
        }
        let chk = g.chk_degree_counts();
        let sockets: usize = chk.iter().map(|(d, c)| d * c).sum();
        assert_eq!(sockets, g.n_edges());
        assert!(chk.keys().all(|&d| d >= 2));
        assert!(chk.get(&6).copied().unwrap_or(0) as f64 > 0.99 * g.n_chk() as f64);
    }

    #[test]
    fn apportion_sums_to_total() {
        let fr: BTreeMap<usize, f64> = [(2, 1.0 / 3.0), (3, 1.0 / 3.0), (5, 1.0 / 3.0)].into();
        for total in 0..20 {
            let c = apportion(&fr, total);
            assert_eq!(c.iter().map(|x| x.1).sum::<usize>(), total);
        }
    }

    #[test]
    fn too_small_to_balance() {
        let e = ens("y^2", "y", 1);
        assert!(matches!(sample_graph(1, &e, &mut rng(0)), Err(Error::Unbalanceable(_))));
    }

    #[test]
    fn labels_invertible_and_m1_identity() {
        let e = ens("y", "y^2", 1);
        let g = sample_code(30, &e, &mut rng(3)).unwrap();
        assert!(g.labels.iter().all(|w| *w == BitMatrix::identity(1)));
        let e = ens("y^2", "y^5", 3);
        let g = sample_code(30, &e, &mut rng(3)).unwrap();
        for (w, wi) in g.labels.iter().zip(&g.inverse_labels) {
            assert_eq!(w.mul(wi).unwrap(), BitMatrix::identity(3));
        }
    }

    #[test]
    fn gf4_labels_are_three_matrices() {
        let mut e = ens("y", "y^2", 2);
        e.labels = LabelKind::FiniteField { poly: 0b111 };
        let g = sample_code(300, &e, &mut rng(4)).unwrap();
        let mut seen: Vec<BitMatrix> = g.labels.clone();
        seen.sort_by_key(|w| w.rows().to_vec());
        seen.dedup();
        let z = gf2::field_multiplication_matrix(2, 0b111, 0b10).unwrap();
        let mut want = vec![BitMatrix::identity(2), z.clone(), z.mul(&z).unwrap()];
        want.sort_by_key(|w| w.rows().to_vec());
        assert_eq!(seen, want);
    }

    #[test]
    fn gl2_labels_uniform() {
        let mut r = rng(5);
        let mut counts: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let n = 60_000;
        for _ in 0..n {
            let w = sample_label(2, &LabelKind::GeneralLinear, &mut r).unwrap();
            *counts.entry(w.rows().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expect = n as f64 / 6.0;
        let sd = (expect * 5.0 / 6.0).sqrt();
        assert!(counts.values().all(|&c| (c as f64 - expect).abs() < 5.0 * sd));
    }

    #[test]
    fn transmit_examples() {
        let msgs = transmit_bec(50, 3, 0.0, &mut rng(6)).unwrap();
        assert!(msgs.iter().all(|s| s.dim() == 0));
        // bit x1 known, x2 erased
        let s = SubspaceBasis::coordinate(2, 0b10);
        assert_eq!(uniform_on(&s), vec![0.5, 0.0, 0.5, 0.0]);
        assert!(transmit_bec(1, 1, 1.5, &mut rng(0)).is_err());
    }

    #[test]
    fn transmit_histogram_is_binomial() {
        let n = 40_000;
        let msgs = transmit_bec(n, 3, 0.3, &mut rng(7)).unwrap();
        let want = crate::density::channel_distribution(3, 0.3).unwrap();
        for (k, &p) in want.probs().iter().enumerate() {
            let f = msgs.iter().filter(|s| s.dim() == k).count() as f64 / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() < 5.0 * sd, "dim {k}: {f} vs {p}");
        }
    }

    #[test]
    fn wht_examples() {
        let mut delta = vec![0.0; 8];
        delta[0] = 1.0;
        assert_eq!(wht(&delta).unwrap(), vec![1.0; 8]);
        assert!(matches!(wht(&[1.0, 2.0, 3.0]), Err(Error::NotPowerOfTwo(3))));
        let mut r = rng(8);
        let v: Vec<f64> = (0..16).map(|_| r.random::<f64>()).collect();
        let back = wht(&wht(&v).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - 16.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_subspace_transform_is_dual_indicator() {
        for k in 0..=3 {
            for v in enumerate_subspaces(3, k).unwrap() {
                let s = erasure_message_support(&uniform_on(&v), 1e-12).unwrap();
                assert_eq!(s, v);
            }
        }
    }

    #[test]
    fn support_check_rejects_non_messages() {
        assert!(erasure_message_support(&[0.5, 0.5, 0.0, 0.0], 1e-12).is_ok());
        assert!(erasure_message_support(&[0.6, 0.4, 0.0, 0.0], 1e-12).is_err());
        assert!(erasure_message_support(&[0.0, 0.5, 0.5, 0.0], 1e-12).is_err());
        assert!(erasure_message_support(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0], 1e-12).is_err());
    }

    #[test]
    fn leave_one_out_sums() {
        let v: Vec<i32> = (1..=7).collect();
        for d in 0..=7 {
            let refs: Vec<&i32> = v[..d].iter().collect();
            let total: i32 = v[..d].iter().sum();
            let want: Vec<i32> = v[..d].iter().map(|x| 100 + total - x).collect();
            assert_eq!(leave_one_out(&refs, &100, |a, b| a + b), want);
        }
    }

    #[test]
    fn noiseless_decodes_in_zero_iterations() {
        let e = ens("y", "y^2", 2);
        let g = sample_code(60, &e, &mut rng(9)).unwrap();
        let t = bp_decode_subspace(&g, transmit_bec(60, 2, 0.0, &mut rng(0)).unwrap(), 100).unwrap();
        assert_eq!(t.success_iteration, Some(0));
        assert_eq!(t.iterations(), 0);
        assert_eq!(t.histogram_at(3), vec![g.n_edges(), 0, 0]);
    }

    #[test]
    fn single_check_recovers_erased_symbol() {
        let mut r = rng(10);
        for m in 1..=4 {
            let edges = vec![Edge { var: 0, chk: 0 }, Edge { var: 1, chk: 0 }];
            let mut g = TannerGraph::from_edges(m, 2, 1, edges).unwrap();
            for e in 0..2 {
                g.set_label(e, gf2::random_invertible(m, &mut r)).unwrap();
            }
            let channel = vec![SubspaceBasis::full(m), SubspaceBasis::zero(m)];
            let t = bp_decode_subspace(&g, channel.clone(), 10).unwrap();
            assert_eq!(t.success_iteration, Some(1));
            assert_eq!(t.symbol_erasures, 0);
            let p = bp_decode_probvec(&g, channel.iter().map(uniform_on).collect(), 10).unwrap();
            assert_eq!(p, t);
        }
    }

    #[test]
    fn all_erased_never_recovers() {
        let e = ens("y^2", "y^5", 2);
        let g = sample_code(100, &e, &mut rng(11)).unwrap();
        let t = bp_decode_subspace(&g, transmit_bec(100, 2, 1.0, &mut rng(0)).unwrap(), 50).unwrap();
        assert_eq!(t.symbol_erasures, 100);
        assert_eq!(t.bit_erasures, 200);
        assert!(!t.success());
    }

    #[test]
    fn check_node_with_known_input_is_labeled_permutation() {
        // Degree-2 check: the outgoing message is the other side's message
        // carried through both labels.
        let mut r = rng(12);
        let m = 3;
        for _ in 0..20 {
            let edges = vec![Edge { var: 0, chk: 0 }, Edge { var: 1, chk: 0 }];
            let mut g = TannerGraph::from_edges(m, 2, 1, edges).unwrap();
            let w0 = gf2::random_invertible(m, &mut r);
            let w1 = gf2::random_invertible(m, &mut r);
            g.set_label(0, w0.clone()).unwrap();
            g.set_label(1, w1.clone()).unwrap();
            let a = r.random_range(0..(1u64 << m));
            let b = r.random_range(0..(1u64 << m));
            let mut p0 = vec![0.0; 8];
            p0[a as usize] = 1.0;
            let mut p1 = vec![0.0; 8];
            p1[b as usize] = 1.0;
            let mut dec = ProbVecDecoder::new(&g, vec![p0, p1]).unwrap();
            dec.step();
            let to0 = w0.inverse().unwrap().mul_vec(w1.mul_vec(b));
            assert_eq!(dec.c2v()[0][to0 as usize], 1.0);
            let to1 = w1.inverse().unwrap().mul_vec(w0.mul_vec(a));
            assert_eq!(dec.c2v()[1][to1 as usize], 1.0);
        }
    }

    #[test]
    fn check_dimension_accounting_exhaustive() {
        // Degree-3 check with random labels: the message towards edge 0 is
        // W0⁻¹ (V1 + V2) for every pair of incoming subspaces.
        let mut r = rng(13);
        for m in 1..=3 {
            let all: Vec<SubspaceBasis> = (0..=m).flat_map(|k| enumerate_subspaces(m, k).unwrap()).collect();
            let edges = (0..3).map(|v| Edge { var: v, chk: 0 }).collect();
            let mut g = TannerGraph::from_edges(m, 3, 1, edges).unwrap();
            for e in 0..3 {
                g.set_label(e, gf2::random_invertible(m, &mut r)).unwrap();
            }
            for a in &all {
                for b in &all {
                    let channel = vec![SubspaceBasis::full(m), a.clone(), b.clone()];
                    let mut dec = SubspaceDecoder::new(&g, channel).unwrap();
                    dec.step();
                    let s = a.transform(g.label(1)).unwrap().sum(&b.transform(g.label(2)).unwrap()).unwrap();
                    let want = s.transform(&g.inverse_labels[0]).unwrap();
                    assert_eq!(dec.c2v()[0], want);
                }
            }
        }
    }

    #[test]
    fn element_sets_match_bases() {
        let mut r = rng(16);
        for m in 1..=4 {
            let all: Vec<SubspaceBasis> = (0..=m).flat_map(|k| enumerate_subspaces(m, k).unwrap()).collect();
            let w = gf2::random_invertible(m, &mut r);
            for a in &all {
                let ea = ElemSet::from_basis(a);
                assert_eq!(ea.to_basis(m), *a);
                assert_eq!(Space::dim(&ea), a.dim());
                assert_eq!(ea.free_bits(), a.coordinate_support());
                assert_eq!(ea.image(&w).to_basis(m), a.transform(&w).unwrap());
                for b in &all {
                    let eb = ElemSet::from_basis(b);
                    assert_eq!(ea.meet(&eb).to_basis(m), a.intersection(b).unwrap());
                    assert_eq!(ea.join(&eb).to_basis(m), a.sum(b).unwrap());
                }
            }
        }
        assert_eq!(ElemSet::full(6).to_basis(6), SubspaceBasis::full(6));
    }

    #[test]
    fn word_and_basis_engines_agree() {
        let mut r = rng(17);
        for m in [2, 3, 6] {
            let e = ens("0.5y + 0.5y^2", "y^4", m);
            let g = sample_code(120, &e, &mut r).unwrap();
            let ch = transmit_bec(120, m, 0.45, &mut r).unwrap();
            let mut small = Flooding::<ElemSet>::new(&g, &ch);
            let mut general = Flooding::<SubspaceBasis>::new(&g, &ch);
            for _ in 0..30 {
                assert_eq!(small.step(&g), general.step(&g));
                let a: Vec<SubspaceBasis> = small.v2c.iter().map(|s| s.to_basis(m)).collect();
                assert_eq!(a, general.v2c);
                let a: Vec<SubspaceBasis> = small.c2v.iter().map(|s| s.to_basis(m)).collect();
                assert_eq!(a, general.c2v);
            }
        }
    }

    #[test]
    fn decodes_beyond_word_sized_alphabets() {
        let e = ens("y^2", "y^5", 8);
        let mut r = rng(18);
        let g = sample_code(200, &e, &mut r).unwrap();
        let t = bp_decode_subspace(&g, transmit_bec(200, 8, 0.2, &mut r).unwrap(), 100).unwrap();
        assert!(t.success());
        let t = bp_decode_subspace(&g, transmit_bec(200, 8, 0.9, &mut r).unwrap(), 100).unwrap();
        assert!(!t.success());
    }

    #[test]
    fn decoders_agree_on_small_codes() {
        let mut r = rng(14);
        for trial in 0..40 {
            let m = 1 + trial % 3;
            let mut e = ens("y", "y^2", m);
            if trial % 2 == 1 {
                e.labels = LabelKind::FiniteField {
                    poly: [0b11, 0b111, 0b1011][m - 1],
                };
            }
            let n = 6 + trial % 10;
            let g = sample_code(n, &e, &mut r).unwrap();
            let ch = transmit_bec(n, m, 0.5, &mut r).unwrap();
            compare_decoders(&g, &ch, 50).unwrap();
        }
    }

    #[test]
    fn message_dimensions_never_grow() {
        let e = ens("y^2", "y^5", 3);
        let mut r = rng(15);
        let g = sample_code(200, &e, &mut r).unwrap();
        let mut dec = SubspaceDecoder::new(&g, transmit_bec(200, 3, 0.4, &mut r).unwrap()).unwrap();
        let mut prev: Vec<usize> = dec.v2c().iter().map(|s| s.dim()).collect();
        for _ in 0..30 {
            dec.step();
            let cur: Vec<usize> = dec.v2c().iter().map(|s| s.dim()).collect();
            assert!(cur.iter().zip(&prev).all(|(c, p)| c <= p));
            prev = cur;
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let e = ens("y", "y^2", 2);
        let a = run_experiment(&e, 200, 0.5, 4, 100, 99).unwrap();
        let b = run_experiment(&e, 200, 0.5, 4, 100, 99).unwrap();
        assert_eq!(a.trials, b.trials);
        let single = run_trial(&e, 200, 0.5, 100, 99, 2).unwrap();
        assert_eq!(single, a.trials[2]);
        let c = run_experiment(&e, 200, 0.5, 4, 100, 100).unwrap();
        assert_ne!(a.trials, c.trials);
    }

    #[test]
    fn histogram_rows_sum_to_edge_count() {
        let e = ens("0.5y + 0.5y^4", "y^5", 2);
        let x = run_experiment(&e, 300, 0.45, 3, 100, 1).unwrap();
        for t in &x.trials {
            for h in &t.trace.histograms {
                assert_eq!(h.iter().sum::<usize>(), t.trace.n_edges);
            }
        }
        let mut buf = Vec::new();
        x.write_histogram_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# seed=1 "));
        assert!(text.lines().nth(1) == Some("iter,dim,count"));
    }
}
