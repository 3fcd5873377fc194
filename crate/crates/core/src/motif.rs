//! Fixed-width sequence motif model with a tied background.
//!
//! A peptide belongs to exactly one of `k` motif classes. Its motif starts at
//! a uniformly chosen position and is fully expressed; every residue outside
//! the motif window is drawn from a single background distribution shared by
//! all classes. With `k = 0` the model reduces to background only.
//!
//! Training alternates Gibbs sampling of (class, start) for every peptide with
//! one projected, L1-regularized, per-coordinate adaptive gradient step on each
//! categorical distribution.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qspr::log_sum_exp;
use crate::rng::{self, StageRng};
use crate::seq::{Peptide, PeptideDataset, AMINO_ACIDS};

pub const ALPHABET_SIZE: usize = AMINO_ACIDS.len();
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_NOISE: f64 = 0.05;
pub const DEFAULT_ITERATIONS: usize = 1000;
pub const SGD_EPSILON: f64 = 1e-8;
/// Probabilities are floored here before taking logs, so sparse
/// distributions never make a sequence impossible.
pub const PROB_FLOOR: f64 = 1e-12;
/// Residues at or above this probability appear in a motif pattern.
pub const PATTERN_THRESHOLD: f64 = 0.1;

const INIT_JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifHyper {
    pub lambda: f64,
    pub noise: f64,
    /// When false the class prior stays uniform.
    pub train_prior: bool,
}

impl Default for MotifHyper {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            noise: DEFAULT_NOISE,
            train_prior: true,
        }
    }
}

/// Squared-gradient accumulators, one vector per trainable distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    pub motifs: Vec<Vec<Vec<f64>>>,
    pub background: Vec<f64>,
    pub prior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifModel {
    pub k: usize,
    pub width: usize,
    pub hyper: MotifHyper,
    pub seed: u64,
    /// Training sweeps applied so far.
    pub iterations: usize,
    pub background: Vec<f64>,
    pub prior: Vec<f64>,
    /// `motifs[m][j]` is the residue distribution at position `j` of motif `m`.
    pub motifs: Vec<Vec<Vec<f64>>>,
    pub accumulators: Accumulators,
    /// Loss summed over distributions, one entry per sweep.
    #[serde(default)]
    pub trace: Vec<f64>,
    /// Updates that clipped to the zero vector and were reset to uniform.
    #[serde(default)]
    pub resets: usize,
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

impl MotifModel {
    /// Uniform background and prior; motif positions start near uniform with
    /// seeded jitter so classes and positions can separate.
    pub fn new(k: usize, width: usize, hyper: MotifHyper, seed: u64) -> Result<Self> {
        if (k == 0) != (width == 0) {
            return Err(Error::invalid(format!(
                "motif width must be 0 exactly when there are no motifs (k = {k}, w = {width})"
            )));
        }
        if !(hyper.lambda >= 0.0 && hyper.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&hyper.noise) {
            return Err(Error::invalid("noise probability must be in [0, 1]"));
        }
        let mut rng = rng::stream(seed, "motif-init");
        let motifs: Vec<Vec<Vec<f64>>> = (0..k)
            .map(|_| {
                (0..width)
                    .map(|_| {
                        let raw: Vec<f64> = (0..ALPHABET_SIZE)
                            .map(|_| 1.0 + INIT_JITTER * rng.random::<f64>())
                            .collect();
                        let z: f64 = raw.iter().sum();
                        raw.into_iter().map(|v| v / z).collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            k,
            width,
            hyper,
            seed,
            iterations: 0,
            background: uniform(ALPHABET_SIZE),
            prior: if k == 0 { Vec::new() } else { uniform(k) },
            accumulators: Accumulators {
                motifs: vec![vec![vec![0.0; ALPHABET_SIZE]; width]; k],
                background: vec![0.0; ALPHABET_SIZE],
                prior: vec![0.0; k],
            },
            motifs,
            trace: Vec::new(),
            resets: 0,
        })
    }

    pub fn background_only() -> Self {
        Self::new(0, 0, MotifHyper::default(), 0).expect("valid shape")
    }

    /// Number of trainable residue distributions: `k * w` motif positions plus
    /// the one tied background.
    pub fn trainable_distributions(&self) -> usize {
        self.k * self.width + 1
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("malformed motif model: {what}")));
        if (self.k == 0) != (self.width == 0) {
            return bad("width must be 0 exactly when k = 0");
        }
        let simplex = |v: &[f64], n: usize| {
            v.len() == n && v.iter().all(|&p| p >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        };
        if !simplex(&self.background, ALPHABET_SIZE) {
            return bad("background is not a distribution over the alphabet");
        }
        if self.k > 0 && !simplex(&self.prior, self.k) {
            return bad("class prior is not a distribution over the motifs");
        }
        if self.motifs.len() != self.k
            || self
                .motifs
                .iter()
                .any(|m| m.len() != self.width || m.iter().any(|p| !simplex(p, ALPHABET_SIZE)))
        {
            return bad("motif tensor has the wrong shape or a non-distribution row");
        }
        Ok(())
    }

    fn check_length(&self, p: &Peptide) -> Result<()> {
        if self.k > 0 && p.len() < self.width {
            return Err(Error::invalid(format!(
                "peptide {p} (length {}) is shorter than the motif width {}",
                p.len(),
                self.width
            )));
        }
        Ok(())
    }
}

fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Log-space copies of the model's distributions.
struct LogTables {
    background: Vec<f64>,
    prior: Vec<f64>,
    /// `motif_ratio[m][j][a] = ln θ[m][j](a) - ln φ(a)`.
    motif_ratio: Vec<Vec<Vec<f64>>>,
}

impl LogTables {
    fn new(model: &MotifModel) -> Self {
        let background: Vec<f64> = model.background.iter().map(|&p| floored_ln(p)).collect();
        let motif_ratio = model
            .motifs
            .iter()
            .map(|m| {
                m.iter()
                    .map(|pos| {
                        pos.iter()
                            .zip(&background)
                            .map(|(&p, &lb)| floored_ln(p) - lb)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            background,
            prior: model.prior.iter().map(|&p| floored_ln(p)).collect(),
            motif_ratio,
        }
    }

    fn background_total(&self, p: &Peptide) -> f64 {
        p.residues().iter().map(|&r| self.background[r as usize]).sum()
    }

    /// Log of the (class, start) term, row-major over classes then 0-based starts.
    fn window_terms(&self, p: &Peptide, width: usize) -> Vec<f64> {
        let s = p.residues();
        let starts = s.len() - width + 1;
        let base = self.background_total(p) - (starts as f64).ln();
        let mut terms = Vec::with_capacity(self.prior.len() * starts);
        for (m, ratio) in self.motif_ratio.iter().enumerate() {
            for i in 0..starts {
                let window: f64 = (0..width).map(|j| ratio[j][s[i + j] as usize]).sum();
                terms.push(self.prior[m] + base + window);
            }
        }
        terms
    }

    /// Per class, `ln π_m + ln Σ_i Π_j θ/φ`; shared factors are dropped.
    fn class_scores(&self, p: &Peptide, width: usize) -> Vec<f64> {
        let s = p.residues();
        let starts = s.len() - width + 1;
        self.motif_ratio
            .iter()
            .enumerate()
            .map(|(m, ratio)| {
                let windows =
                    (0..starts).map(|i| (0..width).map(|j| ratio[j][s[i + j] as usize]).sum::<f64>());
                self.prior[m] + log_sum_exp(windows)
            })
            .collect()
    }
}

pub fn seq_log_likelihood(model: &MotifModel, p: &Peptide) -> Result<f64> {
    model.check_length(p)?;
    let tables = LogTables::new(model);
    if model.k == 0 {
        return Ok(tables.background_total(p));
    }
    let terms = tables.window_terms(p, model.width);
    Ok(log_sum_exp(terms.iter().copied()))
}

/// A sampled motif placement. `start` is 1-based and present iff `class` is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub class: Option<usize>,
    pub start: Option<usize>,
}

fn sample_log_weights<R: Rng>(terms: &[f64], rng: &mut R) -> usize {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = terms.iter().map(|&t| (t - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (idx, &w) in weights.iter().enumerate() {
        if u < w {
            return idx;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn assign_with<R: Rng>(tables: &LogTables, model: &MotifModel, p: &Peptide, rng: &mut R) -> Assignment {
    if model.k == 0 {
        return Assignment { class: None, start: None };
    }
    let terms = tables.window_terms(p, model.width);
    let starts = p.len() - model.width + 1;
    let idx = sample_log_weights(&terms, rng);
    Assignment {
        class: Some(idx / starts),
        start: Some(idx % starts + 1),
    }
}

/// Draw (class, start) from its exact conditional given the sequence.
pub fn gibbs_assign<R: Rng>(model: &MotifModel, p: &Peptide, rng: &mut R) -> Result<Assignment> {
    model.check_length(p)?;
    Ok(assign_with(&LogTables::new(model), model, p, rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    /// Accumulated squared gradients, one per coordinate.
    pub g2: Vec<f64>,
    pub lambda: f64,
    pub noise: f64,
    pub eps: f64,
}

impl SgdState {
    pub fn new(dim: usize, lambda: f64, noise: f64) -> Self {
        Self {
            g2: vec![0.0; dim],
            lambda,
            noise,
            eps: SGD_EPSILON,
        }
    }

    fn with_history(g2: Vec<f64>, hyper: &MotifHyper) -> Self {
        Self {
            g2,
            lambda: hyper.lambda,
            noise: hyper.noise,
            eps: SGD_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdStep {
    pub x: Vec<f64>,
    pub gradient: Vec<f64>,
    /// Loss at the pre-update point.
    pub loss: f64,
    /// Clipping left nothing and the vector was reset to uniform.
    pub reset: bool,
}

/// `Σ (N·X - m)² + λ Σ |X_c|`.
pub fn sgd_loss(x: &[f64], m_obs: &[f64], n: f64, lambda: f64) -> f64 {
    x.iter()
        .zip(m_obs)
        .map(|(&xc, &mc)| (n * xc - mc).powi(2) + lambda * xc.abs())
        .sum()
}

/// `2N(N·X - m) + λ`, the derivative of [`sgd_loss`] on the positive orthant.
pub fn sgd_gradient(x: &[f64], m_obs: &[f64], n: f64, lambda: f64) -> Vec<f64> {
    x.iter()
        .zip(m_obs)
        .map(|(&xc, &mc)| 2.0 * n * (n * xc - mc) + lambda)
        .collect()
}

/// Clip negatives to zero and renormalize. Returns true if everything clipped
/// and `x` was reset to uniform.
pub fn project_to_simplex(x: &mut [f64]) -> bool {
    for v in x.iter_mut() {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    if total > 0.0 && total.is_finite() {
        x.iter_mut().for_each(|v| *v /= total);
        false
    } else {
        let u = 1.0 / x.len() as f64;
        x.iter_mut().for_each(|v| *v = u);
        true
    }
}

/// One projected adaptive-gradient step on a categorical distribution.
pub fn sgd_update<R: Rng>(
    x: &[f64],
    m_obs: &[f64],
    n: f64,
    state: &mut SgdState,
    rng: &mut R,
) -> Result<SgdStep> {
    if x.is_empty() || x.len() != m_obs.len() || x.len() != state.g2.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: x {}, counts {}, accumulators {}",
            x.len(),
            m_obs.len(),
            state.g2.len()
        )));
    }
    if !(n >= 1.0) {
        return Err(Error::invalid(format!("observation total must be >= 1, got {n}")));
    }
    if m_obs.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::invalid("observed counts must be nonnegative"));
    }
    let mut m = m_obs.to_vec();
    if state.noise > 0.0 && rng.random::<f64>() < state.noise {
        let c = rng.random_range(0..m.len());
        m[c] += 1.0;
    }
    let loss = sgd_loss(x, &m, n, state.lambda);
    let gradient = sgd_gradient(x, &m, n, state.lambda);
    let mut next: Vec<f64> = x
        .iter()
        .zip(&gradient)
        .zip(&state.g2)
        .map(|((&xc, &g), &acc)| {
            let denom = (acc + g * g + state.eps).sqrt();
            if denom > 0.0 {
                xc - g / denom
            } else {
                xc
            }
        })
        .collect();
    for (acc, g) in state.g2.iter_mut().zip(&gradient) {
        *acc += g * g;
    }
    let reset = project_to_simplex(&mut next);
    Ok(SgdStep {
        x: next,
        gradient,
        loss,
        reset,
    })
}

/// Observed counts from one sweep of assignments.
struct SweepCounts {
    motifs: Vec<Vec<Vec<f64>>>,
    background: Vec<f64>,
    classes: Vec<f64>,
}

impl SweepCounts {
    fn new(k: usize, width: usize) -> Self {
        Self {
            motifs: vec![vec![vec![0.0; ALPHABET_SIZE]; width]; k],
            background: vec![0.0; ALPHABET_SIZE],
            classes: vec![0.0; k],
        }
    }

    fn add(&mut self, p: &Peptide, a: Assignment, width: usize) {
        let s = p.residues();
        match (a.class, a.start) {
            (Some(m), Some(start)) => {
                let i0 = start - 1;
                self.classes[m] += 1.0;
                for (idx, &r) in s.iter().enumerate() {
                    if (i0..i0 + width).contains(&idx) {
                        self.motifs[m][idx - i0][r as usize] += 1.0;
                    } else {
                        self.background[r as usize] += 1.0;
                    }
                }
            }
            _ => s.iter().for_each(|&r| self.background[r as usize] += 1.0),
        }
    }
}

/// Stream for the assignment of peptide `n` in sweep `t`.
fn gibbs_stream(seed: u64, t: usize, n: usize) -> StageRng {
    rng::indexed_stream(rng::derive_indexed(seed, "motif-gibbs", t as u64), "peptide", n as u64)
}

/// Stream for the update of distribution `d` in sweep `t`.
fn sgd_stream(seed: u64, t: usize, d: usize) -> StageRng {
    rng::indexed_stream(rng::derive_indexed(seed, "motif-sgd", t as u64), "distribution", d as u64)
}

/// Run `iterations` Gibbs/SGD sweeps over `data`, seeded by the model's seed.
/// Counts are accumulated over a full sweep, then each distribution with at
/// least one observation takes one step.
pub fn train_motif(model: &MotifModel, data: &PeptideDataset, iterations: usize) -> Result<MotifModel> {
    if data.is_empty() {
        return Err(Error::Empty("motif training needs at least one peptide".into()));
    }
    for p in data.peptides() {
        model.check_length(p)?;
    }
    let mut model = model.clone();
    let (k, w) = (model.k, model.width);
    for _ in 0..iterations {
        let t = model.iterations;
        let tables = LogTables::new(&model);
        let mut counts = SweepCounts::new(k, w);
        for (n, p) in data.peptides().enumerate() {
            let a = assign_with(&tables, &model, p, &mut gibbs_stream(model.seed, t, n));
            counts.add(p, a, w);
        }

        let hyper = model.hyper;
        let mut loss = 0.0;
        let mut resets = 0;
        let mut step = |x: &mut Vec<f64>, g2: &mut Vec<f64>, obs: &[f64], d: usize| -> Result<()> {
            let total: f64 = obs.iter().sum();
            if total < 1.0 {
                return Ok(());
            }
            let mut state = SgdState::with_history(std::mem::take(g2), &hyper);
            let out = sgd_update(x, obs, total, &mut state, &mut sgd_stream(model.seed, t, d))?;
            *g2 = state.g2;
            *x = out.x;
            loss += out.loss;
            resets += usize::from(out.reset);
            Ok(())
        };
        for m in 0..k {
            for j in 0..w {
                step(
                    &mut model.motifs[m][j],
                    &mut model.accumulators.motifs[m][j],
                    &counts.motifs[m][j],
                    m * w + j,
                )?;
            }
        }
        step(
            &mut model.background,
            &mut model.accumulators.background,
            &counts.background,
            k * w,
        )?;
        if k > 0 && hyper.train_prior {
            step(
                &mut model.prior,
                &mut model.accumulators.prior,
                &counts.classes,
                k * w + 1,
            )?;
        }
        model.trace.push(loss);
        model.resets += resets;
        model.iterations += 1;
    }
    Ok(model)
}

/// Class whose motif best explains the sequence; ties go to the lowest index.
pub fn best_motif(model: &MotifModel, p: &Peptide) -> Result<usize> {
    if model.k == 0 {
        return Err(Error::invalid("best motif is undefined for a background-only model"));
    }
    model.check_length(p)?;
    let scores = LogTables::new(model).class_scores(p, model.width);
    let mut best = 0;
    for (m, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = m;
        }
    }
    Ok(best)
}

/// Sequences containing `motif` as a contiguous substring.
pub fn count_containing(data: &PeptideDataset, motif: &str) -> Result<usize> {
    let motif = motif.trim().to_ascii_uppercase();
    if motif.is_empty() {
        return Err(Error::invalid("motif string must be nonempty"));
    }
    Ok(data.peptides().filter(|p| p.as_str().contains(&motif)).count())
}

/// Most probable residue at each motif position; ties go to alphabet order.
pub fn consensus(model: &MotifModel, m: usize) -> String {
    model.motifs[m]
        .iter()
        .map(|pos| {
            let mut best = 0;
            for (a, &p) in pos.iter().enumerate() {
                if p > pos[best] {
                    best = a;
                }
            }
            AMINO_ACIDS[best] as char
        })
        .collect()
}

/// Per position, residues with probability >= [`PATTERN_THRESHOLD`] in
/// decreasing order, bracketed when there is more than one (`[LK][LK][CP]`).
pub fn pattern(model: &MotifModel, m: usize) -> String {
    model.motifs[m]
        .iter()
        .map(|pos| {
            let mut picks: Vec<usize> = (0..pos.len()).filter(|&a| pos[a] >= PATTERN_THRESHOLD).collect();
            if picks.is_empty() {
                picks.push(consensus_index(pos));
            }
            picks.sort_by(|&a, &b| pos[b].total_cmp(&pos[a]).then(a.cmp(&b)));
            let letters: String = picks.iter().map(|&a| AMINO_ACIDS[a] as char).collect();
            if picks.len() == 1 {
                letters
            } else {
                format!("[{letters}]")
            }
        })
        .collect()
}

fn consensus_index(pos: &[f64]) -> usize {
    (0..pos.len()).fold(0, |best, a| if pos[a] > pos[best] { a } else { best })
}

/// Mean over motif positions of the largest entry.
pub fn mean_top_probability(model: &MotifModel) -> f64 {
    let tops: Vec<f64> = model
        .motifs
        .iter()
        .flatten()
        .map(|pos| pos.iter().copied().fold(0.0, f64::max))
        .collect();
    if tops.is_empty() {
        return f64::NAN;
    }
    tops.iter().sum::<f64>() / tops.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifReportRow {
    pub motif: usize,
    pub consensus: String,
    pub pattern: String,
    /// Peptides for which this motif is the best explanation.
    pub predict: usize,
    /// Peptides containing the consensus string verbatim.
    pub found: usize,
}

pub fn motif_report(model: &MotifModel, data: &PeptideDataset) -> Result<Vec<MotifReportRow>> {
    if model.k == 0 {
        return Ok(Vec::new());
    }
    let mut predict = vec![0usize; model.k];
    for p in data.peptides() {
        predict[best_motif(model, p)?] += 1;
    }
    (0..model.k)
        .map(|m| {
            let c = consensus(model, m);
            Ok(MotifReportRow {
                motif: m,
                found: count_containing(data, &c)?,
                pattern: pattern(model, m),
                consensus: c,
                predict: predict[m],
            })
        })
        .collect()
}

/// Synthetic peptides: `motif` with 0..=`max_flank` uniform residues on each side.
pub fn imposed_motif_dataset(motif: &str, n: usize, max_flank: usize, seed: u64) -> Result<PeptideDataset> {
    let core = Peptide::new(motif)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::indexed_stream(seed, "imposed-motif", i as u64);
        let flank = |rng: &mut StageRng| -> Vec<u8> {
            let len = rng.random_range(0..=max_flank);
            (0..len).map(|_| rng.random_range(0..ALPHABET_SIZE) as u8).collect()
        };
        let mut residues = flank(&mut rng);
        residues.extend_from_slice(core.residues());
        residues.extend(flank(&mut rng));
        out.push(Peptide::from_indices(residues)?);
    }
    Ok(PeptideDataset::from_peptides(out).with_provenance("imposed-motif"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_hot(letter: u8, hot: f64) -> Vec<f64> {
        let idx = AMINO_ACIDS.iter().position(|&b| b == letter).unwrap();
        let rest = (1.0 - hot) / (ALPHABET_SIZE - 1) as f64;
        (0..ALPHABET_SIZE).map(|a| if a == idx { hot } else { rest }).collect()
    }

    fn with_motifs(motifs: &[&str], hot: f64) -> MotifModel {
        let w = motifs[0].len();
        let mut m = MotifModel::new(motifs.len(), w, MotifHyper::default(), 1).unwrap();
        m.motifs = motifs
            .iter()
            .map(|s| s.bytes().map(|b| one_hot(b, hot)).collect())
            .collect();
        m
    }

    fn random_model(k: usize, w: usize, seed: u64) -> MotifModel {
        let mut rng = rng::stream(seed, "test-model");
        let mut dist = |n: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / z).collect()
        };
        let mut m = MotifModel::new(k, w, MotifHyper::default(), seed).unwrap();
        m.background = dist(ALPHABET_SIZE);
        if k > 0 {
            m.prior = dist(k);
        }
        m.motifs = (0..k).map(|_| (0..w).map(|_| dist(ALPHABET_SIZE)).collect()).collect();
        m
    }

    /// Direct probability-space sum over every (class, start).
    fn brute_force_terms(model: &MotifModel, p: &Peptide) -> Vec<f64> {
        let s = p.residues();
        let starts = s.len() - model.width + 1;
        let mut out = Vec::new();
        for m in 0..model.k {
            for i in 0..starts {
                let mut prod = model.prior[m] / starts as f64;
                for (j, &r) in s.iter().enumerate() {
                    prod *= if (i..i + model.width).contains(&j) {
                        model.motifs[m][j - i][r as usize]
                    } else {
                        model.background[r as usize]
                    };
                }
                out.push(prod);
            }
        }
        out
    }

    fn random_peptide(len: usize, seed: u64) -> Peptide {
        let mut rng = rng::stream(seed, "test-peptide");
        Peptide::from_indices((0..len).map(|_| rng.random_range(0..20u8)).collect()).unwrap()
    }

    #[test]
    fn shape_rules() {
        assert!(MotifModel::new(0, 3, MotifHyper::default(), 0).is_err());
        assert!(MotifModel::new(2, 0, MotifHyper::default(), 0).is_err());
        let m = MotifModel::new(3, 4, MotifHyper::default(), 0).unwrap();
        assert_eq!(m.trainable_distributions(), 13);
        assert_eq!(MotifModel::background_only().trainable_distributions(), 1);
        m.validate().unwrap();
    }

    #[test]
    fn background_only_uniform_likelihood() {
        let m = MotifModel::background_only();
        let p = Peptide::new("GLWSKIKEAG").unwrap();
        let ll = seq_log_likelihood(&m, &p).unwrap();
        assert!((ll - 10.0 * (1.0f64 / 20.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn background_only_is_sum_of_logs() {
        let mut m = random_model(0, 0, 4);
        m.background[3] = 0.2;
        let z: f64 = m.background.iter().sum();
        m.background.iter_mut().for_each(|v| *v /= z);
        let p = random_peptide(9, 2);
        let direct: f64 = p.residues().iter().map(|&r| m.background[r as usize].ln()).sum();
        assert_eq!(seq_log_likelihood(&m, &p).unwrap(), direct);
    }

    #[test]
    fn single_window_likelihood() {
        let m = random_model(1, 5, 7);
        let p = random_peptide(5, 8);
        let direct: f64 = (0..5).map(|j| m.motifs[0][j][p.residues()[j] as usize].ln()).sum();
        assert!((seq_log_likelihood(&m, &p).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn too_short_is_an_error() {
        let m = random_model(1, 5, 7);
        assert!(seq_log_likelihood(&m, &Peptide::new("GLL").unwrap()).is_err());
        assert!(gibbs_assign(&m, &Peptide::new("GLL").unwrap(), &mut rng::stream(0, "x")).is_err());
    }

    #[test]
    fn full_width_start_is_first() {
        let m = random_model(1, 6, 3);
        let p = random_peptide(6, 5);
        let mut r = rng::stream(9, "g");
        for _ in 0..50 {
            let a = gibbs_assign(&m, &p, &mut r).unwrap();
            assert_eq!(a, Assignment { class: Some(0), start: Some(1) });
        }
    }

    #[test]
    fn one_hot_window_dominates() {
        let m = with_motifs(&["GLL", "WWW"], 0.999);
        let p = Peptide::new("AKGLLTE").unwrap();
        let mut r = rng::stream(11, "g");
        let draws = 10_000;
        let hits = (0..draws)
            .filter(|_| {
                gibbs_assign(&m, &p, &mut r).unwrap()
                    == Assignment { class: Some(0), start: Some(3) }
            })
            .count();
        assert!(hits as f64 / draws as f64 >= 0.99, "{hits}");
    }

    #[test]
    fn assignment_frequencies_match_conditional() {
        let m = random_model(2, 3, 21);
        let p = random_peptide(6, 22);
        let exact = brute_force_terms(&m, &p);
        let z: f64 = exact.iter().sum();
        let starts = p.len() - m.width + 1;
        let mut freq = vec![0usize; exact.len()];
        let mut r = rng::stream(23, "g");
        let draws = 100_000;
        for _ in 0..draws {
            let a = gibbs_assign(&m, &p, &mut r).unwrap();
            freq[a.class.unwrap() * starts + a.start.unwrap() - 1] += 1;
        }
        for (f, e) in freq.iter().zip(&exact) {
            assert!((*f as f64 / draws as f64 - e / z).abs() <= 0.01);
        }
    }

    #[test]
    fn gibbs_is_deterministic_per_stream() {
        let m = random_model(3, 2, 5);
        let p = random_peptide(8, 6);
        let a: Vec<_> = (0..20).map(|_| 0).map(|_| gibbs_assign(&m, &p, &mut rng::stream(4, "s")).unwrap()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn sgd_fixed_point() {
        let x = vec![0.2, 0.3, 0.5];
        let m: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        let mut s = SgdState::new(3, 0.0, 0.0);
        let out = sgd_update(&x, &m, 10.0, &mut s, &mut rng::stream(0, "s")).unwrap();
        assert_eq!(out.x, x);
        assert!(out.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sgd_hand_example() {
        let mut s = SgdState::new(2, 0.0, 0.0);
        s.eps = 0.0;
        let out = sgd_update(&[0.5, 0.5], &[1.0, 0.0], 1.0, &mut s, &mut rng::stream(0, "s")).unwrap();
        assert_eq!(out.gradient, vec![-1.0, 1.0]);
        assert_eq!(out.x, vec![1.0, 0.0]);
        assert_eq!(s.g2, vec![1.0, 1.0]);
        assert!(!out.reset);
    }

    #[test]
    fn sgd_gradient_matches_finite_differences() {
        let x = [0.1, 0.25, 0.3, 0.35];
        let m = [2.0, 1.0, 4.0, 0.0];
        let (n, lambda) = (7.0, 1.5);
        let g = sgd_gradient(&x, &m, n, lambda);
        let h = 1e-6;
        for c in 0..x.len() {
            let mut up = x;
            let mut down = x;
            up[c] += h;
            down[c] -= h;
            let fd = (sgd_loss(&up, &m, n, lambda) - sgd_loss(&down, &m, n, lambda)) / (2.0 * h);
            assert!((fd - g[c]).abs() < 1e-6 * g[c].abs().max(1.0), "{c}: {fd} vs {}", g[c]);
        }
    }

    #[test]
    fn sgd_rejects_bad_input() {
        let mut s = SgdState::new(2, 0.0, 0.0);
        let r = &mut rng::stream(0, "s");
        assert!(sgd_update(&[0.5, 0.5], &[1.0, 0.0], 0.0, &mut s, r).is_err());
        assert!(sgd_update(&[0.5, 0.5], &[-1.0, 0.0], 1.0, &mut s, r).is_err());
        assert!(sgd_update(&[0.5, 0.5], &[1.0], 1.0, &mut s, r).is_err());
    }

    #[test]
    fn projection_resets_zero_vector() {
        let mut x = vec![-1.0, 0.0, -0.5];
        assert!(project_to_simplex(&mut x));
        assert_eq!(x, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn best_motif_cases() {
        let single = random_model(1, 3, 8);
        for s in 0..10 {
            assert_eq!(best_motif(&single, &random_peptide(7, s)).unwrap(), 0);
        }
        let m = with_motifs(&["GLL", "WKW", "CPC"], 0.95);
        let p = Peptide::new("AACPCAA").unwrap();
        assert_eq!(best_motif(&m, &p).unwrap(), 2);
        let flanked = Peptide::new("TSAACPCAAET").unwrap();
        assert_eq!(best_motif(&m, &flanked).unwrap(), 2);
        assert!(best_motif(&MotifModel::background_only(), &p).is_err());
    }

    #[test]
    fn best_motif_ties_go_low() {
        let m = with_motifs(&["GLL", "GLL"], 0.9);
        assert_eq!(best_motif(&m, &Peptide::new("AGLLA").unwrap()).unwrap(), 0);
    }

    #[test]
    fn counting_substrings() {
        let d = PeptideDataset::from_sequences(&["AGLLA", "GLL", "AAA"]).unwrap();
        assert_eq!(count_containing(&d, "GLL").unwrap(), 2);
        assert_eq!(count_containing(&d, "GLLGLLGLL").unwrap(), 0);
        assert_eq!(count_containing(&d, "AAA").unwrap(), 1);
        assert!(count_containing(&d, "").is_err());
    }

    #[test]
    fn zero_iterations_is_identity() {
        let m = MotifModel::new(1, 4, MotifHyper::default(), 3).unwrap();
        let d = imposed_motif_dataset("ARND", 20, 3, 1).unwrap();
        assert_eq!(train_motif(&m, &d, 0).unwrap(), m);
    }

    #[test]
    fn training_errors() {
        let m = MotifModel::new(1, 4, MotifHyper::default(), 3).unwrap();
        assert!(train_motif(&m, &PeptideDataset::from_peptides(Vec::new()), 5).is_err());
        let short = PeptideDataset::from_sequences(&["ARN"]).unwrap();
        assert!(train_motif(&m, &short, 5).is_err());
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let d = imposed_motif_dataset("ARND", 40, 3, 2).unwrap();
        let m = MotifModel::new(2, 4, MotifHyper::default(), 9).unwrap();
        let a = train_motif(&m, &d, 30).unwrap();
        let b = train_motif(&m, &d, 30).unwrap();
        assert_eq!(a, b);
        let split = train_motif(&train_motif(&m, &d, 10).unwrap(), &d, 20).unwrap();
        assert_eq!(split, a);
        assert_eq!(a.trace.len(), 30);
        a.validate().unwrap();
    }

    #[test]
    fn mixed_lengths_background_only() {
        let d = PeptideDataset::from_sequences(&["GLW", "KKKKKKKK", "A"]).unwrap();
        let m = train_motif(&MotifModel::background_only(), &d, 50).unwrap();
        m.validate().unwrap();
        let k = AMINO_ACIDS.iter().position(|&b| b == b'K').unwrap();
        assert!(m.background[k] > 0.3);
    }

    #[test]
    fn uniform_prior_mode_keeps_prior() {
        let d = imposed_motif_dataset("ARND", 30, 2, 5).unwrap();
        let hyper = MotifHyper { train_prior: false, ..MotifHyper::default() };
        let m = train_motif(&MotifModel::new(3, 4, hyper, 1).unwrap(), &d, 20).unwrap();
        assert_eq!(m.prior, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn json_round_trip() {
        let d = imposed_motif_dataset("ARND", 20, 2, 5).unwrap();
        let m = train_motif(&MotifModel::new(2, 4, MotifHyper::default(), 1).unwrap(), &d, 15).unwrap();
        let back: MotifModel = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn report_strings() {
        let mut m = with_motifs(&["GLL"], 0.95);
        let l = AMINO_ACIDS.iter().position(|&b| b == b'L').unwrap();
        let k = AMINO_ACIDS.iter().position(|&b| b == b'K').unwrap();
        m.motifs[0][0] = vec![0.0; 20];
        m.motifs[0][0][l] = 0.6;
        m.motifs[0][0][k] = 0.4;
        assert_eq!(consensus(&m, 0), "LLL");
        assert_eq!(pattern(&m, 0), "[LK]LL");
        let d = PeptideDataset::from_sequences(&["ALLLA", "KLLW", "WWWW"]).unwrap();
        let rows = motif_report(&m, &d).unwrap();
        assert_eq!(rows[0].found, 1);
        assert_eq!(rows[0].predict, 3);
    }

    #[test]
    fn recovers_imposed_motif() {
        let d = imposed_motif_dataset("ARND", 200, 6, 100).unwrap();
        let m = train_motif(&MotifModel::new(1, 4, MotifHyper::default(), 0).unwrap(), &d, 1000).unwrap();
        assert_eq!(consensus(&m, 0), "ARND");
        for pos in &m.motifs[0] {
            assert!(pos.iter().copied().fold(0.0, f64::max) >= 0.8);
        }
    }

    #[test]
    fn stronger_l1_is_sparser() {
        let (mut weak, mut strong) = (0.0, 0.0);
        for seed in 0..4u64 {
            let d = imposed_motif_dataset("ARND", 200, 6, 100 + seed).unwrap();
            for iters in [10, 20, 50, 100] {
                let run = |lambda: f64| {
                    let hyper = MotifHyper { lambda, ..MotifHyper::default() };
                    let m = MotifModel::new(1, 4, hyper, seed).unwrap();
                    mean_top_probability(&train_motif(&m, &d, iters).unwrap())
                };
                let (a, b) = (run(0.0), run(10.0 * DEFAULT_LAMBDA));
                assert!(b >= a, "seed {seed}, {iters} sweeps: {b} < {a}");
                weak += a;
                strong += b;
            }
        }
        assert!(strong > weak);
    }

    proptest! {
        #[test]
        fn likelihood_matches_enumeration(k in 1usize..4, w in 1usize..4, extra in 0usize..4, seed in 0u64..1000) {
            let m = random_model(k, w, seed);
            let p = random_peptide(w + extra, seed + 1);
            let brute: f64 = brute_force_terms(&m, &p).iter().sum();
            let ll = seq_log_likelihood(&m, &p).unwrap();
            prop_assert!((ll.exp() - brute).abs() <= 1e-10 * brute.max(1e-300).max(1.0) );
            prop_assert!((ll - brute.ln()).abs() < 1e-9);
        }

        #[test]
        fn updates_stay_on_simplex(
            raw in proptest::collection::vec(0.01f64..1.0, 2..8),
            counts in proptest::collection::vec(0u32..20, 8),
            lambda in 0.0f64..50.0,
            steps in 1usize..20,
            seed in 0u64..1000,
        ) {
            let z: f64 = raw.iter().sum();
            let mut x: Vec<f64> = raw.iter().map(|v| v / z).collect();
            let m: Vec<f64> = counts[..x.len()].iter().map(|&c| f64::from(c)).collect();
            let n = m.iter().sum::<f64>().max(1.0);
            let mut s = SgdState::new(x.len(), lambda, 0.5);
            let mut r = rng::stream(seed, "p");
            let mut prev = s.g2.clone();
            for _ in 0..steps {
                x = sgd_update(&x, &m, n, &mut s, &mut r).unwrap().x;
                prop_assert!(x.iter().all(|&v| v >= 0.0));
                prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(s.g2.iter().zip(&prev).all(|(a, b)| a >= b));
                prev = s.g2.clone();
            }
        }

        #[test]
        fn appending_plain_flanks_keeps_best(seed in 0u64..500) {
            let m = with_motifs(&["GLL", "WKW", "CPC"], 0.95);
            let left = random_peptide(3, seed).as_str().replace(['G','L','W','K','C','P'], "A");
            let p = Peptide::new(&format!("{left}WKW{left}")).unwrap();
            prop_assert_eq!(best_motif(&m, &p).unwrap(), 1);
        }
    }
}
