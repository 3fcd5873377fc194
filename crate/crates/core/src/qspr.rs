//! Two-state, per-descriptor Gaussian mixture classifier over rank vectors.
//!
//! State 1 models active peptides and state 0 inactive ones (decoys). Each
//! descriptor gets its own one-dimensional mixture of `k` Gaussian kernels in
//! each state, with no correlation between descriptors, so the likelihood of a
//! rank vector is a product over descriptors.
//!
//! Training is random-walk Metropolis over kernel means, log standard
//! deviations and additive-log-ratio weight coordinates. Priors: means uniform
//! on `[0, Q]`, standard deviations log-uniform on `[0.1, Q]`, weights
//! Dirichlet(1). The returned parameters are the posterior mean over the
//! second half of the chain.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chemspace::{RankVector, DEFAULT_QUANTILES};
use crate::error::{Error, Result};
use crate::rng::{self, StageRng};

pub const MAX_KERNELS: usize = 10;
pub const DEFAULT_STEPS: usize = 3000;
pub const MIN_SD: f64 = 0.1;

/// Random-walk step sizes.
pub const MEAN_STEP: f64 = 2.0;
pub const LOG_SD_STEP: f64 = 0.1;
pub const LOGIT_STEP: f64 = 0.1;

const INIT_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub mean: f64,
    pub sd: f64,
    pub weight: f64,
}

impl GaussianKernel {
    fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - 0.5 * (2.0 * PI).ln()
    }
}

pub fn mixture_pdf(kernels: &[GaussianKernel], x: f64) -> f64 {
    kernels.iter().map(|k| k.weight * k.log_density(x).exp()).sum()
}

/// `ln mixture_pdf`, evaluated with a max shift so far tails stay finite.
pub fn log_mixture_pdf(kernels: &[GaussianKernel], x: f64) -> f64 {
    log_sum_exp(kernels.iter().map(|k| k.weight.ln() + k.log_density(x)))
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub steps: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub kernels: usize,
    /// Upper end of the rank scale; bounds the priors.
    pub quantiles: u32,
    pub descriptors: Vec<String>,
    /// `states[s][d]` is the mixture of state `s` for descriptor `d`.
    pub states: [Vec<Vec<GaussianKernel>>; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

pub const INACTIVE: usize = 0;
pub const ACTIVE: usize = 1;

impl MixtureModel {
    /// Uniform initialization: means on `[0, Q]`, sds on `(0, Q]`, weights `1/k`.
    pub fn init<S: AsRef<str>>(k: usize, names: &[S], quantiles: u32, seed: u64) -> Result<Self> {
        if !(1..=MAX_KERNELS).contains(&k) {
            return Err(Error::invalid(format!("kernel count must be in 1..={MAX_KERNELS}, got {k}")));
        }
        if names.is_empty() {
            return Err(Error::invalid("mixture model needs at least one descriptor"));
        }
        if quantiles == 0 {
            return Err(Error::invalid("quantile count must be >= 1"));
        }
        let q = f64::from(quantiles);
        let mut rng = rng::stream(seed, "qspr-init");
        let draw = |rng: &mut StageRng| -> Vec<GaussianKernel> {
            (0..k)
                .map(|_| GaussianKernel {
                    mean: rng.random::<f64>() * q,
                    sd: (1.0 - rng.random::<f64>()) * q,
                    weight: 1.0 / k as f64,
                })
                .collect()
        };
        let mut states: [Vec<Vec<GaussianKernel>>; 2] = [Vec::new(), Vec::new()];
        for state in &mut states {
            *state = names.iter().map(|_| draw(&mut rng)).collect();
        }
        Ok(Self {
            kernels: k,
            quantiles,
            descriptors: names.iter().map(|n| n.as_ref().to_string()).collect(),
            states,
            training: None,
        })
    }

    pub fn with_defaults<S: AsRef<str>>(k: usize, names: &[S], seed: u64) -> Result<Self> {
        Self::init(k, names, DEFAULT_QUANTILES, seed)
    }

    pub fn mixture(&self, state: usize, descriptor: usize) -> &[GaussianKernel] {
        &self.states[state][descriptor]
    }

    fn rank_values(&self, r: &RankVector) -> Result<Vec<f64>> {
        self.descriptors
            .iter()
            .map(|n| r.get(n).map(f64::from).ok_or_else(|| Error::MissingDescriptor(n.clone())))
            .collect()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Sum over descriptors of the log mixture density of the rank.
pub fn qspr_log_likelihood(model: &MixtureModel, state: usize, r: &RankVector) -> Result<f64> {
    if state > 1 {
        return Err(Error::invalid("state must be 0 or 1"));
    }
    let values = model.rank_values(r)?;
    Ok(values
        .iter()
        .enumerate()
        .map(|(d, &x)| log_mixture_pdf(model.mixture(state, d), x))
        .sum())
}

/// `ln P(active | r)` under equal state priors.
pub fn qspr_log_score(model: &MixtureModel, r: &RankVector) -> Result<f64> {
    let l0 = qspr_log_likelihood(model, INACTIVE, r)?;
    let l1 = qspr_log_likelihood(model, ACTIVE, r)?;
    Ok(log_posterior_active(l0, l1))
}

fn log_posterior_active(l0: f64, l1: f64) -> f64 {
    match (l0 == f64::NEG_INFINITY, l1 == f64::NEG_INFINITY) {
        (true, true) => 0.5f64.ln(),
        (true, false) => 0.0,
        (false, true) => f64::NEG_INFINITY,
        // -ln(1 + e^d), d = l0 - l1
        (false, false) => {
            let d = l0 - l1;
            if d > 0.0 {
                -d - (-d).exp().ln_1p()
            } else {
                -d.exp().ln_1p()
            }
        }
    }
}

/// Posterior probability of the active state, `L1 / (L0 + L1)`.
pub fn qspr_score(model: &MixtureModel, r: &RankVector) -> Result<f64> {
    let l0 = qspr_log_likelihood(model, INACTIVE, r)?;
    let l1 = qspr_log_likelihood(model, ACTIVE, r)?;
    if l0 == l1 {
        return Ok(0.5);
    }
    Ok(log_posterior_active(l0, l1).exp())
}

/// One Metropolis accept/reject decision for a symmetric proposal.
pub fn metropolis_accept<R: Rng>(current_lp: f64, proposal_lp: f64, rng: &mut R) -> bool {
    if proposal_lp.is_nan() || proposal_lp == f64::NEG_INFINITY {
        return false;
    }
    let u: f64 = rng.random();
    proposal_lp >= current_lp || u.ln() < proposal_lp - current_lp
}

/// Generic random-walk Metropolis chain; returns the states after each
/// step and the acceptance rate.
pub fn random_walk_metropolis<T: Clone, R: Rng>(
    start: T,
    log_target: impl Fn(&T) -> f64,
    mut propose: impl FnMut(&T, &mut R) -> T,
    steps: usize,
    rng: &mut R,
) -> (Vec<T>, f64) {
    let mut x = start;
    let mut lp = log_target(&x);
    let mut accepted = 0usize;
    let mut chain = Vec::with_capacity(steps);
    for _ in 0..steps {
        let y = propose(&x, rng);
        let ly = log_target(&y);
        if metropolis_accept(lp, ly, rng) {
            x = y;
            lp = ly;
            accepted += 1;
        }
        chain.push(x.clone());
    }
    let rate = if steps == 0 { 0.0 } else { accepted as f64 / steps as f64 };
    (chain, rate)
}

/// Unconstrained coordinates of one mixture.
#[derive(Debug, Clone)]
struct MixtureParams {
    means: Vec<f64>,
    log_sds: Vec<f64>,
    /// Additive log-ratios against the last kernel (`k - 1` entries).
    logits: Vec<f64>,
}

impl MixtureParams {
    fn from_kernels(kernels: &[GaussianKernel]) -> Self {
        let last = kernels.last().expect("k >= 1").weight.ln();
        Self {
            means: kernels.iter().map(|k| k.mean).collect(),
            log_sds: kernels.iter().map(|k| k.sd.ln()).collect(),
            logits: kernels[..kernels.len() - 1].iter().map(|k| k.weight.ln() - last).collect(),
        }
    }

    fn weights(&self) -> Vec<f64> {
        let max = self.logits.iter().copied().fold(0.0, f64::max);
        let mut w: Vec<f64> = self.logits.iter().map(|l| (l - max).exp()).collect();
        w.push((-max).exp());
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    }

    fn kernels(&self) -> Vec<GaussianKernel> {
        self.weights()
            .into_iter()
            .enumerate()
            .map(|(j, weight)| GaussianKernel {
                mean: self.means[j],
                sd: self.log_sds[j].exp(),
                weight,
            })
            .collect()
    }
}

/// Log posterior of one mixture in (mean, log-sd, log-ratio) coordinates.
/// The flat priors contribute constants; the weight term is the Jacobian of
/// the log-ratio map, which turns the Dirichlet(1) density into this space.
fn log_posterior(p: &MixtureParams, data: &[f64], q: f64) -> f64 {
    let (lo, hi) = (MIN_SD.ln(), q.ln());
    if p.means.iter().any(|m| !(0.0..=q).contains(m)) || p.log_sds.iter().any(|s| !(lo..=hi).contains(s)) {
        return f64::NEG_INFINITY;
    }
    let kernels = p.kernels();
    let jacobian: f64 = kernels.iter().map(|k| k.weight.ln()).sum();
    data.iter().map(|&x| log_mixture_pdf(&kernels, x)).sum::<f64>() + jacobian
}

struct BlockChain {
    params: MixtureParams,
    lp: f64,
    rng: StageRng,
    accepted: usize,
    proposed: usize,
}

impl BlockChain {
    fn try_move(&mut self, proposal: MixtureParams, data: &[f64], q: f64) {
        let lp = log_posterior(&proposal, data, q);
        self.proposed += 1;
        if metropolis_accept(self.lp, lp, &mut self.rng) {
            self.params = proposal;
            self.lp = lp;
            self.accepted += 1;
        }
    }

    /// One sweep: each mean, then each log-sd, then the weights jointly.
    fn step(&mut self, data: &[f64], q: f64) {
        let k = self.params.means.len();
        for j in 0..k {
            let mut p = self.params.clone();
            p.means[j] += MEAN_STEP * self.rng.sample::<f64, _>(StandardNormal);
            self.try_move(p, data, q);
        }
        for j in 0..k {
            let mut p = self.params.clone();
            p.log_sds[j] += LOG_SD_STEP * self.rng.sample::<f64, _>(StandardNormal);
            self.try_move(p, data, q);
        }
        if k > 1 {
            let mut p = self.params.clone();
            for l in &mut p.logits {
                *l += LOGIT_STEP * self.rng.sample::<f64, _>(StandardNormal);
            }
            self.try_move(p, data, q);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    /// Total log posterior (summed over all mixtures) after each step.
    pub log_posterior: Vec<f64>,
    pub acceptance_rate: f64,
}

pub fn mh_train(
    model: &MixtureModel,
    positives: &[RankVector],
    negatives: &[RankVector],
    steps: usize,
    seed: u64,
) -> Result<MixtureModel> {
    mh_train_traced(model, positives, negatives, steps, seed).map(|(m, _)| m)
}

/// Fit state-1 mixtures to `positives` and state-0 mixtures to `negatives`.
///
/// Every (state, descriptor) mixture has an independent posterior, so each is
/// run as its own chain with its own derived random stream.
pub fn mh_train_traced(
    model: &MixtureModel,
    positives: &[RankVector],
    negatives: &[RankVector],
    steps: usize,
    seed: u64,
) -> Result<(MixtureModel, TrainTrace)> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Empty("training needs both positive and negative rank vectors".into()));
    }
    let columns = |rows: &[RankVector]| -> Result<Vec<Vec<f64>>> {
        let values = rows.iter().map(|r| model.rank_values(r)).collect::<Result<Vec<_>>>()?;
        Ok((0..model.descriptors.len())
            .map(|d| values.iter().map(|v| v[d]).collect())
            .collect())
    };
    let data = [columns(negatives)?, columns(positives)?];
    if steps == 0 {
        return Ok((
            model.clone(),
            TrainTrace {
                log_posterior: Vec::new(),
                acceptance_rate: 0.0,
            },
        ));
    }
    let q = f64::from(model.quantiles);
    let n_desc = model.descriptors.len();

    // Start from the given model; redraw the initialization if it sits
    // outside the prior support.
    let mut start = model.clone();
    let mut attempt = 0;
    let mut chains: Vec<BlockChain> = loop {
        let chains: Vec<BlockChain> = (0..2)
            .flat_map(|s| (0..n_desc).map(move |d| (s, d)))
            .map(|(s, d)| {
                let params = MixtureParams::from_kernels(start.mixture(s, d));
                let lp = log_posterior(&params, &data[s][d], q);
                BlockChain {
                    params,
                    lp,
                    rng: rng::indexed_stream(seed, "qspr-mh", (s * n_desc + d) as u64),
                    accepted: 0,
                    proposed: 0,
                }
            })
            .collect();
        if chains.iter().all(|c| c.lp.is_finite()) {
            break chains;
        }
        attempt += 1;
        if attempt > INIT_ATTEMPTS {
            return Err(Error::Training(format!(
                "log posterior not finite at initialization after {INIT_ATTEMPTS} redraws"
            )));
        }
        let names = start.descriptors.clone();
        start = MixtureModel::init(
            model.kernels,
            &names,
            model.quantiles,
            rng::derive_indexed(seed, "qspr-reinit", attempt),
        )?;
    };

    let k = model.kernels;
    let burn_in = steps / 2;
    let kept = (steps - burn_in) as f64;
    // running sums of (mean, sd, weight) per kernel per chain
    let mut sums = vec![vec![(0.0, 0.0, 0.0); k]; chains.len()];
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut total = 0.0;
        for (c, chain) in chains.iter_mut().enumerate() {
            let s = c / n_desc;
            let d = c % n_desc;
            chain.step(&data[s][d], q);
            total += chain.lp;
            if step >= burn_in {
                for (acc, kern) in sums[c].iter_mut().zip(chain.params.kernels()) {
                    acc.0 += kern.mean;
                    acc.1 += kern.sd;
                    acc.2 += kern.weight;
                }
            }
        }
        trace.push(total);
    }

    let mut out = start.clone();
    for (c, acc) in sums.iter().enumerate() {
        let s = c / n_desc;
        let d = c % n_desc;
        let wsum: f64 = acc.iter().map(|a| a.2).sum();
        out.states[s][d] = acc
            .iter()
            .map(|&(m, sd, w)| GaussianKernel {
                mean: m / kept,
                sd: sd / kept,
                weight: w / wsum,
            })
            .collect();
    }
    let accepted: usize = chains.iter().map(|c| c.accepted).sum();
    let proposed: usize = chains.iter().map(|c| c.proposed).sum();
    let acceptance_rate = accepted as f64 / proposed as f64;
    out.training = Some(TrainingMeta {
        steps,
        seed,
        acceptance_rate,
    });
    Ok((
        out,
        TrainTrace {
            log_posterior: trace,
            acceptance_rate,
        },
    ))
}
