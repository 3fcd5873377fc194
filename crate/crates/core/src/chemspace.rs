//! Descriptor distributions over combinatorial peptide libraries and the
//! quantile transform from raw descriptor values to ranks.
//!
//! A [`ChemicalSpace`] is every sequence over the alphabet at one or more
//! lengths, each compound carrying a weight (unity for an unbiased library).
//! Small spaces are enumerated exactly; larger ones use the sum-of-normals
//! approximation for additive descriptors, or Monte Carlo sampling by weight.

use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::descriptors::{weighted_moments, Descriptor, ResiduePropertyTable};
use crate::error::{Error, Result};
use crate::rng;
use crate::seq::{Peptide, PeptideDataset};

pub const DEFAULT_QUANTILES: u32 = 100;
/// Largest number of sequences an exact distribution will enumerate.
pub const ENUMERATION_CAP: u128 = 10_000_000;
/// Residue share with a zero contribution at which the normal approximation is flagged.
pub const ZERO_FRACTION_THRESHOLD: f64 = 0.5;

const CDF_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemicalSpace {
    alphabet_size: usize,
    lengths: Vec<usize>,
    /// Per-residue factors; a compound's weight is the product over its residues.
    residue_weights: Option<Vec<f64>>,
    /// Per-length multipliers, aligned with `lengths`.
    length_weights: Option<Vec<f64>>,
}

impl ChemicalSpace {
    /// All sequences of length `length` over the 20 amino acids, unit weights.
    pub fn uniform(length: usize) -> Result<Self> {
        Self::uniform_lengths(vec![length])
    }

    pub fn uniform_lengths(mut lengths: Vec<usize>) -> Result<Self> {
        lengths.sort_unstable();
        lengths.dedup();
        if lengths.is_empty() || lengths[0] == 0 {
            return Err(Error::invalid("chemical space needs lengths >= 1"));
        }
        Ok(Self {
            alphabet_size: 20,
            lengths,
            residue_weights: None,
            length_weights: None,
        })
    }

    pub fn with_residue_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.alphabet_size {
            return Err(Error::invalid("residue weights must cover the alphabet"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("residue weights must be nonnegative with a positive sum"));
        }
        self.residue_weights = Some(weights);
        Ok(self)
    }

    pub fn with_length_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.lengths.len() {
            return Err(Error::invalid("length weights must align with lengths"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("length weights must be nonnegative with a positive sum"));
        }
        self.length_weights = Some(weights);
        Ok(self)
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    fn residue_weight(&self, r: usize) -> f64 {
        self.residue_weights.as_ref().map_or(1.0, |w| w[r])
    }

    fn residue_weight_sum(&self) -> f64 {
        self.residue_weights
            .as_ref()
            .map_or(self.alphabet_size as f64, |w| w.iter().sum())
    }

    /// Total weight of all compounds of the `i`-th length.
    fn length_mass(&self, i: usize) -> f64 {
        let lw = self.length_weights.as_ref().map_or(1.0, |w| w[i]);
        lw * self.residue_weight_sum().powi(self.lengths[i] as i32)
    }

    /// Partition value Z: the summed weight of every compound in the space.
    pub fn partition(&self) -> f64 {
        (0..self.lengths.len()).map(|i| self.length_mass(i)).sum()
    }

    /// Number of distinct sequences in the space.
    pub fn sequence_count(&self) -> u128 {
        self.lengths
            .iter()
            .map(|&l| (self.alphabet_size as u128).saturating_pow(l as u32))
            .fold(0u128, u128::saturating_add)
    }

    /// Weight fraction carried by the `n` longest lengths.
    pub fn top_lengths_fraction(&self, n: usize) -> f64 {
        let total = self.partition();
        let k = self.lengths.len();
        (k.saturating_sub(n)..k).map(|i| self.length_mass(i)).sum::<f64>() / total
    }

    fn check_enumerable(&self) -> Result<()> {
        let size = self.sequence_count();
        if size > ENUMERATION_CAP {
            return Err(Error::Capacity {
                size,
                cap: ENUMERATION_CAP,
            });
        }
        Ok(())
    }

    /// Visit every sequence as (descriptor value, weight).
    fn enumerate(&self, column: &[f64], mut visit: impl FnMut(f64, f64)) -> Result<()> {
        self.check_enumerable()?;
        for (i, &l) in self.lengths.iter().enumerate() {
            let lw = self.length_weights.as_ref().map_or(1.0, |w| w[i]);
            self.enumerate_length(column, l, lw, &mut visit);
        }
        Ok(())
    }

    fn enumerate_length(&self, column: &[f64], length: usize, lw: f64, visit: &mut impl FnMut(f64, f64)) {
        let a = self.alphabet_size;
        let mut digits = vec![0usize; length];
        // partial[j] = (value, weight) accumulated over positions < j
        let mut partial = vec![(0.0, lw); length + 1];
        let mut depth = 0;
        loop {
            while depth < length {
                let r = digits[depth];
                let (v, w) = partial[depth];
                partial[depth + 1] = (v + column[r], w * self.residue_weight(r));
                depth += 1;
            }
            let (v, w) = partial[length];
            visit(v, w);
            // odometer increment from the last position
            loop {
                if depth == 0 {
                    return;
                }
                depth -= 1;
                digits[depth] += 1;
                if digits[depth] < a {
                    break;
                }
                digits[depth] = 0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    /// Enumerated histogram: `support` ascending, `masses` summing to 1.
    Exact { support: Vec<f64>, masses: Vec<f64> },
    /// Sum of `l` iid normals; `zero_fraction` is the residue share contributing 0.
    NormalApprox {
        mean: f64,
        variance: f64,
        zero_fraction: f64,
    },
    /// Empirical sample, sorted ascending.
    Sampled { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBoundaries {
    pub count: u32,
    #[serde(with = "extended_reals")]
    pub boundaries: Vec<f64>,
}

/// Serializes +/- infinity (unrepresentable in JSON) as strings.
mod extended_reals {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|&x| {
                if x.is_finite() {
                    Repr::Finite(x)
                } else if x > 0.0 {
                    Repr::Text("inf".into())
                } else {
                    Repr::Text("-inf".into())
                }
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Finite(x) => Ok(x),
                Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
                Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
                Repr::Text(t) => Err(serde::de::Error::custom(format!("bad boundary '{t}'"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorDistribution {
    pub descriptor: Descriptor,
    pub lengths: Vec<usize>,
    #[serde(flatten)]
    pub kind: DistributionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<QuantileBoundaries>,
}

impl DescriptorDistribution {
    fn new(descriptor: Descriptor, space: &ChemicalSpace, kind: DistributionKind) -> Self {
        Self {
            descriptor,
            lengths: space.lengths().to_vec(),
            kind,
            quantiles: None,
        }
    }

    /// P(X <= x)
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            DistributionKind::Exact { support, masses } => {
                let n = support.partition_point(|&s| s <= x);
                masses[..n].iter().sum::<f64>().min(1.0)
            }
            DistributionKind::NormalApprox { mean, variance, .. } => normal(*mean, *variance).cdf(x),
            DistributionKind::Sampled { values } => {
                values.partition_point(|&v| v <= x) as f64 / values.len() as f64
            }
        }
    }

    /// P(X < x)
    pub fn cdf_left(&self, x: f64) -> f64 {
        match &self.kind {
            DistributionKind::Exact { support, masses } => {
                let n = support.partition_point(|&s| s < x);
                masses[..n].iter().sum::<f64>().min(1.0)
            }
            DistributionKind::NormalApprox { .. } => self.cdf(x),
            DistributionKind::Sampled { values } => {
                values.partition_point(|&v| v < x) as f64 / values.len() as f64
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            DistributionKind::Exact { support, masses } => support.iter().zip(masses).map(|(s, m)| s * m).sum(),
            DistributionKind::NormalApprox { mean, .. } => *mean,
            DistributionKind::Sampled { values } => values.iter().sum::<f64>() / values.len() as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        match &self.kind {
            DistributionKind::Exact { support, masses } => {
                support.iter().zip(masses).map(|(s, m)| m * (s - mu).powi(2)).sum()
            }
            DistributionKind::NormalApprox { variance, .. } => *variance,
            DistributionKind::Sampled { values } => {
                values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / values.len() as f64
            }
        }
    }

    /// Probability mass at `x` (exact kind; zero for continuous kinds).
    pub fn mass_at(&self, x: f64) -> f64 {
        match &self.kind {
            DistributionKind::Exact { support, masses } => support
                .iter()
                .position(|&s| values_match(s, x))
                .map_or(0.0, |i| masses[i]),
            DistributionKind::NormalApprox { .. } => 0.0,
            DistributionKind::Sampled { values } => {
                values.iter().filter(|&&v| values_match(v, x)).count() as f64 / values.len() as f64
            }
        }
    }

    /// Set of distinct attained values, for discrete kinds.
    pub fn support(&self) -> Option<Vec<f64>> {
        match &self.kind {
            DistributionKind::Exact { support, .. } => Some(support.clone()),
            DistributionKind::Sampled { values } => {
                let mut s = values.clone();
                s.dedup();
                Some(s)
            }
            DistributionKind::NormalApprox { .. } => None,
        }
    }

    /// True when the normal approximation rests on a descriptor most residues
    /// do not contribute to, where it is known to fit poorly.
    pub fn zero_fraction_warning(&self) -> bool {
        matches!(self.kind, DistributionKind::NormalApprox { zero_fraction, .. } if zero_fraction >= ZERO_FRACTION_THRESHOLD)
    }

    /// The `q/Q` quantile for `q = 1..=Q`. Discrete kinds use the
    /// left-continuous inverse CDF; the normal kind is inverted analytically.
    pub fn with_quantiles(mut self, count: u32) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("quantile count must be >= 1"));
        }
        let boundaries = match &self.kind {
            DistributionKind::Exact { support, masses } => {
                let mut cum = Vec::with_capacity(masses.len());
                let mut acc = 0.0;
                for m in masses {
                    acc += m;
                    cum.push(acc);
                }
                (1..=count)
                    .map(|q| {
                        let p = f64::from(q) / f64::from(count);
                        let i = cum.partition_point(|&c| c < p - CDF_SLACK).min(support.len() - 1);
                        support[i]
                    })
                    .collect()
            }
            DistributionKind::Sampled { values } => {
                let n = values.len() as u128;
                let big_q = u128::from(count);
                (1..=count)
                    .map(|q| {
                        let idx = (u128::from(q) * n).div_ceil(big_q) - 1;
                        values[idx as usize]
                    })
                    .collect()
            }
            DistributionKind::NormalApprox { mean, variance, .. } => {
                let dist = normal(*mean, *variance);
                (1..=count)
                    .map(|q| {
                        if q == count {
                            f64::INFINITY
                        } else {
                            dist.inverse_cdf(f64::from(q) / f64::from(count))
                        }
                    })
                    .collect()
            }
        };
        self.quantiles = Some(QuantileBoundaries { count, boundaries });
        Ok(self)
    }

    pub fn boundaries(&self) -> Option<&[f64]> {
        self.quantiles.as_ref().map(|q| q.boundaries.as_slice())
    }

    /// Quantile index in `1..=Q`; see [`rank_with_boundaries`].
    pub fn rank(&self, x: f64) -> Result<u32> {
        let q = self
            .quantiles
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("distribution for {} has no quantile boundaries", self.descriptor)))?;
        Ok(rank_with_boundaries(&q.boundaries, x))
    }
}

/// Number of boundaries at or below `x`, clamped to `1..=Q`.
///
/// With quartile boundaries (5, 6, 7, 15): 3 -> 1, 7 -> 3, 13 -> 3, 15 -> 4.
pub fn rank_with_boundaries(boundaries: &[f64], x: f64) -> u32 {
    let passed = boundaries.partition_point(|&b| b <= x);
    passed.clamp(1, boundaries.len()) as u32
}

fn values_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn normal(mean: f64, variance: f64) -> Normal {
    Normal::new(mean, variance.sqrt()).expect("validated positive variance")
}

/// Pr(f(c) = x), by full enumeration of the space.
pub fn prob_mass(space: &ChemicalSpace, table: &ResiduePropertyTable, d: Descriptor, x: f64) -> Result<f64> {
    let column = table.column(d);
    let mut hit = 0.0;
    space.enumerate(&column, |v, w| {
        if values_match(v, x) {
            hit += w;
        }
    })?;
    Ok(hit / space.partition())
}

pub fn exact_distribution(space: &ChemicalSpace, table: &ResiduePropertyTable, d: Descriptor) -> Result<DescriptorDistribution> {
    let column = table.column(d);
    let mut draws: Vec<(f64, f64)> = Vec::with_capacity(space.sequence_count() as usize);
    space.enumerate(&column, |v, w| draws.push((v, w)))?;
    draws.sort_by(|a, b| a.0.total_cmp(&b.0));
    let z = space.partition();
    let mut support: Vec<f64> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    for (v, w) in draws {
        match support.last() {
            Some(&s) if values_match(s, v) => *masses.last_mut().unwrap() += w,
            _ => {
                support.push(v);
                masses.push(w);
            }
        }
    }
    for m in &mut masses {
        *m /= z;
    }
    // zero-weight compounds can leave zero-mass support points behind
    let (support, masses) = support.into_iter().zip(masses).filter(|(_, m)| *m > 0.0).unzip();
    Ok(DescriptorDistribution::new(
        d,
        space,
        DistributionKind::Exact { support, masses },
    ))
}

/// Sum-of-normals approximation for a single-length space: mean `l*mu`,
/// variance `l*sigma^2`, with `mu` and `sigma^2` taken over the alphabet.
pub fn normal_approx(space: &ChemicalSpace, table: &ResiduePropertyTable, d: Descriptor) -> Result<DescriptorDistribution> {
    let [l] = space.lengths() else {
        return Err(Error::invalid("the normal approximation needs a single-length space; build one per length"));
    };
    let column = table.column(d);
    let (mu, sigma2) = weighted_moments(&column, space.residue_weights.as_deref());
    if sigma2 <= 0.0 {
        return Err(Error::DegenerateDescriptor(d.name().into()));
    }
    let total = space.residue_weight_sum();
    let zero_fraction = column
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == 0.0)
        .map(|(r, _)| space.residue_weight(r))
        .sum::<f64>()
        / total;
    let l = *l as f64;
    Ok(DescriptorDistribution::new(
        d,
        space,
        DistributionKind::NormalApprox {
            mean: l * mu,
            variance: l * sigma2,
            zero_fraction,
        },
    ))
}

/// Monte Carlo estimate from `n` sequences drawn by weight. Draw `i` uses its
/// own derived stream, so the result does not depend on evaluation order.
pub fn sample_distribution(
    space: &ChemicalSpace,
    table: &ResiduePropertyTable,
    d: Descriptor,
    n: usize,
    seed: u64,
) -> Result<DescriptorDistribution> {
    if n == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    let column = table.column(d);
    let length_pick = WeightedIndex::new((0..space.lengths.len()).map(|i| space.length_mass(i)))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let residue_weights = space
        .residue_weights
        .clone()
        .unwrap_or_else(|| vec![1.0; space.alphabet_size]);
    let residue_pick = WeightedIndex::new(&residue_weights).map_err(|e| Error::invalid(e.to_string()))?;
    let mut values: Vec<f64> = (0..n as u64)
        .map(|i| {
            let mut rng = rng::indexed_stream(seed, "space-sample", i);
            let l = space.lengths[length_pick.sample(&mut rng)];
            (0..l).fold(0.0, |acc, _| acc + column[residue_pick.sample(&mut rng)])
        })
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(DescriptorDistribution::new(d, space, DistributionKind::Sampled { values }))
}

/// Supremum distance between the CDF of a discrete distribution and any other.
pub fn sup_cdf_distance(discrete: &DescriptorDistribution, other: &DescriptorDistribution) -> Result<f64> {
    let mut points = discrete
        .support()
        .ok_or_else(|| Error::invalid("first distribution must be discrete"))?;
    if let Some(more) = other.support() {
        points.extend(more);
    }
    Ok(points
        .iter()
        .map(|&x| {
            let right = (discrete.cdf(x) - other.cdf(x)).abs();
            let left = (discrete.cdf_left(x) - other.cdf_left(x)).abs();
            right.max(left)
        })
        .fold(0.0, f64::max))
}

/// Per-descriptor rank vector for one peptide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankVector {
    pub names: Vec<String>,
    pub ranks: Vec<u32>,
}

impl RankVector {
    pub fn new(pairs: Vec<(String, u32)>) -> Self {
        let (names, ranks) = pairs.into_iter().unzip();
        Self { names, ranks }
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| self.ranks[i])
    }
}

/// A bundle of ranked distributions, looked up by descriptor and peptide length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DistributionSet {
    pub distributions: Vec<DescriptorDistribution>,
}

impl DistributionSet {
    pub fn find(&self, d: Descriptor, length: usize) -> Option<&DescriptorDistribution> {
        self.distributions
            .iter()
            .find(|dist| dist.descriptor == d && dist.lengths.contains(&length))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn rank_peptide(&self, p: &Peptide, d: Descriptor, value: f64) -> Result<u32> {
        let dist = self.find(d, p.len()).ok_or_else(|| {
            Error::invalid(format!("no distribution for {d} at length {} (peptide {p})", p.len()))
        })?;
        dist.rank(value)
    }

    /// Replace every descriptor column of `data` with its rank.
    pub fn rank_dataset(&self, data: &PeptideDataset) -> Result<PeptideDataset> {
        let descriptors = crate::descriptors::parse_names(data.names())?;
        let mut out = PeptideDataset::new(data.names().to_vec());
        out.provenance = data.provenance.clone();
        for e in data.entries() {
            let values = descriptors
                .iter()
                .zip(&e.values)
                .map(|(&d, &v)| self.rank_peptide(&e.peptide, d, v).map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            out.push(crate::seq::Entry {
                peptide: e.peptide.clone(),
                label: e.label,
                values,
            })?;
        }
        Ok(out)
    }
}

/// Read rank vectors out of a dataset whose columns hold integer ranks.
pub fn rank_vectors(data: &PeptideDataset) -> Result<Vec<RankVector>> {
    data.entries()
        .iter()
        .map(|e| {
            let ranks = e
                .values
                .iter()
                .map(|&v| {
                    if v.fract() == 0.0 && v >= 1.0 && v <= f64::from(u32::MAX) {
                        Ok(v as u32)
                    } else {
                        Err(Error::invalid(format!("'{v}' is not a rank (peptide {})", e.peptide)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RankVector {
                names: data.names().to_vec(),
                ranks,
            })
        })
        .collect()
}
