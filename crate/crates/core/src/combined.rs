//! Weighted sum of the max-normalized QSPR and motif likelihoods.
//!
//! The QSPR half is the mixture classifier's posterior probability of the
//! active state; the motif half is the motif model's sequence likelihood.
//! Each half is divided by its maximum over a reference set, computed as
//! `exp(ll - max ll)` so tiny sequence likelihoods do not underflow first.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chemspace::RankVector;
use crate::error::{Error, Result};
use crate::eval::{self, DEFAULT_CUTOFFS};
use crate::motif::{seq_log_likelihood, MotifModel};
use crate::qspr::{qspr_log_score, MixtureModel};
use crate::seq::Peptide;

pub const DEFAULT_GRID_POINTS: usize = 101;

/// Evenly spaced weights on `[0, 1]`, endpoints exact.
pub fn weight_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::invalid("weight grid needs at least two points"));
    }
    let last = (points - 1) as f64;
    Ok((0..points).map(|i| i as f64 / last).collect())
}

pub fn default_grid() -> Vec<f64> {
    weight_grid(DEFAULT_GRID_POINTS).expect("valid grid size")
}

/// A peptide with its rank vector; both halves need one of each.
pub type Scorable = (Peptide, RankVector);

/// Log of each half's maximum likelihood over the reference set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub qspr_log_max: f64,
    pub motif_log_max: f64,
}

fn half_logs(qspr: &MixtureModel, motif: &MotifModel, item: &Scorable) -> Result<(f64, f64)> {
    Ok((qspr_log_score(qspr, &item.1)?, seq_log_likelihood(motif, &item.0)?))
}

pub fn calibrate(qspr: &MixtureModel, motif: &MotifModel, reference: &[Scorable]) -> Result<Normalizers> {
    if reference.is_empty() {
        return Err(Error::Empty("calibration reference set".into()));
    }
    let (mut q, mut m) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for item in reference {
        let (lq, lm) = half_logs(qspr, motif, item)?;
        q = q.max(lq);
        m = m.max(lm);
    }
    for (half, v) in [("QSPR", q), ("motif", m)] {
        if !v.is_finite() {
            return Err(Error::Calibration(format!(
                "every reference peptide has zero {half} likelihood"
            )));
        }
    }
    Ok(Normalizers {
        qspr_log_max: q,
        motif_log_max: m,
    })
}

#[derive(Debug, Clone)]
pub struct CombinedModel<'a> {
    pub qspr: &'a MixtureModel,
    pub motif: &'a MotifModel,
    /// Weight of the motif half; the QSPR half gets `1 - weight`.
    pub weight: f64,
    pub normalizers: Option<Normalizers>,
}

fn check_weight(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::invalid(format!("weight must be in [0, 1], got {w}")));
    }
    Ok(())
}

impl<'a> CombinedModel<'a> {
    pub fn new(qspr: &'a MixtureModel, motif: &'a MotifModel, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        Ok(Self {
            qspr,
            motif,
            weight,
            normalizers: None,
        })
    }

    pub fn calibrate(&mut self, reference: &[Scorable]) -> Result<Normalizers> {
        let n = calibrate(self.qspr, self.motif, reference)?;
        self.normalizers = Some(n);
        Ok(n)
    }

    pub fn with_normalizers(mut self, n: Normalizers) -> Self {
        self.normalizers = Some(n);
        self
    }

    /// Normalized (QSPR, motif) likelihoods.
    pub fn halves(&self, item: &Scorable) -> Result<(f64, f64)> {
        let n = self
            .normalizers
            .ok_or_else(|| Error::Calibration("combined model is not calibrated".into()))?;
        let (lq, lm) = half_logs(self.qspr, self.motif, item)?;
        Ok(((lq - n.qspr_log_max).exp(), (lm - n.motif_log_max).exp()))
    }
}

fn mix(weight: f64, (q, m): (f64, f64)) -> f64 {
    (1.0 - weight) * q + weight * m
}

pub fn combined_score(model: &CombinedModel, p: &Peptide, r: &RankVector) -> Result<f64> {
    let item = (p.clone(), r.clone());
    Ok(mix(model.weight, model.halves(&item)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub weight: f64,
    pub cutoff: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub accuracy: f64,
    pub mcc: f64,
}

/// Best-cutoff evaluation of the combined score at each weight.
pub fn weight_sweep(
    model: &CombinedModel,
    positives: &[Scorable],
    negatives: &[Scorable],
    grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("weight grid is empty"));
    }
    grid.iter().try_for_each(|&w| check_weight(w))?;
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Empty("sweep needs positive and negative evaluation sets".into()));
    }
    let halves = |set: &[Scorable]| set.iter().map(|i| model.halves(i)).collect::<Result<Vec<_>>>();
    let (hp, hn) = (halves(positives)?, halves(negatives)?);
    grid.iter()
        .map(|&w| {
            let pos: Vec<f64> = hp.iter().map(|&h| mix(w, h)).collect();
            let neg: Vec<f64> = hn.iter().map(|&h| mix(w, h)).collect();
            let e = eval::evaluate(&pos, &neg, DEFAULT_CUTOFFS)?;
            Ok(SweepRow {
                weight: w,
                cutoff: e.best.cutoff,
                fpr: e.best.fpr,
                tpr: e.best.tpr,
                accuracy: e.confusion.accuracy,
                mcc: e.confusion.mcc,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "weight,cutoff,fpr,tpr,accuracy,mcc")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.weight, r.cutoff, r.fpr, r.tpr, r.accuracy, r.mcc)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motif::{imposed_motif_dataset, train_motif, MotifHyper};
    use crate::qspr::GaussianKernel;
    use crate::rng;
    use rand::Rng;

    fn qspr_model() -> MixtureModel {
        let mut m = MixtureModel::with_defaults(1, &["a"], 0).unwrap();
        m.states[0][0] = vec![GaussianKernel { mean: 30.0, sd: 10.0, weight: 1.0 }];
        m.states[1][0] = vec![GaussianKernel { mean: 70.0, sd: 10.0, weight: 1.0 }];
        m
    }

    fn motif_model() -> MotifModel {
        let d = imposed_motif_dataset("ARND", 60, 3, 1).unwrap();
        train_motif(&MotifModel::new(1, 4, MotifHyper::default(), 2).unwrap(), &d, 30).unwrap()
    }

    fn items(n: usize, seed: u64) -> Vec<Scorable> {
        let d = imposed_motif_dataset("ARND", n, 4, seed).unwrap();
        let mut r = rng::stream(seed, "ranks");
        d.peptides()
            .map(|p| {
                let rank = r.random_range(1..=100);
                (p.clone(), RankVector::new(vec![("a".into(), rank)]))
            })
            .collect()
    }

    fn order(scores: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        idx
    }

    #[test]
    fn calibration_max_is_one() {
        let (q, m) = (qspr_model(), motif_model());
        let reference = items(40, 3);
        let mut c = CombinedModel::new(&q, &m, 0.5).unwrap();
        c.calibrate(&reference).unwrap();
        let halves: Vec<(f64, f64)> = reference.iter().map(|i| c.halves(i).unwrap()).collect();
        let max_q = halves.iter().map(|h| h.0).fold(0.0, f64::max);
        let max_m = halves.iter().map(|h| h.1).fold(0.0, f64::max);
        assert_eq!((max_q, max_m), (1.0, 1.0));
        assert!(halves.iter().all(|&(a, b)| a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0));
    }

    #[test]
    fn singleton_reference() {
        let (q, m) = (qspr_model(), motif_model());
        let reference = items(1, 4);
        let mut c = CombinedModel::new(&q, &m, 0.3).unwrap();
        c.calibrate(&reference).unwrap();
        assert_eq!(c.halves(&reference[0]).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn uncalibrated_and_bad_weight() {
        let (q, m) = (qspr_model(), motif_model());
        let it = &items(1, 5)[0];
        let c = CombinedModel::new(&q, &m, 0.3).unwrap();
        assert!(combined_score(&c, &it.0, &it.1).is_err());
        assert!(CombinedModel::new(&q, &m, 1.5).is_err());
        assert!(calibrate(&q, &m, &[]).is_err());
    }

    #[test]
    fn endpoints_and_affinity() {
        let (q, m) = (qspr_model(), motif_model());
        let set = items(100, 6);
        let n = calibrate(&q, &m, &set).unwrap();
        let scores = |w: f64| -> Vec<f64> {
            let c = CombinedModel::new(&q, &m, w).unwrap().with_normalizers(n);
            set.iter().map(|(p, r)| combined_score(&c, p, r).unwrap()).collect()
        };
        let c = CombinedModel::new(&q, &m, 0.0).unwrap().with_normalizers(n);
        let qs: Vec<f64> = set.iter().map(|i| c.halves(i).unwrap().0).collect();
        let ms: Vec<f64> = set.iter().map(|i| c.halves(i).unwrap().1).collect();
        assert_eq!(order(&scores(0.0)), order(&qs));
        assert_eq!(order(&scores(1.0)), order(&ms));
        let (s0, s5, s1) = (scores(0.0), scores(0.5), scores(1.0));
        for i in 0..set.len() {
            assert!((s5[i] - 0.5 * (s0[i] + s1[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_rows() {
        let (q, m) = (qspr_model(), motif_model());
        let pos = items(30, 7);
        let neg = items(30, 8);
        let c = CombinedModel::new(&q, &m, 0.0).unwrap();
        let n = calibrate(&q, &m, &pos).unwrap();
        let c = c.with_normalizers(n);
        let rows = weight_sweep(&c, &pos, &neg, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(rows.len(), 3);
        let qp: Vec<f64> = pos.iter().map(|i| c.halves(i).unwrap().0).collect();
        let qn: Vec<f64> = neg.iter().map(|i| c.halves(i).unwrap().0).collect();
        let e = eval::evaluate(&qp, &qn, DEFAULT_CUTOFFS).unwrap();
        assert_eq!(rows[0].accuracy, e.confusion.accuracy);
        assert_eq!(rows[0].cutoff, e.best.cutoff);
        assert_eq!(rows[0].mcc, e.confusion.mcc);
        assert!(weight_sweep(&c, &pos, &[], &[0.0]).is_err());
        assert!(weight_sweep(&c, &pos, &neg, &[]).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 101);
        assert_eq!((g[0], g[21], g[100]), (0.0, 0.21, 1.0));
    }
}
