//! ROC curves, cutoff selection, confusion metrics and a linear SVM baseline.
//!
//! Scores are nonnegative and larger means more likely active. A score at or
//! above the cutoff is a positive prediction.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::chemspace::RankVector;
use crate::error::{Error, Result};
use crate::rng;
use crate::seq::Peptide;

pub const DEFAULT_CUTOFFS: usize = 1000;
pub const SVM_EPOCHS: usize = 3000;
pub const SVM_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub cutoff: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ascending in cutoff.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty(format!("{name} score list")));
    }
    if let Some(bad) = scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::invalid(format!("{name} scores must be finite and >= 0, got {bad}")));
    }
    Ok(())
}

fn count_at_or_above(sorted: &[f64], cutoff: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s < cutoff)
}

/// ROC over `n_cutoffs` cutoffs evenly spaced on `[0, max score]`.
pub fn roc(pos: &[f64], neg: &[f64], n_cutoffs: usize) -> Result<RocCurve> {
    check_scores("positive", pos)?;
    check_scores("negative", neg)?;
    if n_cutoffs < 2 {
        return Err(Error::invalid("at least two cutoffs are needed"));
    }
    let sort = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (sp, sn) = (sort(pos), sort(neg));
    let max = sp.last().unwrap().max(*sn.last().unwrap());
    let last = (n_cutoffs - 1) as f64;
    let mut counts = Vec::with_capacity(n_cutoffs);
    let mut points = Vec::with_capacity(n_cutoffs);
    for i in 0..n_cutoffs {
        let cutoff = if i + 1 == n_cutoffs { max } else { max * i as f64 / last };
        let (tp, fp) = (count_at_or_above(&sp, cutoff), count_at_or_above(&sn, cutoff));
        counts.push((fp as u128, tp as u128));
        points.push(RocPoint {
            cutoff,
            fpr: fp as f64 / sn.len() as f64,
            tpr: tp as f64 / sp.len() as f64,
        });
    }
    let (np, nn) = (sp.len() as u128, sn.len() as u128);
    // Trapezoids in integer count units from (0,0) to (1,1), walking cutoffs downward.
    let mut path = vec![(0u128, 0u128)];
    path.extend(counts.iter().rev());
    path.push((nn, np));
    let twice_area: u128 = path
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    let auc = twice_area as f64 / (2 * nn * np) as f64;
    Ok(RocCurve { points, auc })
}

/// `√(2·fpr² + (1 − tpr)²)`; false positives weigh double.
pub fn cutoff_objective(fpr: f64, tpr: f64) -> f64 {
    (2.0 * fpr * fpr + (1.0 - tpr).powi(2)).sqrt()
}

/// Point minimizing [`cutoff_objective`]; ties prefer lower fpr, then higher cutoff.
pub fn best_cutoff(curve: &RocCurve) -> Result<RocPoint> {
    let mut best: Option<(f64, RocPoint)> = None;
    for &p in &curve.points {
        let obj = cutoff_objective(p.fpr, p.tpr);
        let better = match best {
            None => true,
            Some((bo, bp)) => {
                obj < bo || (obj == bo && (p.fpr < bp.fpr || (p.fpr == bp.fpr && p.cutoff > bp.cutoff)))
            }
        };
        if better {
            best = Some((obj, p));
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| Error::Empty("ROC curve has no points".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub mcc: f64,
}

impl ConfusionSummary {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let total = tp + fp + tn + fn_;
        let accuracy = if total == 0 { 0.0 } else { (tp + tn) as f64 / total as f64 };
        let (tpf, fpf, tnf, fnf) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
        let denom = (tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf);
        let mcc = if denom == 0.0 { 0.0 } else { (tpf * tnf - fpf * fnf) / denom.sqrt() };
        Self { tp, fp, tn, fn_, accuracy, mcc }
    }
}

pub fn confusion(pos: &[f64], neg: &[f64], cutoff: f64) -> ConfusionSummary {
    let tp = pos.iter().filter(|&&s| s >= cutoff).count();
    let fp = neg.iter().filter(|&&s| s >= cutoff).count();
    ConfusionSummary::from_counts(tp, fp, neg.len() - fp, pos.len() - tp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub roc: RocCurve,
    pub best: RocPoint,
    pub confusion: ConfusionSummary,
}

/// ROC, best cutoff, and the confusion summary at that cutoff.
pub fn evaluate(pos: &[f64], neg: &[f64], n_cutoffs: usize) -> Result<Evaluation> {
    let roc = roc(pos, neg, n_cutoffs)?;
    let best = best_cutoff(&roc)?;
    Ok(Evaluation {
        confusion: confusion(pos, neg, best.cutoff),
        roc,
        best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub descriptors: Vec<String>,
    /// Feature standardization fitted on the training set.
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Weights on standardized features; the last entry multiplies the constant 1.
    pub weights: Vec<f64>,
}

impl LinearSvm {
    fn features(&self, r: &RankVector) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.descriptors.len() + 1);
        for (i, name) in self.descriptors.iter().enumerate() {
            let v = r.get(name).ok_or_else(|| Error::MissingDescriptor(name.clone()))?;
            x.push((f64::from(v) - self.means[i]) / self.scales[i]);
        }
        x.push(1.0);
        Ok(x)
    }

    pub fn decision(&self, r: &RankVector) -> Result<f64> {
        Ok(dot(&self.weights, &self.features(r)?))
    }

    /// Logistic squashing of the decision value; monotone, so ROC order is unchanged.
    pub fn score(&self, r: &RankVector) -> Result<f64> {
        Ok(1.0 / (1.0 + (-self.decision(r)?).exp()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pegasos: hinge loss with L2 penalty `λ/2 ‖w‖²`, step `1/(λ t)`, one pass
/// over a shuffled training set per epoch.
pub fn train_svm(pos: &[RankVector], neg: &[RankVector], epochs: usize, seed: u64) -> Result<LinearSvm> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("SVM training needs both positive and negative examples"));
    }
    let descriptors = pos[0].names.clone();
    if descriptors.is_empty() {
        return Err(Error::invalid("SVM training needs at least one descriptor"));
    }
    let raw = |r: &RankVector| -> Result<Vec<f64>> {
        descriptors
            .iter()
            .map(|n| r.get(n).map(f64::from).ok_or_else(|| Error::MissingDescriptor(n.clone())))
            .collect()
    };
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(pos.len() + neg.len());
    for r in pos {
        rows.push((raw(r)?, 1.0));
    }
    for r in neg {
        rows.push((raw(r)?, -1.0));
    }
    let d = descriptors.len();
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|(x, _)| x[j]).sum::<f64>() / n).collect();
    let scales: Vec<f64> = (0..d)
        .map(|j| {
            let var = rows.iter().map(|(x, _)| (x[j] - means[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 { var.sqrt() } else { 1.0 }
        })
        .collect();
    for (x, _) in &mut rows {
        for j in 0..d {
            x[j] = (x[j] - means[j]) / scales[j];
        }
        x.push(1.0);
    }

    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = rng::stream(seed, "svm");
    let mut t = 0usize;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (SVM_LAMBDA * t as f64);
            let (x, y) = &rows[i];
            let margin = y * dot(&w, x);
            let shrink = 1.0 - eta * SVM_LAMBDA;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (v, xj) in w.iter_mut().zip(x) {
                    *v += eta * y * xj;
                }
            }
        }
    }
    Ok(LinearSvm {
        descriptors,
        means,
        scales,
        weights: w,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmResult {
    pub model: LinearSvm,
    pub evaluation: Evaluation,
}

/// Train on one split and evaluate on another at the test ROC's best cutoff.
pub fn svm_baseline(
    train_pos: &[RankVector],
    train_neg: &[RankVector],
    test_pos: &[RankVector],
    test_neg: &[RankVector],
    epochs: usize,
    seed: u64,
) -> Result<SvmResult> {
    let model = train_svm(train_pos, train_neg, epochs, seed)?;
    let scores = |rs: &[RankVector]| rs.iter().map(|r| model.score(r)).collect::<Result<Vec<_>>>();
    let evaluation = evaluate(&scores(test_pos)?, &scores(test_neg)?, DEFAULT_CUTOFFS)?;
    Ok(SvmResult { model, evaluation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenHit {
    pub peptide: Peptide,
    pub score: f64,
}

/// Peptides scoring at or above `cutoff` with at least `min_length` residues,
/// highest score first; equal scores keep input order.
pub fn screen(scored: &[(Peptide, f64)], cutoff: f64, min_length: usize) -> Vec<ScreenHit> {
    let mut hits: Vec<ScreenHit> = scored
        .iter()
        .filter(|(p, s)| *s >= cutoff && p.len() >= min_length)
        .map(|(p, s)| ScreenHit {
            peptide: p.clone(),
            score: *s,
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score));
    hits
}

pub fn write_roc_csv<W: Write>(curve: &RocCurve, mut out: W) -> Result<()> {
    writeln!(out, "cutoff,fpr,tpr")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.cutoff, p.fpr, p.tpr)?;
    }
    writeln!(out, "# auc={}", curve.auc)?;
    Ok(())
}

pub fn write_confusion_csv<W: Write>(c: &ConfusionSummary, mut out: W) -> Result<()> {
    writeln!(out, "tp,fp,tn,fn,accuracy,mcc")?;
    writeln!(out, "{},{},{},{},{},{}", c.tp, c.fp, c.tn, c.fn_, c.accuracy, c.mcc)?;
    Ok(())
}

pub fn write_screen_csv<W: Write>(hits: &[ScreenHit], mut out: W) -> Result<()> {
    writeln!(out, "sequence,score")?;
    for h in hits {
        writeln!(out, "{},{}", h.peptide, h.score)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_scores(n: usize, shift: f64, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, "scores");
        (0..n)
            .map(|_| (shift + r.sample::<f64, _>(StandardNormal)).max(0.0) + r.random::<f64>() * 1e-9)
            .collect()
    }

    fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut wins = 0.0;
        for &p in pos {
            for &n in neg {
                wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    fn ranks(values: &[(&str, u32)]) -> RankVector {
        RankVector::new(values.iter().map(|&(n, v)| (n.to_string(), v)).collect())
    }

    #[test]
    fn separated_auc_is_one() {
        let pos: Vec<f64> = (0..50).map(|i| 0.6 + 0.008 * i as f64).collect();
        let neg: Vec<f64> = (0..50).map(|i| 0.5 * i as f64 / 50.0).collect();
        let c = roc(&pos, &neg, DEFAULT_CUTOFFS).unwrap();
        assert!((c.auc - 1.0).abs() <= 1.0 / DEFAULT_CUTOFFS as f64);
    }

    #[test]
    fn identical_lists_give_half() {
        let s = random_scores(200, 1.0, 3);
        assert_eq!(roc(&s, &s, DEFAULT_CUTOFFS).unwrap().auc, 0.5);
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let pos = random_scores(1000, 1.5, 1);
        let neg = random_scores(1000, 1.0, 2);
        let c = roc(&pos, &neg, DEFAULT_CUTOFFS).unwrap();
        assert!((c.auc - pairwise_auc(&pos, &neg)).abs() < 0.01);
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let pos = random_scores(500, 1.5, 5);
        let neg = random_scores(500, 1.0, 6);
        let t = |v: &[f64]| v.iter().map(|x| (x + 1.0).ln() * 3.0).collect::<Vec<_>>();
        let a = roc(&pos, &neg, 20_000).unwrap().auc;
        let b = roc(&t(&pos), &t(&neg), 20_000).unwrap().auc;
        assert!((a - b).abs() < 0.01);
    }

    #[test]
    fn roc_errors() {
        assert!(roc(&[], &[1.0], 10).is_err());
        assert!(roc(&[1.0], &[], 10).is_err());
        assert!(roc(&[-1.0], &[1.0], 10).is_err());
    }

    #[test]
    fn objective_endpoints() {
        assert_eq!(cutoff_objective(0.0, 1.0), 0.0);
        assert_eq!(cutoff_objective(1.0, 0.0), 3f64.sqrt());
    }

    #[test]
    fn perfect_point_is_chosen() {
        let curve = RocCurve {
            points: vec![
                RocPoint { cutoff: 0.0, fpr: 1.0, tpr: 1.0 },
                RocPoint { cutoff: 0.5, fpr: 0.0, tpr: 1.0 },
                RocPoint { cutoff: 1.0, fpr: 0.0, tpr: 0.0 },
            ],
            auc: 1.0,
        };
        assert_eq!(best_cutoff(&curve).unwrap().cutoff, 0.5);
    }

    #[test]
    fn ties_prefer_higher_cutoff() {
        let p = |cutoff| RocPoint { cutoff, fpr: 0.1, tpr: 0.9 };
        let curve = RocCurve { points: vec![p(0.2), p(0.4), p(0.3)], auc: 0.9 };
        assert_eq!(best_cutoff(&curve).unwrap().cutoff, 0.4);
    }

    #[test]
    fn best_cutoff_matches_linear_scan() {
        let pos = random_scores(300, 1.2, 8);
        let neg = random_scores(300, 0.8, 9);
        let c = roc(&pos, &neg, DEFAULT_CUTOFFS).unwrap();
        let best = best_cutoff(&c).unwrap();
        let min = c
            .points
            .iter()
            .map(|p| cutoff_objective(p.fpr, p.tpr))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(cutoff_objective(best.fpr, best.tpr), min);
        for p in &c.points {
            if cutoff_objective(p.fpr, p.tpr) == min {
                assert!(p.fpr > best.fpr || (p.fpr == best.fpr && p.cutoff <= best.cutoff));
            }
        }
    }

    #[test]
    fn confusion_examples() {
        let c = ConfusionSummary::from_counts(9, 1, 9, 1);
        assert_eq!(c.accuracy, 0.9);
        assert_eq!(c.mcc, 0.8);
        let all = confusion(&[0.9, 0.8], &[0.1, 0.2], 0.5);
        assert_eq!((all.accuracy, all.mcc), (1.0, 1.0));
        let none = confusion(&[0.1, 0.2], &[0.1, 0.3], 0.9);
        assert_eq!(none.mcc, 0.0);
        assert_eq!(none.tp + none.fp + none.tn + none.fn_, 4);
        let at = confusion(&[0.5], &[0.5], 0.5);
        assert_eq!((at.tp, at.fp), (1, 1));
    }

    #[test]
    fn svm_separable() {
        let pos: Vec<_> = (0..40).map(|i| ranks(&[("a", 60 + i % 30), ("b", 50 + i % 7)])).collect();
        let neg: Vec<_> = (0..40).map(|i| ranks(&[("a", 10 + i % 30), ("b", 50 + i % 5)])).collect();
        let r = svm_baseline(&pos, &neg, &pos, &neg, 200, 1).unwrap();
        assert_eq!(r.evaluation.confusion.accuracy, 1.0);
        let again = svm_baseline(&pos, &neg, &pos, &neg, 200, 1).unwrap();
        assert_eq!(again.model.weights, r.model.weights);
    }

    #[test]
    fn svm_random_labels_near_chance() {
        let mut r = rng::stream(77, "null");
        let draw = |r: &mut crate::rng::StageRng| ranks(&[("a", r.random_range(1..=100)), ("b", r.random_range(1..=100))]);
        let mut total = 0.0;
        for seed in 0..10 {
            let all: Vec<RankVector> = (0..800).map(|_| draw(&mut r)).collect();
            let (train, test) = all.split_at(400);
            let res = svm_baseline(&train[..200], &train[200..], &test[..200], &test[200..], 20, seed).unwrap();
            total += res.evaluation.confusion.accuracy;
        }
        assert!((total / 10.0 - 0.5).abs() <= 0.1, "{}", total / 10.0);
    }

    #[test]
    fn svm_single_class_is_error() {
        let pos = vec![ranks(&[("a", 1)])];
        assert!(train_svm(&pos, &[], 10, 0).is_err());
    }

    #[test]
    fn screening() {
        let scored: Vec<(Peptide, f64)> = [("GLLKKLLKKG", 0.9), ("AAA", 0.95), ("KWKLFKKIEK", 0.4)]
            .iter()
            .map(|&(s, v)| (Peptide::new(s).unwrap(), v))
            .collect();
        assert_eq!(screen(&scored, 0.0, 0).len(), 3);
        assert_eq!(screen(&scored, 0.0, 0)[0].peptide.as_str(), "AAA");
        assert!(screen(&scored, 1.0, 0).is_empty());
        let long = screen(&scored, 0.0, 30);
        assert!(long.is_empty());
        assert!(screen(&scored, 0.0, 10).iter().all(|h| h.peptide.len() >= 10));
    }

    #[test]
    fn csv_shapes() {
        let c = roc(&[0.2, 0.9], &[0.1], 5).unwrap();
        let mut buf = Vec::new();
        write_roc_csv(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cutoff,fpr,tpr\n"));
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().last().unwrap().starts_with("# auc="));
    }

    proptest! {
        #[test]
        fn roc_is_monotone(pos in proptest::collection::vec(0.0f64..10.0, 1..40),
                           neg in proptest::collection::vec(0.0f64..10.0, 1..40)) {
            let c = roc(&pos, &neg, 50).unwrap();
            for w in c.points.windows(2) {
                prop_assert!(w[0].fpr >= w[1].fpr && w[0].tpr >= w[1].tpr);
            }
            prop_assert!((0.0..=1.0).contains(&c.auc));
        }

        #[test]
        fn confusion_counts_sum(pos in proptest::collection::vec(0.0f64..1.0, 1..30),
                                neg in proptest::collection::vec(0.0f64..1.0, 1..30),
                                cut in 0.0f64..1.0) {
            let c = confusion(&pos, &neg, cut);
            prop_assert_eq!(c.tp + c.fp + c.tn + c.fn_, pos.len() + neg.len());
            prop_assert!((-1.0..=1.0).contains(&c.mcc));
        }

        #[test]
        fn mcc_symmetric_under_exchange(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            let a = ConfusionSummary::from_counts(tp, fp, tn, fn_);
            let b = ConfusionSummary::from_counts(tn, fn_, tp, fp);
            prop_assert!((a.mcc - b.mcc).abs() < 1e-12);
        }
    }
}
