use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use pepbayes::chemspace::{
    exact_distribution, normal_approx, rank_vectors, sample_distribution, ChemicalSpace, DistributionSet,
    RankVector,
};
use pepbayes::combined::{self, CombinedModel, Scorable};
use pepbayes::descriptors::{compute_descriptors, parse_names, ResiduePropertyTable};
use pepbayes::eval::{self, ScreenHit};
use pepbayes::motif::{self, seq_log_likelihood, MotifHyper, MotifModel, ALPHABET_SIZE};
use pepbayes::qspr::{mh_train_traced, qspr_log_score, MixtureModel};
use pepbayes::rng;
use pepbayes::seq::{self, Entry, Peptide, PeptideDataset, ResidueFrequency, Schema, AMINO_ACIDS};

use super::*;

pub const RUN_CONFIG: &str = "run_config.json";

struct Ctx {
    seed: u64,
    out: PathBuf,
    data_dir: Option<PathBuf>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.path(name);
        let f = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let mut f = self.create(name)?;
        f.write_all(text.as_bytes())?;
        if !text.ends_with('\n') {
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    fn write_dataset(&self, name: &str, data: &PeptideDataset) -> Result<()> {
        data.write_csv(self.create(name)?)?;
        Ok(())
    }

    fn data_file(&self, name: &str) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join(name)).filter(|p| p.is_file())
    }

    fn properties(&self, explicit: &Option<PathBuf>) -> Result<ResiduePropertyTable> {
        match explicit.clone().or_else(|| self.data_file("residue_properties.csv")) {
            Some(p) => ResiduePropertyTable::read(&p).with_context(|| format!("reading {}", p.display())),
            None => Ok(ResiduePropertyTable::standard()),
        }
    }

    fn frequencies(&self, explicit: &Option<PathBuf>) -> Result<ResidueFrequency> {
        match explicit.clone().or_else(|| self.data_file("residue_frequency.csv")) {
            Some(p) => ResidueFrequency::read(&p).with_context(|| format!("reading {}", p.display())),
            None => Ok(ResidueFrequency::protein_default()),
        }
    }
}

fn read(path: &Path, schema: Schema) -> Result<PeptideDataset> {
    PeptideDataset::read(path, schema).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

/// Run a parsed command line. A replayed config writes beside itself unless
/// `--out-dir` is given.
pub fn execute(cli: Cli) -> Result<()> {
    if let Command::Rerun(args) = &cli.command {
        let mut replay: Cli = read_json(&args.config)?;
        if matches!(replay.command, Command::Rerun(_)) {
            bail!("a run config cannot itself be a rerun");
        }
        replay.out_dir = Some(match cli.out_dir {
            Some(d) => d,
            None => args.config.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
        });
        return execute(replay);
    }
    let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let ctx = Ctx {
        seed: cli.seed,
        out,
        data_dir: cli.data_dir.clone(),
    };
    match &cli.command {
        Command::Ingest(a) => ingest(&ctx, a)?,
        Command::Dedup(a) => dedup(&ctx, a)?,
        Command::Decoy(a) => decoy(&ctx, a)?,
        Command::Split(a) => split(&ctx, a)?,
        Command::Descriptors(a) => descriptors(&ctx, a)?,
        Command::Space(a) => space(&ctx, a)?,
        Command::Rank(a) => rank(&ctx, a)?,
        Command::TrainQspr(a) => train_qspr(&ctx, a)?,
        Command::TrainMotif(a) => train_motif(&ctx, a)?,
        Command::Combine(a) => combine(&ctx, a)?,
        Command::Evaluate(a) => evaluate(&ctx, a)?,
        Command::Screen(a) => screen(&ctx, a)?,
        Command::BaselineSvm(a) => baseline_svm(&ctx, a)?,
        Command::ReportMotifs(a) => report_motifs(&ctx, a)?,
        Command::Rerun(_) => unreachable!("handled above"),
    }
    ctx.write_text(RUN_CONFIG, &to_json(&cli)?)
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> Result<()> {
    let schema = if a.sequences_only { Schema::SequencesOnly } else { Schema::WithDescriptors };
    let data = read(&a.input, schema)?;
    ensure!(!data.is_empty(), "{} contains no sequences", a.input.display());
    ctx.write_dataset("dataset.csv", &data)?;
    println!("ingested {} peptides", data.len());
    Ok(())
}

fn dedup(ctx: &Ctx, a: &DedupArgs) -> Result<()> {
    let data = read(&a.input, Schema::WithDescriptors)?;
    let kept = seq::dedup_similar(&data, a.max_subs);
    ctx.write_dataset("dedup.csv", &kept)?;
    println!("kept {} of {} peptides", kept.len(), data.len());
    Ok(())
}

fn label_all(data: &PeptideDataset, label: bool) -> Vec<Entry> {
    data.entries()
        .iter()
        .map(|e| Entry {
            peptide: e.peptide.clone(),
            label: Some(label),
            values: Vec::new(),
        })
        .collect()
}

fn decoy(ctx: &Ctx, a: &DecoyArgs) -> Result<()> {
    let data = read(&a.input, Schema::SequencesOnly)?;
    let freq = ctx.frequencies(&a.frequencies)?;
    let decoys = seq::make_decoys(&data, &freq, ctx.seed);
    ctx.write_dataset("decoys.csv", &decoys)?;
    let mut labeled = PeptideDataset::new(Vec::new());
    for e in label_all(&data, true).into_iter().chain(label_all(&decoys, false)) {
        labeled.push(e)?;
    }
    ctx.write_dataset("labeled.csv", &labeled)?;
    println!("generated {} decoys", decoys.len());
    Ok(())
}

fn split(ctx: &Ctx, a: &SplitArgs) -> Result<()> {
    let data = read(&a.input, Schema::WithDescriptors)?;
    let (train, test) = seq::split(&data, a.test_fraction, ctx.seed)?;
    ctx.write_dataset("train.csv", &train)?;
    ctx.write_dataset("test.csv", &test)?;
    println!("train {} / test {}", train.len(), test.len());
    Ok(())
}

fn split_names(list: &str) -> Vec<String> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn descriptors(ctx: &Ctx, a: &DescriptorArgs) -> Result<()> {
    let data = read(&a.input, Schema::SequencesOnly)?;
    let table = ctx.properties(&a.properties)?;
    let names = split_names(&a.descriptors);
    parse_names(&names)?;
    let mut out = PeptideDataset::new(names.clone());
    out.provenance = data.provenance.clone();
    for e in data.entries() {
        let v = compute_descriptors(&e.peptide, &table, &names)?;
        out.push(Entry {
            peptide: e.peptide.clone(),
            label: e.label,
            values: v.values.into_iter().map(|(_, x)| x).collect(),
        })?;
    }
    ctx.write_dataset("descriptors.csv", &out)?;
    println!("computed {} descriptors for {} peptides", names.len(), out.len());
    Ok(())
}

fn parse_list<T: std::str::FromStr>(list: &str, what: &str) -> Result<Vec<T>> {
    split_names(list)
        .iter()
        .map(|s| s.parse::<T>().map_err(|_| anyhow!("invalid {what} '{s}'")))
        .collect()
}

fn space(ctx: &Ctx, a: &SpaceArgs) -> Result<()> {
    let table = ctx.properties(&a.properties)?;
    let descriptors = parse_names(&split_names(&a.descriptors))?;
    let mut lengths: Vec<usize> = match (&a.lengths, &a.lengths_from) {
        (Some(list), _) => parse_list(list, "length")?,
        (None, Some(path)) => read(path, Schema::SequencesOnly)?.peptides().map(Peptide::len).collect(),
        (None, None) => bail!("give --lengths or --lengths-from"),
    };
    lengths.sort_unstable();
    lengths.dedup();
    ensure!(!lengths.is_empty(), "no peptide lengths given");
    let mut set = DistributionSet::default();
    let mut warned = Vec::new();
    for (di, &d) in descriptors.iter().enumerate() {
        for &l in &lengths {
            let space = ChemicalSpace::uniform(l)?;
            let dist = match a.method {
                SpaceMethod::Exact => exact_distribution(&space, &table, d)?,
                SpaceMethod::Normal => normal_approx(&space, &table, d)?,
                SpaceMethod::Sampled => {
                    let seed = rng::derive_indexed(ctx.seed, d.name(), (di * 1_000_003 + l) as u64);
                    sample_distribution(&space, &table, d, a.samples, seed)?
                }
            };
            if dist.zero_fraction_warning() && !warned.contains(&d) {
                eprintln!("warning: most residues contribute 0 to {d}; its normal approximation may fit poorly");
                warned.push(d);
            }
            set.distributions.push(dist.with_quantiles(a.quantiles)?);
        }
    }
    ctx.write_text("space.json", &set.to_json()?)?;
    println!("built {} distributions", set.distributions.len());
    Ok(())
}

fn rank(ctx: &Ctx, a: &RankArgs) -> Result<()> {
    let data = read(&a.input, Schema::WithDescriptors)?;
    let set = DistributionSet::read(&a.space).with_context(|| format!("reading {}", a.space.display()))?;
    let ranked = set.rank_dataset(&data)?;
    ctx.write_dataset("ranks.csv", &ranked)?;
    println!("ranked {} peptides", ranked.len());
    Ok(())
}

fn partition(data: &PeptideDataset) -> Result<(PeptideDataset, PeptideDataset)> {
    let mut pos = PeptideDataset::new(data.names().to_vec());
    let mut neg = PeptideDataset::new(data.names().to_vec());
    for (i, e) in data.entries().iter().enumerate() {
        match e.label {
            Some(true) => pos.push(e.clone())?,
            Some(false) => neg.push(e.clone())?,
            None => bail!("entry {} ({}) has no label", i + 1, e.peptide),
        }
    }
    Ok((pos, neg))
}

fn load_labeled(
    input: &Option<PathBuf>,
    positives: &Option<PathBuf>,
    negatives: &Option<PathBuf>,
) -> Result<(PeptideDataset, PeptideDataset)> {
    let (pos, neg) = match (input, positives, negatives) {
        (Some(i), _, _) => partition(&read(i, Schema::WithDescriptors)?)?,
        (None, Some(p), Some(n)) => (read(p, Schema::WithDescriptors)?, read(n, Schema::WithDescriptors)?),
        _ => bail!("give a labeled --input or both --positives and --negatives"),
    };
    ensure!(!pos.is_empty(), "no positive peptides");
    ensure!(!neg.is_empty(), "no negative peptides");
    Ok((pos, neg))
}

impl LabeledArgs {
    fn load(&self) -> Result<(PeptideDataset, PeptideDataset)> {
        load_labeled(&self.input, &self.positives, &self.negatives)
    }
}

fn train_qspr(ctx: &Ctx, a: &TrainQsprArgs) -> Result<()> {
    let (pos, neg) = a.data.load()?;
    ensure!(!pos.names().is_empty(), "input has no rank columns");
    ensure!(pos.names() == neg.names(), "positive and negative files have different columns");
    let init = MixtureModel::init(a.kernels, pos.names(), a.quantiles, rng::derive_seed(ctx.seed, "qspr"))?;
    let (model, trace) = mh_train_traced(&init, &rank_vectors(&pos)?, &rank_vectors(&neg)?, a.steps, ctx.seed)?;
    ctx.write_text("qspr_model.json", &model.to_json()?)?;
    let mut f = ctx.create("qspr_trace.csv")?;
    writeln!(f, "step,log_posterior")?;
    for (i, lp) in trace.log_posterior.iter().enumerate() {
        writeln!(f, "{},{}", i + 1, lp)?;
    }
    f.flush()?;
    println!("trained {} kernels x {} descriptors; acceptance {:.3}", a.kernels, pos.names().len(), trace.acceptance_rate);
    Ok(())
}

fn active_only(data: PeptideDataset) -> Result<PeptideDataset> {
    let mut out = PeptideDataset::new(data.names().to_vec());
    for e in data.entries().iter().filter(|e| e.label != Some(false)) {
        out.push(e.clone())?;
    }
    Ok(out)
}

fn train_motif(ctx: &Ctx, a: &TrainMotifArgs) -> Result<()> {
    let data = active_only(read(&a.input, Schema::SequencesOnly)?)?;
    let hyper = MotifHyper {
        lambda: a.lambda,
        noise: a.noise,
        train_prior: !a.uniform_prior,
    };
    let width = if a.motifs == 0 { 0 } else { a.width };
    let init = MotifModel::new(a.motifs, width, hyper, ctx.seed)?;
    let model = motif::train_motif(&init, &data, a.iterations)?;
    ctx.write_text("motif_model.json", &model.to_json()?)?;
    let mut f = ctx.create("motif_trace.csv")?;
    writeln!(f, "iteration,loss")?;
    for (i, l) in model.trace.iter().enumerate() {
        writeln!(f, "{},{}", i + 1, l)?;
    }
    f.flush()?;
    if model.resets > 0 {
        eprintln!("warning: {} updates clipped to zero and were reset to uniform", model.resets);
    }
    println!("trained {} motif(s) of width {} on {} peptides", a.motifs, width, data.len());
    Ok(())
}

/// Peptides with rank vectors; a dataset without columns gets empty vectors.
fn scorables(data: &PeptideDataset) -> Result<Vec<Scorable>> {
    let ranks = rank_vectors(data)?;
    Ok(data.peptides().cloned().zip(ranks).collect())
}

fn read_qspr(path: &Path) -> Result<MixtureModel> {
    MixtureModel::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_motif(path: &Path) -> Result<MotifModel> {
    MotifModel::read(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_grid(grid: &str) -> Result<Vec<f64>> {
    if grid.contains(',') {
        parse_list(grid, "weight")
    } else {
        let n: usize = grid.trim().parse().map_err(|_| anyhow!("invalid weight grid '{grid}'"))?;
        Ok(combined::weight_grid(n)?)
    }
}

fn combine(ctx: &Ctx, a: &CombineArgs) -> Result<()> {
    let (pos, neg) = a.data.load()?;
    let (qspr, motif) = (read_qspr(&a.qspr_model)?, read_motif(&a.motif_model)?);
    let (pos, neg) = (scorables(&pos)?, scorables(&neg)?);
    let reference = match &a.reference {
        Some(p) => scorables(&read(p, Schema::WithDescriptors)?)?,
        None => pos.clone(),
    };
    let mut model = CombinedModel::new(&qspr, &motif, 0.0)?;
    let norms = model.calibrate(&reference)?;
    let rows = combined::weight_sweep(&model, &pos, &neg, &parse_grid(&a.weight_grid)?)?;
    ctx.write_text("normalizers.json", &to_json(&norms)?)?;
    let mut f = ctx.create("sweep.csv")?;
    combined::write_sweep_csv(&rows, &mut f)?;
    f.flush()?;
    let best = rows
        .iter()
        .fold(None::<&combined::SweepRow>, |b, r| match b {
            Some(b) if b.accuracy >= r.accuracy => Some(b),
            _ => Some(r),
        })
        .expect("nonempty grid");
    println!("best weight {} accuracy {:.4} mcc {:.4}", best.weight, best.accuracy, best.mcc);
    Ok(())
}

/// Log maxima of whichever halves are in use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct HalfNorms {
    qspr_log_max: Option<f64>,
    motif_log_max: Option<f64>,
}

/// Scores peptides with a QSPR model, a motif model, or their weighted sum;
/// each half is normalized by its maximum over a reference set.
struct Scorer {
    qspr: Option<MixtureModel>,
    motif: Option<MotifModel>,
    weight: f64,
    norms: HalfNorms,
}

impl Scorer {
    fn new(m: &ModelArgs) -> Result<Self> {
        let qspr = m.qspr_model.as_deref().map(read_qspr).transpose()?;
        let motif = m.motif_model.as_deref().map(read_motif).transpose()?;
        let weight = match (&qspr, &motif, m.weight) {
            (None, None, _) => bail!("give --qspr-model, --motif-model, or both"),
            (Some(_), Some(_), Some(w)) => w,
            (Some(_), Some(_), None) => bail!("--weight is required when both models are given"),
            (Some(_), None, _) => 0.0,
            (None, Some(_), _) => 1.0,
        };
        ensure!((0.0..=1.0).contains(&weight), "weight must be in [0, 1]");
        Ok(Self {
            qspr,
            motif,
            weight,
            norms: HalfNorms {
                qspr_log_max: None,
                motif_log_max: None,
            },
        })
    }

    fn logs(&self, (p, r): &Scorable) -> Result<(Option<f64>, Option<f64>)> {
        let q = self.qspr.as_ref().map(|m| qspr_log_score(m, r)).transpose()?;
        let m = self.motif.as_ref().map(|m| seq_log_likelihood(m, p)).transpose()?;
        Ok((q, m))
    }

    fn calibrate(&mut self, reference: &[Scorable]) -> Result<()> {
        ensure!(!reference.is_empty(), "calibration reference set is empty");
        let (mut q, mut m) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for item in reference {
            let (lq, lm) = self.logs(item)?;
            q = q.max(lq.unwrap_or(f64::NEG_INFINITY));
            m = m.max(lm.unwrap_or(f64::NEG_INFINITY));
        }
        let check = |present: bool, v: f64, half: &str| -> Result<Option<f64>> {
            if !present {
                return Ok(None);
            }
            ensure!(v.is_finite(), "every reference peptide has zero {half} likelihood");
            Ok(Some(v))
        };
        self.norms = HalfNorms {
            qspr_log_max: check(self.qspr.is_some(), q, "QSPR")?,
            motif_log_max: check(self.motif.is_some(), m, "motif")?,
        };
        Ok(())
    }

    fn score(&self, item: &Scorable) -> Result<f64> {
        let (lq, lm) = self.logs(item)?;
        let half = |l: Option<f64>, max: Option<f64>| -> Result<f64> {
            match (l, max) {
                (None, _) => Ok(0.0),
                (Some(l), Some(max)) => Ok((l - max).exp()),
                (Some(_), None) => bail!("scorer is not calibrated"),
            }
        };
        let (q, m) = (half(lq, self.norms.qspr_log_max)?, half(lm, self.norms.motif_log_max)?);
        Ok((1.0 - self.weight) * q + self.weight * m)
    }

    #[cfg(test)]
    fn as_normalizers(&self) -> Option<combined::Normalizers> {
        Some(combined::Normalizers {
            qspr_log_max: self.norms.qspr_log_max?,
            motif_log_max: self.norms.motif_log_max?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvaluationFile {
    auc: f64,
    cutoff: f64,
    fpr: f64,
    tpr: f64,
    accuracy: f64,
    mcc: f64,
    weight: Option<f64>,
    normalizers: Option<HalfNorms>,
}

fn read_scores(path: &Path) -> Result<Vec<(Peptide, Option<bool>, f64)>> {
    let data = read(path, Schema::WithDescriptors)?;
    let col = data
        .column("score")
        .ok_or_else(|| anyhow!("{} has no 'score' column", path.display()))?;
    Ok(data
        .entries()
        .iter()
        .map(|e| (e.peptide.clone(), e.label, e.values[col]))
        .collect())
}

fn write_scores(ctx: &Ctx, rows: &[(&Peptide, bool, f64)]) -> Result<()> {
    let mut f = ctx.create("scores.csv")?;
    writeln!(f, "sequence,label,score")?;
    for (p, label, s) in rows {
        writeln!(f, "{},{},{}", p, u8::from(*label), s)?;
    }
    f.flush()?;
    Ok(())
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let (pos_scores, neg_scores, weight, norms) = if let Some(path) = &a.scores {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (p, label, s) in read_scores(path)? {
            match label {
                Some(true) => pos.push(s),
                Some(false) => neg.push(s),
                None => bail!("score row for {p} has no label"),
            }
        }
        (pos, neg, None, None)
    } else {
        let (pos, neg) = load_labeled(&a.input, &a.positives, &a.negatives)?;
        let (pos, neg) = (scorables(&pos)?, scorables(&neg)?);
        let mut scorer = Scorer::new(&a.models)?;
        let reference = match &a.models.reference {
            Some(p) => scorables(&read(p, Schema::WithDescriptors)?)?,
            None => pos.clone(),
        };
        scorer.calibrate(&reference)?;
        let score = |set: &[Scorable]| set.iter().map(|i| scorer.score(i)).collect::<Result<Vec<_>>>();
        let (ps, ns) = (score(&pos)?, score(&neg)?);
        let rows: Vec<(&Peptide, bool, f64)> = pos
            .iter()
            .zip(&ps)
            .map(|((p, _), &s)| (p, true, s))
            .chain(neg.iter().zip(&ns).map(|((p, _), &s)| (p, false, s)))
            .collect();
        write_scores(ctx, &rows)?;
        (ps, ns, Some(scorer.weight), Some(scorer.norms))
    };
    let e = eval::evaluate(&pos_scores, &neg_scores, a.cutoffs)?;
    let mut f = ctx.create("roc.csv")?;
    eval::write_roc_csv(&e.roc, &mut f)?;
    f.flush()?;
    let mut f = ctx.create("confusion.csv")?;
    eval::write_confusion_csv(&e.confusion, &mut f)?;
    f.flush()?;
    let summary = EvaluationFile {
        auc: e.roc.auc,
        cutoff: e.best.cutoff,
        fpr: e.best.fpr,
        tpr: e.best.tpr,
        accuracy: e.confusion.accuracy,
        mcc: e.confusion.mcc,
        weight,
        normalizers: norms,
    };
    ctx.write_text("evaluation.json", &to_json(&summary)?)?;
    println!(
        "auc {:.4} cutoff {} accuracy {:.4} mcc {:.4}",
        summary.auc, summary.cutoff, summary.accuracy, summary.mcc
    );
    Ok(())
}

fn screen(ctx: &Ctx, a: &ScreenArgs) -> Result<()> {
    let evaluation: Option<EvaluationFile> = a.evaluation.as_deref().map(read_json).transpose()?;
    let cutoff = match (a.cutoff, &evaluation) {
        (Some(c), _) => c,
        (None, Some(e)) => e.cutoff,
        (None, None) => bail!("give --cutoff or --evaluation"),
    };
    let scored: Vec<(Peptide, f64)> = if let Some(path) = &a.scores {
        read_scores(path)?.into_iter().map(|(p, _, s)| (p, s)).collect()
    } else {
        let input = a.input.as_ref().ok_or_else(|| anyhow!("give --input or --scores"))?;
        let items = scorables(&read(input, Schema::WithDescriptors)?)?;
        let mut models = a.models.clone();
        if models.weight.is_none() {
            models.weight = evaluation.as_ref().and_then(|e| e.weight);
        }
        let mut scorer = Scorer::new(&models)?;
        match (evaluation.as_ref().and_then(|e| e.normalizers), &models.reference) {
            (Some(n), None) => scorer.norms = n,
            (_, Some(p)) => scorer.calibrate(&scorables(&read(p, Schema::WithDescriptors)?)?)?,
            (None, None) => scorer.calibrate(&items)?,
        }
        items
            .iter()
            .map(|i| Ok((i.0.clone(), scorer.score(i)?)))
            .collect::<Result<Vec<_>>>()?
    };
    let hits: Vec<ScreenHit> = eval::screen(&scored, cutoff, a.min_length);
    let mut f = ctx.create("screen.csv")?;
    eval::write_screen_csv(&hits, &mut f)?;
    f.flush()?;
    let eligible = scored.iter().filter(|(p, _)| p.len() >= a.min_length).count();
    println!("selected {} of {} eligible peptides", hits.len(), eligible);
    Ok(())
}

fn baseline_svm(ctx: &Ctx, a: &SvmArgs) -> Result<()> {
    let (train_pos, train_neg) = partition(&read(&a.train, Schema::WithDescriptors)?)?;
    let (test_pos, test_neg) = partition(&read(&a.test, Schema::WithDescriptors)?)?;
    let rv = |d: &PeptideDataset| -> Result<Vec<RankVector>> { Ok(rank_vectors(d)?) };
    let result = eval::svm_baseline(
        &rv(&train_pos)?,
        &rv(&train_neg)?,
        &rv(&test_pos)?,
        &rv(&test_neg)?,
        a.epochs,
        ctx.seed,
    )?;
    ctx.write_text("svm_model.json", &to_json(&result.model)?)?;
    let mut f = ctx.create("roc.csv")?;
    eval::write_roc_csv(&result.evaluation.roc, &mut f)?;
    f.flush()?;
    let mut f = ctx.create("confusion.csv")?;
    eval::write_confusion_csv(&result.evaluation.confusion, &mut f)?;
    f.flush()?;
    println!(
        "svm accuracy {:.4} mcc {:.4}",
        result.evaluation.confusion.accuracy, result.evaluation.confusion.mcc
    );
    Ok(())
}

fn report_motifs(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let model = read_motif(&a.motif_model)?;
    let data = read(&a.input, Schema::SequencesOnly)?;
    let rows = motif::motif_report(&model, &data)?;
    let mut f = ctx.create("motif_report.csv")?;
    writeln!(f, "motif,consensus,pattern,predict,found")?;
    for r in &rows {
        writeln!(f, "{},{},{},{},{}", r.motif + 1, r.consensus, r.pattern, r.predict, r.found)?;
    }
    f.flush()?;
    let mut f = ctx.create("background.csv")?;
    writeln!(f, "residue,probability")?;
    for (a, p) in model.background.iter().enumerate() {
        writeln!(f, "{},{}", AMINO_ACIDS[a] as char, p)?;
    }
    f.flush()?;
    let mut f = ctx.create("motif_positions.csv")?;
    writeln!(f, "motif,position,residue,probability")?;
    for (m, positions) in model.motifs.iter().enumerate() {
        for (j, dist) in positions.iter().enumerate() {
            for a in 0..ALPHABET_SIZE {
                writeln!(f, "{},{},{},{}", m + 1, j + 1, AMINO_ACIDS[a] as char, dist[a])?;
            }
        }
    }
    f.flush()?;
    println!("reported {} motif(s)", rows.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scorer_matches_library_combined_model() {
        let data = motif::imposed_motif_dataset("ARND", 20, 3, 1).unwrap();
        let motif = motif::train_motif(&MotifModel::new(1, 4, MotifHyper::default(), 0).unwrap(), &data, 10).unwrap();
        let qspr = MixtureModel::with_defaults(1, &["a"], 0).unwrap();
        let items: Vec<Scorable> = data
            .peptides()
            .enumerate()
            .map(|(i, p)| (p.clone(), RankVector::new(vec![("a".into(), 1 + i as u32 * 4)])))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let (qp, mp) = (dir.path().join("q.json"), dir.path().join("m.json"));
        fs::write(&qp, qspr.to_json().unwrap()).unwrap();
        fs::write(&mp, motif.to_json().unwrap()).unwrap();
        let args = ModelArgs {
            qspr_model: Some(qp),
            motif_model: Some(mp),
            weight: Some(0.3),
            reference: None,
        };
        let mut s = Scorer::new(&args).unwrap();
        s.calibrate(&items).unwrap();
        let lib = CombinedModel::new(&qspr, &motif, 0.3).unwrap().with_normalizers(s.as_normalizers().unwrap());
        for (p, r) in &items {
            assert_eq!(s.score(&(p.clone(), r.clone())).unwrap(), combined::combined_score(&lib, p, r).unwrap());
        }
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0, 0.25").unwrap(), vec![0.0, 0.25]);
        assert!(parse_grid("x").is_err());
    }
}
