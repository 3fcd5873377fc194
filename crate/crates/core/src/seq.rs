//! Peptide sequences, CSV datasets, similarity filtering, decoys and splits.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// The 20 canonical amino acids in one-letter code.
pub const AMINO_ACIDS: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

const DEFAULT_FREQUENCY_CSV: &str = include_str!("../data/residue_frequency.csv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<u8>,
    lookup: [Option<u8>; 256],
}

impl Alphabet {
    pub fn new(symbols: &[u8]) -> Result<Self> {
        if symbols.is_empty() || symbols.len() > 255 {
            return Err(Error::invalid("alphabet must hold 1..=255 symbols"));
        }
        let mut lookup = [None; 256];
        for (i, &s) in symbols.iter().enumerate() {
            let s = s.to_ascii_uppercase();
            if lookup[s as usize].is_some() {
                return Err(Error::invalid(format!("duplicate symbol '{}'", s as char)));
            }
            lookup[s as usize] = Some(i as u8);
        }
        Ok(Self {
            symbols: symbols.iter().map(u8::to_ascii_uppercase).collect(),
            lookup,
        })
    }

    pub fn amino_acids() -> Self {
        Self::new(AMINO_ACIDS).expect("canonical alphabet is valid")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn index_of(&self, letter: u8) -> Option<u8> {
        self.lookup[letter.to_ascii_uppercase() as usize]
    }

    pub fn symbol(&self, index: u8) -> char {
        self.symbols[index as usize] as char
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::amino_acids()
    }
}

/// A validated peptide: the uppercase letters plus their alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Peptide {
    text: String,
    residues: Vec<u8>,
}

impl Peptide {
    /// Parse against the canonical amino-acid alphabet.
    pub fn new(sequence: &str) -> Result<Self> {
        Self::parse(sequence, &Alphabet::amino_acids(), 0)
    }

    pub fn parse(sequence: &str, alphabet: &Alphabet, line: usize) -> Result<Self> {
        let text = sequence.trim().to_ascii_uppercase();
        if text.is_empty() {
            return Err(Error::Format {
                line,
                message: "empty sequence".into(),
            });
        }
        let residues = text
            .bytes()
            .map(|b| {
                alphabet.index_of(b).ok_or_else(|| Error::InvalidResidue {
                    line,
                    letter: b as char,
                    sequence: text.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { text, residues })
    }

    /// Build from canonical alphabet indices.
    pub fn from_indices(residues: Vec<u8>) -> Result<Self> {
        if residues.is_empty() {
            return Err(Error::invalid("empty peptide"));
        }
        let text = residues
            .iter()
            .map(|&r| {
                AMINO_ACIDS
                    .get(r as usize)
                    .map(|&b| b as char)
                    .ok_or_else(|| Error::invalid(format!("residue index {r} out of range")))
            })
            .collect::<Result<String>>()?;
        Ok(Self { text, residues })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn residues(&self) -> &[u8] {
        &self.residues
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    pub fn contains(&self, motif: &Peptide) -> bool {
        self.text.contains(motif.as_str())
    }
}

impl fmt::Display for Peptide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub peptide: Peptide,
    pub label: Option<bool>,
    /// Descriptor values, aligned with [`PeptideDataset::names`].
    pub values: Vec<f64>,
}

impl Entry {
    pub fn new(peptide: Peptide) -> Self {
        Self {
            peptide,
            label: None,
            values: Vec::new(),
        }
    }
}

/// Which columns of a dataset file are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// Only `sequence` (and `label`, if present); other columns are ignored.
    SequencesOnly,
    /// Every column other than `sequence` and `label` is a real-valued descriptor.
    WithDescriptors,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeptideDataset {
    pub provenance: Option<String>,
    names: Vec<String>,
    entries: Vec<Entry>,
}

impl PeptideDataset {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            provenance: None,
            names,
            entries: Vec::new(),
        }
    }

    pub fn from_peptides(peptides: impl IntoIterator<Item = Peptide>) -> Self {
        let mut d = Self::new(Vec::new());
        d.entries = peptides.into_iter().map(Entry::new).collect();
        d
    }

    pub fn from_sequences<S: AsRef<str>>(sequences: &[S]) -> Result<Self> {
        let peptides = sequences
            .iter()
            .map(|s| Peptide::new(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_peptides(peptides))
    }

    pub fn with_provenance(mut self, tag: impl Into<String>) -> Self {
        self.provenance = Some(tag.into());
        self
    }

    /// Append an entry; its values must align with the dataset's columns.
    pub fn push(&mut self, entry: Entry) -> Result<()> {
        if entry.values.len() != self.names.len() {
            return Err(Error::invalid(format!(
                "entry has {} descriptor values, dataset has {} columns",
                entry.values.len(),
                self.names.len()
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn peptides(&self) -> impl Iterator<Item = &Peptide> {
        self.entries.iter().map(|e| &e.peptide)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn with_entries(&self, entries: Vec<Entry>) -> Self {
        Self {
            provenance: self.provenance.clone(),
            names: self.names.clone(),
            entries,
        }
    }

    pub fn read(path: impl AsRef<Path>, schema: Schema) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse_dataset(&text, schema)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let has_label = self.entries.iter().any(|e| e.label.is_some());
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["sequence".to_string()];
        if has_label {
            header.push("label".into());
        }
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.peptide.to_string()];
            if has_label {
                row.push(match e.label {
                    Some(true) => "1".into(),
                    Some(false) => "0".into(),
                    None => String::new(),
                });
            }
            row.extend(e.values.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Parse a dataset CSV. The first header column must be `sequence`.
pub fn parse_dataset(text: &str, schema: Schema) -> Result<PeptideDataset> {
    let alphabet = Alphabet::amino_acids();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Format {
        line: 1,
        message: e.to_string(),
    })?;
    let header: Vec<String> = header.iter().map(str::to_string).collect();
    if header.first().map(|h| h.eq_ignore_ascii_case("sequence")) != Some(true) {
        return Err(Error::Format {
            line: 1,
            message: "first column must be named 'sequence'".into(),
        });
    }
    let label_col = header.iter().position(|h| h.eq_ignore_ascii_case("label"));
    let value_cols: Vec<usize> = match schema {
        Schema::SequencesOnly => Vec::new(),
        Schema::WithDescriptors => (1..header.len()).filter(|&i| Some(i) != label_col).collect(),
    };
    let names = value_cols.iter().map(|&i| header[i].clone()).collect();
    let mut data = PeptideDataset::new(names);

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Format {
                line,
                message: match e.kind() {
                    csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                        format!("ragged row: expected {expected_len} fields, found {len}")
                    }
                    _ => e.to_string(),
                },
            }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let peptide = Peptide::parse(&record[0], &alphabet, line)?;
        let label = match label_col {
            Some(c) => parse_label(&record[c], line)?,
            None => None,
        };
        let values = value_cols
            .iter()
            .map(|&c| {
                record[c].parse::<f64>().map_err(|_| Error::Format {
                    line,
                    message: format!("column '{}': '{}' is not a number", header[c], &record[c]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        data.entries.push(Entry {
            peptide,
            label,
            values,
        });
    }
    Ok(data)
}

fn parse_label(field: &str, line: usize) -> Result<Option<bool>> {
    match field {
        "" => Ok(None),
        "1" | "true" | "TRUE" | "active" => Ok(Some(true)),
        "0" | "false" | "FALSE" | "inactive" => Ok(Some(false)),
        other => Err(Error::Format {
            line,
            message: format!("unrecognized label '{other}'"),
        }),
    }
}

/// Number of mismatched positions, or `None` for sequences of different length.
pub fn hamming(a: &Peptide, b: &Peptide) -> Option<usize> {
    (a.len() == b.len()).then(|| {
        a.residues()
            .iter()
            .zip(b.residues())
            .filter(|(x, y)| x != y)
            .count()
    })
}

/// Greedy similarity filter: keep an entry only if no already-kept entry of
/// the same length lies within `max_subs` substitutions of it.
pub fn dedup_similar(data: &PeptideDataset, max_subs: usize) -> PeptideDataset {
    let mut kept: Vec<Entry> = Vec::new();
    for entry in data.entries() {
        let similar = kept.iter().any(|k| {
            hamming(&k.peptide, &entry.peptide).is_some_and(|d| d <= max_subs)
        });
        if !similar {
            kept.push(entry.clone());
        }
    }
    data.with_entries(kept)
}

/// Residue composition used to draw decoy sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueFrequency {
    probs: Vec<f64>,
}

impl ResidueFrequency {
    /// Normalize nonnegative per-symbol weights (canonical alphabet order).
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.len() != AMINO_ACIDS.len() {
            return Err(Error::invalid(format!(
                "expected {} weights, got {}",
                AMINO_ACIDS.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("residue weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("residue weights sum to zero"));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform() -> Self {
        Self {
            probs: vec![1.0 / AMINO_ACIDS.len() as f64; AMINO_ACIDS.len()],
        }
    }

    /// Shipped protein-composition table (editable copy in `data/`).
    pub fn protein_default() -> Self {
        Self::parse(DEFAULT_FREQUENCY_CSV).expect("shipped frequency table parses")
    }

    /// Parse `symbol,probability` rows. Values are renormalized, so
    /// percentages are accepted.
    pub fn parse(text: &str) -> Result<Self> {
        let alphabet = Alphabet::amino_acids();
        let mut weights = vec![f64::NAN; alphabet.len()];
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let fmt_err = |message: String| Error::Format { line, message };
            if record.len() != 2 {
                return Err(fmt_err("expected 'symbol,probability'".into()));
            }
            let sym = record[0].as_bytes();
            let idx = match sym {
                [b] => alphabet.index_of(*b),
                _ => None,
            }
            .ok_or_else(|| fmt_err(format!("unknown symbol '{}'", &record[0])))?;
            let p: f64 = record[1]
                .parse()
                .map_err(|_| fmt_err(format!("'{}' is not a number", &record[1])))?;
            weights[idx as usize] = p;
        }
        if let Some(i) = weights.iter().position(|w| w.is_nan()) {
            return Err(Error::invalid(format!(
                "frequency table has no row for '{}'",
                alphabet.symbol(i as u8)
            )));
        }
        Self::from_weights(&weights)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

/// One decoy per entry: same length, every residue drawn independently from `freq`.
pub fn make_decoys(data: &PeptideDataset, freq: &ResidueFrequency, seed: u64) -> PeptideDataset {
    let sampler = WeightedIndex::new(freq.probabilities()).expect("validated frequency table");
    let mut rng = rng::stream(seed, "decoy");
    let entries = data
        .entries()
        .iter()
        .map(|e| {
            let residues = (0..e.peptide.len())
                .map(|_| sampler.sample(&mut rng) as u8)
                .collect();
            Entry {
                peptide: Peptide::from_indices(residues).expect("nonempty source"),
                label: Some(false),
                values: Vec::new(),
            }
        })
        .collect();
    PeptideDataset {
        provenance: Some("decoys".into()),
        names: Vec::new(),
        entries,
    }
}

/// Random train/test partition with `round(test_fraction * n)` test entries.
/// Both parts keep the input order.
pub fn split(
    data: &PeptideDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(PeptideDataset, PeptideDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test fraction must lie strictly between 0 and 1"));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::Empty(format!("cannot split a dataset of {n} entries")));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = data
        .entries()
        .iter()
        .cloned()
        .zip(is_test)
        .partition(|(_, t)| *t);
    let strip = |v: Vec<(Entry, bool)>| v.into_iter().map(|(e, _)| e).collect();
    Ok((data.with_entries(strip(train)), data.with_entries(strip(test))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seqs(d: &PeptideDataset) -> Vec<&str> {
        d.peptides().map(Peptide::as_str).collect()
    }

    #[test]
    fn canonical_alphabet() {
        let a = Alphabet::amino_acids();
        assert_eq!(a.len(), 20);
        for (i, &s) in AMINO_ACIDS.iter().enumerate() {
            assert_eq!(a.index_of(s), Some(i as u8));
            assert_eq!(a.index_of(s.to_ascii_lowercase()), Some(i as u8));
        }
        assert_eq!(a.index_of(b'B'), None);
        assert!(Alphabet::new(b"AA").is_err());
    }

    #[test]
    fn parses_header_and_rows() {
        let d = parse_dataset("sequence,net_charge\nKKL,2\nddE,-3\n", Schema::WithDescriptors).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.names(), ["net_charge"]);
        assert_eq!(seqs(&d), ["KKL", "DDE"]);
        assert_eq!(d.entries()[1].values, [-3.0]);
    }

    #[test]
    fn crlf_and_duplicates_are_kept() {
        let d = parse_dataset("sequence\r\nGLL\r\nGLL\r\n", Schema::SequencesOnly).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn invalid_letter_names_line_and_letter() {
        let err = parse_dataset("sequence\nAAA\nABA\n", Schema::SequencesOnly).unwrap_err();
        match err {
            Error::InvalidResidue { line, letter, .. } => {
                assert_eq!(line, 3);
                assert_eq!(letter, 'B');
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_a_format_error() {
        let err = parse_dataset("sequence,a,b\nAAA,1,2\nCCC,1\n", Schema::WithDescriptors).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err:?}");
    }

    #[test]
    fn label_column_is_recognized() {
        let d = parse_dataset("sequence,label,x\nAA,1,0.5\nCC,0,1\n", Schema::WithDescriptors).unwrap();
        assert_eq!(d.names(), ["x"]);
        assert_eq!(d.entries()[0].label, Some(true));
        assert_eq!(d.entries()[1].label, Some(false));
    }

    #[test]
    fn write_then_parse_is_lossless() {
        let d = parse_dataset("sequence,label,x\nAA,1,0.1\nCC,0,1e-7\n", Schema::WithDescriptors).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = parse_dataset(std::str::from_utf8(&buf).unwrap(), Schema::WithDescriptors).unwrap();
        assert_eq!(back.entries(), d.entries());
    }

    #[test]
    fn dedup_examples() {
        let d = PeptideDataset::from_sequences(&["EDGRT", "ADGRS"]).unwrap();
        assert_eq!(seqs(&dedup_similar(&d, 2)), ["EDGRT"]);
        let d = PeptideDataset::from_sequences(&["GLL", "GLL"]).unwrap();
        assert_eq!(seqs(&dedup_similar(&d, 2)), ["GLL"]);
        let d = PeptideDataset::from_sequences(&["AAAA", "AAA"]).unwrap();
        assert_eq!(dedup_similar(&d, 2).len(), 2);
        let d = PeptideDataset::from_sequences(&["EDGRT", "ADGRS"]).unwrap();
        assert_eq!(dedup_similar(&d, 1).len(), 2);
    }

    #[test]
    fn degenerate_decoys() {
        let mut w = vec![0.0; 20];
        w[0] = 1.0;
        let freq = ResidueFrequency::from_weights(&w).unwrap();
        let d = PeptideDataset::from_sequences(&["KLWKG"]).unwrap();
        assert_eq!(seqs(&make_decoys(&d, &freq, 3)), ["AAAAA"]);
    }

    #[test]
    fn decoy_composition_matches_frequency() {
        let freq = ResidueFrequency::protein_default();
        let long = "A".repeat(1000);
        let d = PeptideDataset::from_sequences(&vec![long.as_str(); 120]).unwrap();
        let decoys = make_decoys(&d, &freq, 11);
        let mut counts = [0usize; 20];
        let mut total = 0;
        for p in decoys.peptides() {
            for &r in p.residues() {
                counts[r as usize] += 1;
                total += 1;
            }
        }
        assert!(total >= 100_000);
        for (c, p) in counts.iter().zip(freq.probabilities()) {
            assert!((*c as f64 / total as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn shipped_frequency_is_normalized() {
        let f = ResidueFrequency::protein_default();
        assert!((f.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(f.probabilities().iter().all(|&p| p > 0.0));
        assert!(ResidueFrequency::parse("symbol,probability\nA,1\n").is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let seqsv: Vec<String> = (0..100).map(|i| format!("{}K", "A".repeat(i + 1))).collect();
        let d = PeptideDataset::from_sequences(&seqsv).unwrap();
        let (train, test) = split(&d, 0.2, 5).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let (train2, test2) = split(&d, 0.2, 5).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let mut all: Vec<_> = seqs(&train).into_iter().chain(seqs(&test)).collect();
        all.sort();
        let mut orig = seqs(&d);
        orig.sort();
        assert_eq!(all, orig);
        assert!(split(&PeptideDataset::from_sequences(&["A"]).unwrap(), 0.2, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
    }

    fn arb_peptide() -> impl Strategy<Value = Peptide> {
        proptest::collection::vec(0u8..4, 3..6).prop_map(|v| Peptide::from_indices(v).unwrap())
    }

    proptest! {
        #[test]
        fn dedup_is_idempotent_and_pairwise_dissimilar(
            peps in proptest::collection::vec(arb_peptide(), 0..60),
            max_subs in 0usize..3,
        ) {
            let d = PeptideDataset::from_peptides(peps);
            let once = dedup_similar(&d, max_subs);
            prop_assert_eq!(&dedup_similar(&once, max_subs), &once);
            let kept: Vec<_> = once.peptides().collect();
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    if let Some(h) = hamming(kept[i], kept[j]) {
                        prop_assert!(h > max_subs);
                    }
                }
            }
        }

        #[test]
        fn decoys_preserve_shape(peps in proptest::collection::vec(arb_peptide(), 1..30), seed: u64) {
            let d = PeptideDataset::from_peptides(peps);
            let decoys = make_decoys(&d, &ResidueFrequency::uniform(), seed);
            prop_assert_eq!(decoys.len(), d.len());
            for (a, b) in d.peptides().zip(decoys.peptides()) {
                prop_assert_eq!(a.len(), b.len());
            }
        }

        #[test]
        fn split_is_a_partition(n in 2usize..80, frac in 0.05f64..0.95, seed: u64) {
            let peps: Vec<_> = (0..n).map(|i| Peptide::from_indices(vec![(i % 20) as u8; i / 20 + 1]).unwrap()).collect();
            let d = PeptideDataset::from_peptides(peps);
            let (train, test) = split(&d, frac, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), n);
            prop_assert_eq!(test.len(), (frac * n as f64).round() as usize);
            for e in test.entries() {
                prop_assert!(!train.entries().contains(e));
            }
        }
    }
}
