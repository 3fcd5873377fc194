//! Additive per-residue chemical descriptors.
//!
//! Every supported descriptor is a sum of per-residue contributions, so a
//! peptide's value is the sum over its residues of one column of a
//! [`ResiduePropertyTable`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::{Alphabet, Peptide, AMINO_ACIDS};

const DEFAULT_TABLE_CSV: &str = include_str!("../data/residue_properties.csv");
const TABLE_HEADER: [&str; 8] = [
    "symbol",
    "charge",
    "polar",
    "nonpolar",
    "aromatic",
    "hb_donors",
    "hb_acceptors",
    "mass",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Descriptor {
    /// Sum of signed side-chain charges (no terminal groups).
    NetCharge,
    /// Number of residues with nonzero charge.
    Charged,
    Polar,
    Nonpolar,
    Aromatic,
    HbDonors,
    HbAcceptors,
    Mass,
}

impl Descriptor {
    pub const ALL: [Descriptor; 8] = [
        Descriptor::NetCharge,
        Descriptor::Charged,
        Descriptor::Polar,
        Descriptor::Nonpolar,
        Descriptor::Aromatic,
        Descriptor::HbDonors,
        Descriptor::HbAcceptors,
        Descriptor::Mass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Descriptor::NetCharge => "net_charge",
            Descriptor::Charged => "n_charged",
            Descriptor::Polar => "polar",
            Descriptor::Nonpolar => "nonpolar",
            Descriptor::Aromatic => "aromatic",
            Descriptor::HbDonors => "hb_donors",
            Descriptor::HbAcceptors => "hb_acceptors",
            Descriptor::Mass => "mass",
        }
    }

    fn available() -> String {
        let mut names: Vec<&str> = Self::ALL.iter().map(|d| d.name()).collect();
        names.push("charge");
        names.join(", ")
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        if let Some(d) = Self::ALL.iter().find(|d| d.name() == key) {
            return Ok(*d);
        }
        match key.as_str() {
            "charge" => Ok(Descriptor::NetCharge),
            "alogp" | "logp" => Err(Error::UnsupportedDescriptor(s.to_string())),
            _ => Err(Error::UnknownDescriptor {
                name: s.to_string(),
                available: Self::available(),
            }),
        }
    }
}

pub fn parse_names<S: AsRef<str>>(names: &[S]) -> Result<Vec<Descriptor>> {
    names.iter().map(|n| n.as_ref().parse()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidueProperties {
    pub charge: f64,
    pub polar: u8,
    pub nonpolar: u8,
    pub aromatic: u8,
    pub hb_donors: u32,
    pub hb_acceptors: u32,
    pub mass: f64,
}

/// Per-residue descriptor contributions, indexed by canonical alphabet order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResiduePropertyTable {
    rows: Vec<ResidueProperties>,
}

impl ResiduePropertyTable {
    /// Standard side-chain classes with monoisotopic residue masses; histidine
    /// is neutral. See [`Self::with_protonated_histidine`] for the +1 variant.
    pub fn standard() -> Self {
        Self::parse(DEFAULT_TABLE_CSV).expect("shipped property table parses")
    }

    pub fn with_protonated_histidine(mut self) -> Self {
        let h = Alphabet::amino_acids().index_of(b'H').unwrap() as usize;
        self.rows[h].charge = 1.0;
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let alphabet = Alphabet::amino_acids();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_ascii_lowercase).collect();
        if header != TABLE_HEADER {
            return Err(Error::Format {
                line: 1,
                message: format!("property table header must be '{}'", TABLE_HEADER.join(",")),
            });
        }
        let mut rows: Vec<Option<ResidueProperties>> = vec![None; alphabet.len()];
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let err = |message: String| Error::Format { line, message };
            let idx = match record[0].as_bytes() {
                [b] => alphabet.index_of(*b),
                _ => None,
            }
            .ok_or_else(|| err(format!("unknown symbol '{}'", &record[0])))?;
            let real = |c: usize| -> Result<f64> {
                record[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("{}: '{}' is not a number", TABLE_HEADER[c], &record[c])))
            };
            let flag = |c: usize| -> Result<u8> {
                match &record[c] {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    v => Err(err(format!("{}: indicator must be 0 or 1, got '{v}'", TABLE_HEADER[c]))),
                }
            };
            let count = |c: usize| -> Result<u32> {
                record[c]
                    .parse::<u32>()
                    .map_err(|_| err(format!("{}: '{}' is not a nonnegative integer", TABLE_HEADER[c], &record[c])))
            };
            let mass = real(7)?;
            if mass <= 0.0 {
                return Err(err("mass must be positive".into()));
            }
            rows[idx as usize] = Some(ResidueProperties {
                charge: real(1)?,
                polar: flag(2)?,
                nonpolar: flag(3)?,
                aromatic: flag(4)?,
                hb_donors: count(5)?,
                hb_acceptors: count(6)?,
                mass,
            });
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| Error::invalid(format!("property table has no row for '{}'", AMINO_ACIDS[i] as char)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn row(&self, residue: u8) -> &ResidueProperties {
        &self.rows[residue as usize]
    }

    pub fn alphabet_size(&self) -> usize {
        self.rows.len()
    }

    /// Contribution of one residue to a descriptor.
    pub fn contribution(&self, d: Descriptor, residue: u8) -> f64 {
        let r = self.row(residue);
        match d {
            Descriptor::NetCharge => r.charge,
            Descriptor::Charged => f64::from(u8::from(r.charge != 0.0)),
            Descriptor::Polar => f64::from(r.polar),
            Descriptor::Nonpolar => f64::from(r.nonpolar),
            Descriptor::Aromatic => f64::from(r.aromatic),
            Descriptor::HbDonors => f64::from(r.hb_donors),
            Descriptor::HbAcceptors => f64::from(r.hb_acceptors),
            Descriptor::Mass => r.mass,
        }
    }

    /// All residue contributions for one descriptor, in alphabet order.
    pub fn column(&self, d: Descriptor) -> Vec<f64> {
        (0..self.rows.len() as u8).map(|r| self.contribution(d, r)).collect()
    }
}

impl Default for ResiduePropertyTable {
    fn default() -> Self {
        Self::standard()
    }
}

/// Descriptor values for one peptide, in the order they were requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorVector {
    pub values: Vec<(String, f64)>,
}

impl DescriptorVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

pub fn descriptor_value(p: &Peptide, table: &ResiduePropertyTable, d: Descriptor) -> f64 {
    p.residues().iter().map(|&r| table.contribution(d, r)).sum()
}

pub fn compute_descriptors<S: AsRef<str>>(
    p: &Peptide,
    table: &ResiduePropertyTable,
    names: &[S],
) -> Result<DescriptorVector> {
    let values = names
        .iter()
        .map(|n| {
            let d: Descriptor = n.as_ref().parse()?;
            Ok((n.as_ref().to_string(), descriptor_value(p, table, d)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DescriptorVector { values })
}

/// Population mean and variance (divisor A) of a descriptor over the alphabet.
pub fn component_moments(table: &ResiduePropertyTable, d: Descriptor) -> (f64, f64) {
    weighted_moments(&table.column(d), None)
}

/// Mean and variance of `values` under optional nonnegative weights.
pub(crate) fn weighted_moments(values: &[f64], weights: Option<&[f64]>) -> (f64, f64) {
    let (total, mean) = match weights {
        None => (values.len() as f64, values.iter().sum::<f64>() / values.len() as f64),
        Some(w) => {
            let t: f64 = w.iter().sum();
            (t, values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / t)
        }
    };
    let var = match weights {
        None => values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / total,
        Some(w) => values.iter().zip(w).map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / total,
    };
    (mean, var)
}
