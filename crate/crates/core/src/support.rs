//! Discretized support: per-stratum Cartesian products of the unique `(z, w)`
//! cells and the unique `(s, x, delta)` triples seen in the data.
//!
//! Flat index layout: stratum 0 first, then stratum 1; within a stratum the
//! index is row-major over `(cell, triple)`. Unique lists are sorted so the
//! layout does not depend on record order.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

use log::warn;
use thiserror::Error;

use crate::data::{format_value, Dataset, ObservedRecord, Outcome};

#[derive(Debug, Error)]
pub enum SupportError {
    #[error("stratum r_obs={0} has no records")]
    EmptyStratum(usize),
    #[error("record (row {row}) is not a point of the discretized support")]
    NotInSupport { row: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

const NA_BITS: u64 = u64::MAX;

fn value_bits(v: Option<f64>) -> u64 {
    v.map_or(NA_BITS, f64::to_bits)
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) => a.total_cmp(&b),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// A unique `(z, w)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub z: Vec<f64>,
    pub w: Vec<Option<f64>>,
}

impl Cell {
    fn of(rec: &ObservedRecord) -> Self {
        Self {
            z: rec.z.clone(),
            w: rec.w.clone(),
        }
    }

    fn key(&self) -> Vec<u64> {
        self.z
            .iter()
            .map(|&v| v.to_bits())
            .chain(self.w.iter().map(|&v| value_bits(v)))
            .collect()
    }

    fn cmp(&self, other: &Self) -> Ordering {
        let z = self
            .z
            .iter()
            .zip(&other.z)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne());
        z.or_else(|| {
            self.w
                .iter()
                .zip(&other.w)
                .map(|(&a, &b)| cmp_opt(a, b))
                .find(|o| o.is_ne())
        })
        .unwrap_or(Ordering::Equal)
    }
}

/// A unique `(s, x, delta)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub s: bool,
    pub outcome: Option<Outcome>,
}

impl Triple {
    fn of(rec: &ObservedRecord) -> Self {
        Self {
            s: rec.s,
            outcome: rec.outcome,
        }
    }

    fn key(&self) -> [u64; 3] {
        [
            u64::from(self.s),
            value_bits(self.outcome.map(|o| o.x)),
            self.outcome.map_or(NA_BITS, |o| u64::from(o.event)),
        ]
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.s.cmp(&other.s).then_with(|| match (self.outcome, other.outcome) {
            (Some(a), Some(b)) => a.x.total_cmp(&b.x).then(a.event.cmp(&b.event)),
            (a, b) => cmp_opt(a.map(|o| o.x), b.map(|o| o.x)),
        })
    }
}

/// The product `{r} x cells x triples` for one stratum.
#[derive(Debug, Clone)]
pub struct Stratum {
    pub r_obs: usize,
    pub cells: Vec<Cell>,
    pub triples: Vec<Triple>,
    /// Index of each cell's `z` in [`DiscretizedSupport::z_values`].
    pub cell_z: Vec<usize>,
    offset: usize,
    cell_lookup: HashMap<Vec<u64>, usize>,
    triple_lookup: HashMap<[u64; 3], usize>,
}

impl Stratum {
    fn build(r_obs: usize, records: &[ObservedRecord]) -> Self {
        let mut cells: Vec<Cell> = Vec::new();
        let mut triples: Vec<Triple> = Vec::new();
        let mut seen_cells = HashMap::new();
        let mut seen_triples = HashMap::new();
        for rec in records {
            let cell = Cell::of(rec);
            seen_cells.entry(cell.key()).or_insert_with(|| cells.push(cell));
            let t = Triple::of(rec);
            seen_triples.entry(t.key()).or_insert_with(|| triples.push(t));
        }
        cells.sort_by(Cell::cmp);
        triples.sort_by(Triple::cmp);
        let cell_lookup = cells.iter().enumerate().map(|(i, c)| (c.key(), i)).collect();
        let triple_lookup = triples.iter().enumerate().map(|(i, t)| (t.key(), i)).collect();
        Self {
            r_obs,
            cells,
            triples,
            cell_z: Vec::new(),
            offset: 0,
            cell_lookup,
            triple_lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len() * self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn flat(&self, cell: usize, triple: usize) -> usize {
        self.offset + cell * self.triples.len() + triple
    }

    pub fn cell_index(&self, rec: &ObservedRecord) -> Option<usize> {
        self.cell_lookup.get(&Cell::of(rec).key()).copied()
    }

    pub fn triple_index(&self, rec: &ObservedRecord) -> Option<usize> {
        self.triple_lookup.get(&Triple::of(rec).key()).copied()
    }

    /// Indices of the triples carrying an observed `(x, delta)`: the
    /// double-sampled triples in stratum 0, all triples in stratum 1.
    pub fn outcome_triples(&self) -> Vec<usize> {
        (0..self.triples.len())
            .filter(|&j| self.triples[j].outcome.is_some())
            .collect()
    }
}

/// A materialized point of the support.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub flat: usize,
    pub r_obs: usize,
    pub cell: usize,
    pub triple: usize,
}

#[derive(Debug, Clone)]
pub struct DiscretizedSupport {
    strata: [Stratum; 2],
    z_values: Vec<Vec<f64>>,
}

/// Builds the support from a canonical dataset. Empty strata are allowed but
/// logged; callers that need both strata use [`DiscretizedSupport::require_both_strata`].
pub fn build_support(data: &Dataset) -> DiscretizedSupport {
    let mut s0 = Stratum::build(0, data.stratum(0));
    let mut s1 = Stratum::build(1, data.stratum(1));
    s1.offset = s0.len();
    for s in [&s0, &s1] {
        if s.is_empty() {
            warn!("support stratum r_obs={} is empty", s.r_obs);
        }
    }

    let mut z_values: Vec<Vec<f64>> = Vec::new();
    for s in [&s0, &s1] {
        z_values.extend(s.cells.iter().map(|c| c.z.clone()));
    }
    let cmp_z = |a: &Vec<f64>, b: &Vec<f64>| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    };
    z_values.sort_by(cmp_z);
    z_values.dedup_by(|a, b| cmp_z(a, b).is_eq());
    let z_key = |z: &[f64]| z.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let z_lookup: HashMap<Vec<u64>, usize> =
        z_values.iter().enumerate().map(|(i, z)| (z_key(z), i)).collect();
    for s in [&mut s0, &mut s1] {
        s.cell_z = s.cells.iter().map(|c| z_lookup[&z_key(&c.z)]).collect();
    }

    DiscretizedSupport {
        strata: [s0, s1],
        z_values,
    }
}

impl DiscretizedSupport {
    pub fn stratum(&self, r: usize) -> &Stratum {
        &self.strata[r]
    }

    pub fn strata(&self) -> &[Stratum; 2] {
        &self.strata
    }

    /// Unique `z` vectors across both strata, sorted.
    pub fn z_values(&self) -> &[Vec<f64>] {
        &self.z_values
    }

    pub fn len(&self) -> usize {
        self.strata[0].len() + self.strata[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn require_both_strata(&self) -> Result<(), SupportError> {
        match self.strata.iter().find(|s| s.is_empty()) {
            Some(s) => Err(SupportError::EmptyStratum(s.r_obs)),
            None => Ok(()),
        }
    }

    /// Flat index of a record's `(r_obs, z, w, s, x, delta)` projection.
    pub fn index_of(&self, rec: &ObservedRecord) -> Result<usize, SupportError> {
        let s = &self.strata[rec.stratum()];
        match (s.cell_index(rec), s.triple_index(rec)) {
            (Some(cell), Some(triple)) => Ok(s.flat(cell, triple)),
            _ => Err(SupportError::NotInSupport {
                row: rec.source_row,
            }),
        }
    }

    pub fn point(&self, flat: usize) -> SupportPoint {
        let r_obs = usize::from(flat >= self.strata[1].offset);
        let s = &self.strata[r_obs];
        let local = flat - s.offset;
        SupportPoint {
            flat,
            r_obs,
            cell: local / s.triples.len(),
            triple: local % s.triples.len(),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = SupportPoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Materializes a support point as an [`ObservedRecord`] (with `c` unset).
    pub fn record_at(&self, flat: usize) -> ObservedRecord {
        let p = self.point(flat);
        let s = &self.strata[p.r_obs];
        let cell = &s.cells[p.cell];
        let t = s.triples[p.triple];
        ObservedRecord {
            c: f64::NAN,
            r_obs: p.r_obs == 1,
            z: cell.z.clone(),
            w: cell.w.clone(),
            s: t.s,
            outcome: t.outcome,
            source_row: 0,
        }
    }

    /// Support size relative to the sample size, reported as a diagnostic.
    pub fn size_ratio(&self, n: usize) -> f64 {
        self.len() as f64 / n.max(1) as f64
    }

    /// Writes `flat_index, stratum, z.., w.., s, x, delta` rows.
    pub fn dump_csv<W: Write>(&self, mut out: W) -> Result<(), SupportError> {
        let (zd, wd) = self
            .strata
            .iter()
            .find_map(|s| s.cells.first().map(|c| (c.z.len(), c.w.len())))
            .unwrap_or((0, 0));
        let mut header = vec!["flat_index".to_string(), "r_obs".to_string()];
        header.extend((1..=zd).map(|i| format!("z{i}")));
        header.extend((1..=wd).map(|i| format!("w{i}")));
        header.extend(["s", "x", "delta"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for p in self.points() {
            let s = &self.strata[p.r_obs];
            let cell = &s.cells[p.cell];
            let t = s.triples[p.triple];
            let mut row = vec![p.flat.to_string(), p.r_obs.to_string()];
            row.extend(cell.z.iter().map(|&v| format_value(Some(v))));
            row.extend(cell.w.iter().map(|&v| format_value(v)));
            row.push(u8::from(t.s).to_string());
            row.push(format_value(t.outcome.map(|o| o.x)));
            row.push(t.outcome.map_or("NA".into(), |o| u8::from(o.event).to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
