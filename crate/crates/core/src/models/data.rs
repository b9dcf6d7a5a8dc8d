//! Data structures and CSV schemas for the ecological datasets.
//!
//! File formats (all integer fields strict, headers mandatory):
//!
//! * counts: `year,count`
//! * covariates: `year,voles,frost_days`
//! * m-array: `release_year,released,m_<s>,..,never` with one `m_<s>` column
//!   per recapture/recovery occasion
//! * fecundity: `year,chicks,surviving`

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CountSeries;

/// Upper-triangular release/recovery summary: one row per release occasion,
/// one column per first-recapture (or recovery) occasion plus a trailing
/// never-seen-again column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MArray {
    /// Release occasion per row (1-based model time).
    pub release_times: Vec<usize>,
    /// Column occasions (excluding the never column), contiguous ascending.
    pub recapture_times: Vec<usize>,
    /// Number released per row.
    pub released: Vec<u64>,
    /// Per row: one count per recapture occasion, then the never column.
    pub cells: Vec<Vec<u64>>,
}

impl MArray {
    pub fn n_rows(&self) -> usize {
        self.release_times.len()
    }

    pub fn n_columns(&self) -> usize {
        self.recapture_times.len() + 1
    }

    /// Checks shape, row sums against release counts, and structural zeros at
    /// or before the release occasion.
    pub fn validate(&self) -> Result<()> {
        if self.release_times.len() != self.released.len()
            || self.release_times.len() != self.cells.len()
        {
            return Err(Error::InvalidArgument("m-array: ragged row metadata".into()));
        }
        for w in self.recapture_times.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::InvalidArgument(
                    "m-array: recapture occasions must be contiguous ascending".into(),
                ));
            }
        }
        for (row_idx, ((&t, &released), cells)) in self
            .release_times
            .iter()
            .zip(&self.released)
            .zip(&self.cells)
            .enumerate()
        {
            if cells.len() != self.n_columns() {
                return Err(Error::InvalidArgument(format!(
                    "m-array row {}: expected {} cells, got {}",
                    row_idx + 1,
                    self.n_columns(),
                    cells.len()
                )));
            }
            let sum: u64 = cells.iter().sum();
            if sum != released {
                return Err(Error::InvalidArgument(format!(
                    "m-array row {} (release {t}): cells sum to {sum} but released = {released}",
                    row_idx + 1
                )));
            }
            for (&s, &c) in self.recapture_times.iter().zip(cells) {
                if s <= t && c != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "m-array row {} (release {t}): nonzero count {c} at occasion {s} <= release time",
                        row_idx + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Normalisation constants recorded in run manifests for reproducibility.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormConstants {
    pub year_mean: f64,
    pub year_sd: f64,
    pub frost_mean: f64,
    pub frost_sd: f64,
}

/// Per-year covariates with z-scored derived columns. Normalisation uses the
/// study years present in the file; a constant column normalises to zeros.
#[derive(Debug, Clone)]
pub struct CovariateTable {
    years: Vec<i64>,
    voles: Vec<u8>,
    frost_days: Vec<f64>,
    norm_year: Vec<f64>,
    norm_frost: Vec<f64>,
    index: HashMap<i64, usize>,
    pub constants: NormConstants,
}

fn zscore(values: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return (vec![0.0; values.len()], mean, 0.0);
    }
    (values.iter().map(|v| (v - mean) / sd).collect(), mean, sd)
}

impl CovariateTable {
    pub fn new(years: Vec<i64>, voles: Vec<u8>, frost_days: Vec<f64>) -> Result<Self> {
        if years.is_empty() || years.len() != voles.len() || years.len() != frost_days.len() {
            return Err(Error::InvalidArgument(
                "covariates: empty or ragged columns".into(),
            ));
        }
        let mut index = HashMap::with_capacity(years.len());
        for (i, &y) in years.iter().enumerate() {
            if index.insert(y, i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "covariates: duplicate year {y}"
                )));
            }
        }
        if voles.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument(
                "covariates: voles indicator must be 0 or 1".into(),
            ));
        }
        let year_f: Vec<f64> = years.iter().map(|&y| y as f64).collect();
        let (norm_year, year_mean, year_sd) = zscore(&year_f);
        let (norm_frost, frost_mean, frost_sd) = zscore(&frost_days);
        Ok(Self {
            years,
            voles,
            frost_days,
            norm_year,
            norm_frost,
            index,
            constants: NormConstants { year_mean, year_sd, frost_mean, frost_sd },
        })
    }

    fn lookup(&self, year: i64, what: &str) -> Result<usize> {
        self.index.get(&year).copied().ok_or_else(|| Error::DataSchema {
            file: "covariates".into(),
            message: format!("missing {what} covariate for year {year}"),
            row: None,
            column: Some(what.into()),
        })
    }

    pub fn years(&self) -> &[i64] {
        &self.years
    }

    pub fn voles(&self, year: i64) -> Result<f64> {
        Ok(self.voles[self.lookup(year, "voles")?] as f64)
    }

    /// Normalised year (used both as the survival trend and the recovery
    /// time covariate).
    pub fn norm_year(&self, year: i64) -> Result<f64> {
        Ok(self.norm_year[self.lookup(year, "year")?])
    }

    pub fn norm_frost(&self, year: i64) -> Result<f64> {
        Ok(self.norm_frost[self.lookup(year, "frost_days")?])
    }

    pub fn raw_frost(&self, year: i64) -> Result<f64> {
        Ok(self.frost_days[self.lookup(year, "frost_days")?])
    }

    /// Validates that every year in `lo..=hi` is present.
    pub fn require_years(&self, lo: i64, hi: i64) -> Result<()> {
        for y in lo..=hi {
            self.lookup(y, "year")?;
        }
        Ok(())
    }
}

/// One nest-record observation: chicks produced and chicks surviving to
/// leave the nest.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FecundityRecord {
    pub year: usize,
    pub chicks: u64,
    pub surviving: u64,
}

/// The four owl m-arrays: age at release (juvenile/adult) by gender.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OwlsMArrays {
    pub juv_female: MArray,
    pub juv_male: MArray,
    pub adult_female: MArray,
    pub adult_male: MArray,
}

impl OwlsMArrays {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &MArray)> {
        [
            ("juv_female", &self.juv_female),
            ("juv_male", &self.juv_male),
            ("adult_female", &self.adult_female),
            ("adult_male", &self.adult_male),
        ]
        .into_iter()
    }
}

#[derive(Debug, Clone)]
pub struct OwlsData {
    pub counts: CountSeries,
    pub covariates: CovariateTable,
    pub marrays: OwlsMArrays,
    pub fecundity: Vec<FecundityRecord>,
}

#[derive(Debug, Clone)]
pub struct HeronsData {
    pub counts: CountSeries,
    pub covariates: CovariateTable,
    pub marray: MArray,
}

// ---------------------------------------------------------------------------
// CSV readers/writers
// ---------------------------------------------------------------------------

fn schema_err(file: &str, row: Option<usize>, column: Option<&str>, message: String) -> Error {
    Error::DataSchema {
        file: file.to_string(),
        message,
        row,
        column: column.map(str::to_string),
    }
}

fn parse_u64(file: &str, row: usize, column: &str, raw: &str) -> Result<u64> {
    raw.trim()
        .parse::<u64>()
        .map_err(|_| schema_err(file, Some(row), Some(column), format!("expected non-negative integer, got '{raw}'")))
}

fn parse_i64(file: &str, row: usize, column: &str, raw: &str) -> Result<i64> {
    raw.trim()
        .parse::<i64>()
        .map_err(|_| schema_err(file, Some(row), Some(column), format!("expected integer, got '{raw}'")))
}

fn parse_f64(file: &str, row: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| schema_err(file, Some(row), Some(column), format!("expected number, got '{raw}'")))
}

/// Reads `year,count`; years must be 1..T contiguous.
pub fn read_counts_csv<R: Read>(reader: R, file: &str) -> Result<CountSeries> {
    let mut csv = csv::Reader::from_reader(reader);
    expect_headers(&mut csv, file, &["year", "count"])?;
    let mut values = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let year = parse_u64(file, row, "year", &rec[0])?;
        if year as usize != values.len() + 1 {
            return Err(schema_err(
                file,
                Some(row),
                Some("year"),
                format!("years must run 1..T contiguously; expected {}, got {year}", values.len() + 1),
            ));
        }
        values.push(parse_u64(file, row, "count", &rec[1])?);
    }
    CountSeries::new(values)
}

pub fn write_counts_csv<W: Write>(w: W, counts: &CountSeries) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["year", "count"])?;
    for (i, &c) in counts.values().iter().enumerate() {
        csv.write_record([(i + 1).to_string(), c.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads `year,voles,frost_days`.
pub fn read_covariates_csv<R: Read>(reader: R, file: &str) -> Result<CovariateTable> {
    let mut csv = csv::Reader::from_reader(reader);
    expect_headers(&mut csv, file, &["year", "voles", "frost_days"])?;
    let (mut years, mut voles, mut frost) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        years.push(parse_i64(file, row, "year", &rec[0])?);
        let v = parse_u64(file, row, "voles", &rec[1])?;
        if v > 1 {
            return Err(schema_err(file, Some(row), Some("voles"), format!("voles must be 0/1, got {v}")));
        }
        voles.push(v as u8);
        frost.push(parse_f64(file, row, "frost_days", &rec[2])?);
    }
    CovariateTable::new(years, voles, frost)
}

pub fn write_covariates_csv<W: Write>(w: W, table: &CovariateTable) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["year", "voles", "frost_days"])?;
    for (i, &year) in table.years.iter().enumerate() {
        csv.write_record([
            year.to_string(),
            table.voles[i].to_string(),
            format_f64(table.frost_days[i]),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn format_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Reads `release_year,released,m_<s>..,never`.
pub fn read_marray_csv<R: Read>(reader: R, file: &str) -> Result<MArray> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 4
        || cols[0] != "release_year"
        || cols[1] != "released"
        || cols[cols.len() - 1] != "never"
    {
        return Err(schema_err(
            file,
            Some(1),
            None,
            "m-array header must be release_year,released,m_<s>..,never".into(),
        ));
    }
    let mut recapture_times = Vec::new();
    for c in &cols[2..cols.len() - 1] {
        let s = c
            .strip_prefix("m_")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| schema_err(file, Some(1), Some(c), "expected column m_<occasion>".into()))?;
        recapture_times.push(s);
    }
    let (mut release_times, mut released, mut cells) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != cols.len() {
            return Err(schema_err(file, Some(row), None, format!("expected {} fields, got {}", cols.len(), rec.len())));
        }
        release_times.push(parse_u64(file, row, "release_year", &rec[0])? as usize);
        released.push(parse_u64(file, row, "released", &rec[1])?);
        let mut row_cells = Vec::with_capacity(cols.len() - 2);
        for (j, field) in rec.iter().enumerate().skip(2) {
            row_cells.push(parse_u64(file, row, cols[j], field)?);
        }
        cells.push(row_cells);
    }
    let marray = MArray { release_times, recapture_times, released, cells };
    marray.validate().map_err(|e| schema_err(file, None, None, e.to_string()))?;
    Ok(marray)
}

pub fn write_marray_csv<W: Write>(w: W, marray: &MArray) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["release_year".to_string(), "released".to_string()];
    header.extend(marray.recapture_times.iter().map(|s| format!("m_{s}")));
    header.push("never".to_string());
    csv.write_record(&header)?;
    for ((&t, &r), cells) in marray
        .release_times
        .iter()
        .zip(&marray.released)
        .zip(&marray.cells)
    {
        let mut row = vec![t.to_string(), r.to_string()];
        row.extend(cells.iter().map(u64::to_string));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads `year,chicks,surviving`.
pub fn read_fecundity_csv<R: Read>(reader: R, file: &str) -> Result<Vec<FecundityRecord>> {
    let mut csv = csv::Reader::from_reader(reader);
    expect_headers(&mut csv, file, &["year", "chicks", "surviving"])?;
    let mut records = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        records.push(FecundityRecord {
            year: parse_u64(file, row, "year", &rec[0])? as usize,
            chicks: parse_u64(file, row, "chicks", &rec[1])?,
            surviving: parse_u64(file, row, "surviving", &rec[2])?,
        });
    }
    Ok(records)
}

pub fn write_fecundity_csv<W: Write>(w: W, records: &[FecundityRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["year", "chicks", "surviving"])?;
    for r in records {
        csv.write_record([r.year.to_string(), r.chicks.to_string(), r.surviving.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

fn expect_headers<R: Read>(csv: &mut csv::Reader<R>, file: &str, expected: &[&str]) -> Result<()> {
    let headers = csv.headers()?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(schema_err(
            file,
            Some(1),
            None,
            format!("expected header {expected:?}, got {got:?}"),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Directory-level dataset IO (fixed file names)
// ---------------------------------------------------------------------------

pub const COUNTS_FILE: &str = "counts.csv";
pub const COVARIATES_FILE: &str = "covariates.csv";
pub const FECUNDITY_FILE: &str = "fecundity.csv";
pub const HERONS_MARRAY_FILE: &str = "marray.csv";
pub const OWLS_MARRAY_FILES: [(&str, &str); 4] = [
    ("juv_female", "marray_juv_f.csv"),
    ("juv_male", "marray_juv_m.csv"),
    ("adult_female", "marray_ad_f.csv"),
    ("adult_male", "marray_ad_m.csv"),
];

fn open(dir: &Path, name: &str) -> Result<std::fs::File> {
    std::fs::File::open(dir.join(name)).map_err(|e| {
        schema_err(&dir.join(name).display().to_string(), None, None, e.to_string())
    })
}

pub fn load_owls_data(dir: &Path) -> Result<OwlsData> {
    let counts = read_counts_csv(open(dir, COUNTS_FILE)?, COUNTS_FILE)?;
    let covariates = read_covariates_csv(open(dir, COVARIATES_FILE)?, COVARIATES_FILE)?;
    let fecundity = read_fecundity_csv(open(dir, FECUNDITY_FILE)?, FECUNDITY_FILE)?;
    let mut arrays = Vec::new();
    for (_, file) in OWLS_MARRAY_FILES {
        arrays.push(read_marray_csv(open(dir, file)?, file)?);
    }
    let adult_male = arrays.pop().unwrap();
    let adult_female = arrays.pop().unwrap();
    let juv_male = arrays.pop().unwrap();
    let juv_female = arrays.pop().unwrap();
    Ok(OwlsData {
        counts,
        covariates,
        marrays: OwlsMArrays { juv_female, juv_male, adult_female, adult_male },
        fecundity,
    })
}

pub fn load_herons_data(dir: &Path) -> Result<HeronsData> {
    let counts = read_counts_csv(open(dir, COUNTS_FILE)?, COUNTS_FILE)?;
    let covariates = read_covariates_csv(open(dir, COVARIATES_FILE)?, COVARIATES_FILE)?;
    let marray = read_marray_csv(open(dir, HERONS_MARRAY_FILE)?, HERONS_MARRAY_FILE)?;
    Ok(HeronsData { counts, covariates, marray })
}

pub fn save_owls_data(dir: &Path, data: &OwlsData) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_counts_csv(std::fs::File::create(dir.join(COUNTS_FILE))?, &data.counts)?;
    write_covariates_csv(std::fs::File::create(dir.join(COVARIATES_FILE))?, &data.covariates)?;
    write_fecundity_csv(std::fs::File::create(dir.join(FECUNDITY_FILE))?, &data.fecundity)?;
    for ((_, file), (_, marray)) in OWLS_MARRAY_FILES.iter().zip(data.marrays.iter()) {
        write_marray_csv(std::fs::File::create(dir.join(file))?, marray)?;
    }
    Ok(())
}

pub fn save_herons_data(dir: &Path, data: &HeronsData) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_counts_csv(std::fs::File::create(dir.join(COUNTS_FILE))?, &data.counts)?;
    write_covariates_csv(std::fs::File::create(dir.join(COVARIATES_FILE))?, &data.covariates)?;
    write_marray_csv(std::fs::File::create(dir.join(HERONS_MARRAY_FILE))?, &data.marray)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_marray() -> MArray {
        MArray {
            release_times: vec![1, 2],
            recapture_times: vec![2, 3],
            released: vec![10, 5],
            cells: vec![vec![4, 3, 3], vec![0, 2, 3]],
        }
    }

    #[test]
    fn marray_validation() {
        assert!(toy_marray().validate().is_ok());
        let mut bad = toy_marray();
        bad.cells[0][0] = 5;
        assert!(bad.validate().is_err()); // row sum mismatch
        let mut bad = toy_marray();
        bad.cells[1][0] = 1;
        bad.cells[1][2] = 2;
        assert!(bad.validate().is_err()); // nonzero at s <= t
    }

    #[test]
    fn marray_csv_round_trip() {
        let marray = toy_marray();
        let mut buf = Vec::new();
        write_marray_csv(&mut buf, &marray).unwrap();
        let got = read_marray_csv(buf.as_slice(), "test").unwrap();
        assert_eq!(got, marray);
    }

    #[test]
    fn counts_csv_rejects_gaps() {
        let text = "year,count\n1,5\n3,6\n";
        let err = read_counts_csv(text.as_bytes(), "counts.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
    }

    #[test]
    fn counts_csv_rejects_non_integer() {
        let text = "year,count\n1,5.5\n";
        assert!(read_counts_csv(text.as_bytes(), "counts.csv").is_err());
    }

    #[test]
    fn covariates_normalisation() {
        let table = CovariateTable::new(
            vec![1, 2, 3],
            vec![0, 1, 0],
            vec![5.0, 10.0, 15.0],
        )
        .unwrap();
        // z-scores have mean 0 and sample SD 1
        let z: Vec<f64> = (1..=3).map(|y| table.norm_year(y).unwrap()).collect();
        assert!(z.iter().sum::<f64>().abs() < 1e-12);
        let var: f64 = z.iter().map(|v| v * v).sum::<f64>() / 2.0;
        assert!((var - 1.0).abs() < 1e-12);
        assert!(table.norm_frost(2).unwrap().abs() < 1e-12);
        assert!(table.voles(4).is_err()); // missing year is an error
    }

    #[test]
    fn covariates_constant_column_normalises_to_zero() {
        let table = CovariateTable::new(vec![1, 2], vec![0, 0], vec![3.0, 3.0]).unwrap();
        assert_eq!(table.norm_frost(1).unwrap(), 0.0);
        assert_eq!(table.constants.frost_sd, 0.0);
    }
}
