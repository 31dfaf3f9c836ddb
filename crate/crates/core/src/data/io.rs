//! CSV ingestion of price tables plus CSV and binary serialization of return matrices.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};

use super::{PriceTable, ReturnMatrix};
use crate::error::{Error, Result};

/// Magic header of the binary return-matrix cache.
pub const CACHE_MAGIC: &[u8; 5] = b"ASRM1";

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Column layout of a price CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceLayout {
    /// `date,<asset>,<asset>,...` with one row per date.
    Wide,
    /// `date,asset,price` with one row per observed cell.
    Long,
}

impl FromStr for PriceLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(Self::Wide),
            "long" => Ok(Self::Long),
            other => Err(Error::Config(format!("unknown price layout `{other}`"))),
        }
    }
}

impl PriceLayout {
    /// Long when the header is exactly `date,asset,price`, wide otherwise.
    pub fn detect(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, 0, e))?;
        let headers = rdr.headers().map_err(|e| csv_err(path, 1, e))?;
        let names: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
        Ok(if names == ["date", "asset", "price"] {
            Self::Long
        } else {
            Self::Wide
        })
    }
}

fn csv_err(path: &Path, row: usize, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => Error::Input {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        },
    }
}

fn input_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Input {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn parse_date(path: &Path, row: usize, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|e| input_err(path, row, format!("unparseable date `{s}`: {e}")))
}

fn parse_cell(path: &Path, row: usize, s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("null") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| input_err(path, row, format!("unparseable number `{s}`")))
}

fn duplicate(date: NaiveDate, asset: &str) -> Error {
    Error::Validation(format!("duplicate cell ({date}, {asset})"))
}

/// Reads adjusted prices from a CSV file in the given layout.
pub fn load_price_csv(path: impl AsRef<Path>, layout: PriceLayout) -> Result<PriceTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = rdr.headers().map_err(|e| csv_err(path, 1, e))?.clone();

    // date -> asset index -> price
    let mut cells: BTreeMap<NaiveDate, HashMap<usize, Option<f64>>> = BTreeMap::new();
    let mut assets: Vec<String> = Vec::new();

    match layout {
        PriceLayout::Wide => {
            if headers.len() < 2 {
                return Err(input_err(
                    path,
                    1,
                    "wide layout needs a date column and at least one asset column",
                ));
            }
            assets = headers.iter().skip(1).map(str::to_string).collect();
            for (k, rec) in rdr.records().enumerate() {
                let row = k + 2;
                let rec = rec.map_err(|e| csv_err(path, row, e))?;
                let date = parse_date(path, row, &rec[0])?;
                if cells.contains_key(&date) {
                    return Err(duplicate(date, &assets[0]));
                }
                let mut by_asset = HashMap::with_capacity(assets.len());
                for (i, field) in rec.iter().skip(1).enumerate() {
                    by_asset.insert(i, parse_cell(path, row, field)?);
                }
                cells.insert(date, by_asset);
            }
        }
        PriceLayout::Long => {
            let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
            if names != ["date", "asset", "price"] {
                return Err(input_err(path, 1, "long layout header must be `date,asset,price`"));
            }
            let mut index: HashMap<String, usize> = HashMap::new();
            for (k, rec) in rdr.records().enumerate() {
                let row = k + 2;
                let rec = rec.map_err(|e| csv_err(path, row, e))?;
                let date = parse_date(path, row, &rec[0])?;
                let asset = rec[1].to_string();
                if asset.is_empty() {
                    return Err(input_err(path, row, "empty asset identifier"));
                }
                let price = parse_cell(path, row, &rec[2])?;
                let next = index.len();
                let i = *index.entry(asset.clone()).or_insert_with(|| {
                    assets.push(asset.clone());
                    next
                });
                if cells.entry(date).or_default().insert(i, price).is_some() {
                    return Err(duplicate(date, &asset));
                }
            }
        }
    }

    let timestamps: Vec<NaiveDate> = cells.keys().copied().collect();
    let columns = (0..assets.len())
        .map(|i| cells.values().map(|row| row.get(&i).copied().flatten()).collect())
        .collect();
    PriceTable::new(timestamps, assets, columns)
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

/// Writes `date,<asset_1>,...,<asset_N>` followed by one row per period.
pub fn write_return_csv(r: &ReturnMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "date").map_err(io)?;
    for a in r.assets() {
        write!(w, ",{a}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (t, date) in r.timestamps().iter().enumerate() {
        write!(w, "{}", date.format(DATE_FORMAT)).map_err(io)?;
        for i in 0..r.n_assets() {
            write!(w, ",{}", format_value(r.get(t, i))).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a return matrix written by [`write_return_csv`].
pub fn read_return_csv(path: impl AsRef<Path>) -> Result<ReturnMatrix> {
    let path = path.as_ref();
    let (timestamps, assets, rows) = read_wide_rows(path)?;
    let n = assets.len();
    let t = timestamps.len();
    let mut values = vec![0.0; t * n];
    for (ti, row) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            values[i * t + ti] = *v;
        }
    }
    ReturnMatrix::from_column_major(timestamps, assets, values)
}

type RawRows = (Vec<NaiveDate>, Vec<String>, Vec<Vec<f64>>);

fn read_wide_rows(path: &Path) -> Result<RawRows> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = rdr.headers().map_err(|e| csv_err(path, 1, e))?.clone();
    let assets: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| csv_err(path, row, e))?;
        timestamps.push(parse_date(path, row, &rec[0])?);
        let mut values = Vec::with_capacity(assets.len());
        for field in rec.iter().skip(1) {
            values.push(parse_cell(path, row, field)?.unwrap_or(f64::NAN));
        }
        if values.len() != assets.len() {
            return Err(input_err(
                path,
                row,
                format!("expected {} values, found {}", assets.len(), values.len()),
            ));
        }
        rows.push(values);
    }
    Ok((timestamps, assets, rows))
}

/// Writes the binary cache: magic `ASRM1`, little-endian `u64` T and N, `f64`
/// frequency, `i32` days-from-CE per timestamp, length-prefixed UTF-8 asset
/// ids, then the `T * N` column-major `f64` values.
pub fn write_return_cache(r: &ReturnMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(CACHE_MAGIC).map_err(io)?;
    w.write_all(&(r.n_periods() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(r.n_assets() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&r.frequency().to_le_bytes()).map_err(io)?;
    for d in r.timestamps() {
        w.write_all(&d.num_days_from_ce().to_le_bytes()).map_err(io)?;
    }
    for a in r.assets() {
        w.write_all(&(a.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(a.as_bytes()).map_err(io)?;
    }
    for v in r.as_column_major() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_return_cache(path: impl AsRef<Path>) -> Result<ReturnMatrix> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| input_err(path, 0, m.to_string());
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(5).ok_or_else(|| bad("truncated header"))? != CACHE_MAGIC {
        return Err(bad("not an ASRM1 return cache"));
    }
    let t = cur.u64().ok_or_else(|| bad("truncated header"))? as usize;
    let n = cur.u64().ok_or_else(|| bad("truncated header"))? as usize;
    let frequency = f64::from_le_bytes(cur.array().ok_or_else(|| bad("truncated header"))?);
    let mut timestamps = Vec::with_capacity(t);
    for _ in 0..t {
        let days = i32::from_le_bytes(cur.array().ok_or_else(|| bad("truncated timestamps"))?);
        timestamps.push(NaiveDate::from_num_days_from_ce_opt(days).ok_or_else(|| bad("invalid timestamp"))?);
    }
    let mut assets = Vec::with_capacity(n);
    for _ in 0..n {
        let len = u32::from_le_bytes(cur.array().ok_or_else(|| bad("truncated asset ids"))?) as usize;
        let raw = cur.take(len).ok_or_else(|| bad("truncated asset ids"))?;
        assets.push(String::from_utf8(raw.to_vec()).map_err(|_| bad("asset id is not UTF-8"))?);
    }
    let raw = cur.take(t * n * 8).ok_or_else(|| bad("truncated values"))?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ReturnMatrix::from_column_major(timestamps, assets, values)?.with_frequency(frequency))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(out)
    }

    fn array<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.take(N).map(|s| s.try_into().unwrap())
    }

    fn u64(&mut self) -> Option<u64> {
        self.array().map(u64::from_le_bytes)
    }
}
