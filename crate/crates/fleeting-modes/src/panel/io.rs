//! Delimiter-separated ingestion and serialization.
//!
//! Two layouts are accepted, distinguished by header:
//! - long OHLC: `date,asset,open,high,low,close`, one row per (date, asset);
//! - wide matrix: `date,<asset>,<asset>,...`, one row per date, used for
//!   per-field OHLC matrices and for cached return panels.
//!
//! Ingestion is strict: gaps in the (date, asset) grid are rejected with a
//! per-asset report rather than imputed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::{OhlcPanel, PricePanel, ReturnPanel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataLayout {
    /// One row per (date, asset) with OHLC fields.
    OhlcLong,
    /// Dates down the rows, assets across the columns, one value per cell.
    WideMatrix,
}

fn reader(path: &Path, delimiter: u8) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

fn records(path: &Path, delimiter: u8) -> Result<Vec<csv::StringRecord>> {
    let mut rows = Vec::new();
    for rec in reader(path, delimiter)?.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} is empty", path.display())));
    }
    Ok(rows)
}

fn parse_value(field: &str, path: &Path, context: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::Data(format!("{}: {context}: bad number {field:?}", path.display())))?;
    if !v.is_finite() {
        return Err(Error::Data(format!(
            "{}: {context}: non-finite value",
            path.display()
        )));
    }
    Ok(v)
}

/// Inspects the header row to decide the file layout.
pub fn detect_layout(path: &Path, delimiter: u8) -> Result<DataLayout> {
    let rows = records(path, delimiter)?;
    let header = &rows[0];
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::Data(format!(
            "{}: header must start with 'date'",
            path.display()
        )));
    }
    if header.len() == 6 && header[1].eq_ignore_ascii_case("asset") {
        Ok(DataLayout::OhlcLong)
    } else {
        Ok(DataLayout::WideMatrix)
    }
}

/// Reads the long OHLC layout into a complete panel.
pub fn read_ohlc_long(path: &Path, delimiter: u8) -> Result<OhlcPanel> {
    let rows = records(path, delimiter)?;
    let header = &rows[0];
    let expected = ["date", "asset", "open", "high", "low", "close"];
    if header.len() != 6
        || !header
            .iter()
            .zip(expected)
            .all(|(got, want)| got.eq_ignore_ascii_case(want))
    {
        return Err(Error::Data(format!(
            "{}: expected header date,asset,open,high,low,close",
            path.display()
        )));
    }

    let mut assets: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), [f64; 4]> = BTreeMap::new();
    for (line, rec) in rows.iter().enumerate().skip(1) {
        if rec.len() != 6 {
            return Err(Error::Data(format!(
                "{}: line {}: expected 6 fields, got {}",
                path.display(),
                line + 1,
                rec.len()
            )));
        }
        let date = rec[0].to_string();
        let asset = rec[1].to_string();
        let context = format!("line {}", line + 1);
        let bar = [
            parse_value(&rec[2], path, &context)?,
            parse_value(&rec[3], path, &context)?,
            parse_value(&rec[4], path, &context)?,
            parse_value(&rec[5], path, &context)?,
        ];
        if !assets.contains(&asset) {
            assets.push(asset.clone());
        }
        if cells.insert((date.clone(), asset.clone()), bar).is_some() {
            return Err(Error::Data(format!(
                "{}: duplicate row for ({date}, {asset})",
                path.display()
            )));
        }
    }

    let mut dates: Vec<String> = cells.keys().map(|(d, _)| d.clone()).collect();
    dates.dedup();

    // Hard rejection of gaps, with a per-asset report.
    let mut gaps: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for asset in &assets {
        for date in &dates {
            if !cells.contains_key(&(date.clone(), asset.clone())) {
                gaps.entry(asset).or_default().push(date);
            }
        }
    }
    if !gaps.is_empty() {
        let mut report = String::new();
        for (asset, missing) in gaps.iter().take(5) {
            let sample: Vec<&str> = missing.iter().take(3).copied().collect();
            report.push_str(&format!(
                " {asset}: {} missing dates (e.g. {});",
                missing.len(),
                sample.join(", ")
            ));
        }
        return Err(Error::Data(format!(
            "{}: incomplete (date, asset) grid:{report}",
            path.display()
        )));
    }

    let (n, t) = (assets.len(), dates.len());
    let mut open = DMatrix::zeros(n, t);
    let mut high = DMatrix::zeros(n, t);
    let mut low = DMatrix::zeros(n, t);
    let mut close = DMatrix::zeros(n, t);
    for (i, asset) in assets.iter().enumerate() {
        for (j, date) in dates.iter().enumerate() {
            let bar = cells[&(date.clone(), asset.clone())];
            open[(i, j)] = bar[0];
            high[(i, j)] = bar[1];
            low[(i, j)] = bar[2];
            close[(i, j)] = bar[3];
        }
    }
    OhlcPanel::new(assets, dates, open, high, low, close)
}

/// Reads a wide matrix file: returns `(assets, dates, values)` with assets
/// down the rows of the matrix.
pub fn read_wide_matrix(path: &Path, delimiter: u8) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let rows = records(path, delimiter)?;
    let header = &rows[0];
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::Data(format!(
            "{}: wide layout needs header date,<asset>,...",
            path.display()
        )));
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = assets.len();
    let t = rows.len() - 1;
    if t == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let mut dates = Vec::with_capacity(t);
    let mut values = DMatrix::zeros(n, t);
    for (j, rec) in rows.iter().skip(1).enumerate() {
        if rec.len() != n + 1 {
            return Err(Error::Data(format!(
                "{}: row {}: expected {} fields, got {}",
                path.display(),
                j + 2,
                n + 1,
                rec.len()
            )));
        }
        dates.push(rec[0].to_string());
        for i in 0..n {
            values[(i, j)] = parse_value(&rec[i + 1], path, &format!("row {}", j + 2))?;
        }
    }
    Ok((assets, dates, values))
}

/// Reads four wide per-field matrices into an OHLC panel, checking that they
/// agree on the universe and the dates.
pub fn read_ohlc_wide(
    open: &Path,
    high: &Path,
    low: &Path,
    close: &Path,
    delimiter: u8,
) -> Result<OhlcPanel> {
    let (assets, dates, open_m) = read_wide_matrix(open, delimiter)?;
    let mut fields = Vec::new();
    for path in [high, low, close] {
        let (a, d, m) = read_wide_matrix(path, delimiter)?;
        if a != assets || d != dates {
            return Err(Error::Data(format!(
                "{}: assets/dates disagree with {}",
                path.display(),
                open.display()
            )));
        }
        fields.push(m);
    }
    let close_m = fields.pop().unwrap();
    let low_m = fields.pop().unwrap();
    let high_m = fields.pop().unwrap();
    OhlcPanel::new(assets, dates, open_m, high_m, low_m, close_m)
}

/// Reads a cached return panel from the wide layout.
pub fn read_returns_wide(path: &Path, delimiter: u8) -> Result<ReturnPanel> {
    let (assets, dates, values) = read_wide_matrix(path, delimiter)?;
    ReturnPanel::new(assets, dates, values)
}

/// Reads a wide close-price matrix.
pub fn read_prices_wide(path: &Path, delimiter: u8) -> Result<PricePanel> {
    let (assets, dates, values) = read_wide_matrix(path, delimiter)?;
    PricePanel::new(assets, dates, values)
}

/// Writes a wide matrix (dates down the rows). Values use the shortest
/// round-trip decimal form, so re-reading reproduces the doubles exactly.
pub fn write_wide_matrix(
    assets: &[String],
    dates: &[String],
    values: &DMatrix<f64>,
    path: &Path,
    delimiter: u8,
) -> Result<()> {
    let delim = delimiter as char;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "date")?;
    for a in assets {
        write!(out, "{delim}{a}")?;
    }
    writeln!(out)?;
    for (j, date) in dates.iter().enumerate() {
        write!(out, "{date}")?;
        for i in 0..assets.len() {
            write!(out, "{delim}{}", values[(i, j)])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Serializes a return panel to the wide layout for caching.
pub fn write_returns_wide(panel: &ReturnPanel, path: &Path, delimiter: u8) -> Result<()> {
    write_wide_matrix(panel.assets(), panel.dates(), panel.returns(), path, delimiter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("fleeting-modes-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn long_layout_roundtrip() {
        let path = tmpfile(
            "long.csv",
            "date,asset,open,high,low,close\n\
             2020-01-01,AA,10,11,9,10.5\n\
             2020-01-01,BB,20,21,19,20.5\n\
             2020-01-02,AA,10.5,12,10,11\n\
             2020-01-02,BB,20.5,22,20,21\n",
        );
        assert_eq!(detect_layout(&path, b',').unwrap(), DataLayout::OhlcLong);
        let panel = read_ohlc_long(&path, b',').unwrap();
        assert_eq!(panel.assets(), &["AA".to_string(), "BB".to_string()]);
        assert_eq!(panel.n_dates(), 2);
        assert_eq!(panel.close()[(1, 1)], 21.0);
    }

    #[test]
    fn gaps_are_rejected_with_report() {
        let path = tmpfile(
            "gappy.csv",
            "date,asset,open,high,low,close\n\
             2020-01-01,AA,10,11,9,10.5\n\
             2020-01-02,AA,10.5,12,10,11\n\
             2020-01-02,BB,20.5,22,20,21\n",
        );
        match read_ohlc_long(&path, b',') {
            Err(Error::Data(msg)) => {
                assert!(msg.contains("BB"), "report should name the gappy asset: {msg}");
                assert!(msg.contains("2020-01-01"));
            }
            other => panic!("expected gap rejection, got {other:?}"),
        }
    }

    #[test]
    fn wide_roundtrip_is_exact() {
        let assets = vec!["A".to_string(), "B".to_string()];
        let dates = vec!["2020-01-02".to_string(), "2020-01-03".to_string()];
        let values = DMatrix::from_row_slice(2, 2, &[0.1, -1.5e-17, 2.0 / 3.0, 4.0]);
        let panel = ReturnPanel::new(assets, dates, values).unwrap();
        let path = std::env::temp_dir()
            .join("fleeting-modes-io-tests")
            .join("wide.csv");
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        write_returns_wide(&panel, &path, b',').unwrap();
        assert_eq!(detect_layout(&path, b',').unwrap(), DataLayout::WideMatrix);
        let back = read_returns_wide(&path, b',').unwrap();
        assert_eq!(back.returns(), panel.returns());
        assert_eq!(back.assets(), panel.assets());
    }

    #[test]
    fn duplicate_rows_rejected() {
        let path = tmpfile(
            "dup.csv",
            "date,asset,open,high,low,close\n\
             2020-01-01,AA,10,11,9,10.5\n\
             2020-01-01,AA,10,11,9,10.5\n",
        );
        assert!(matches!(read_ohlc_long(&path, b','), Err(Error::Data(_))));
    }
}
