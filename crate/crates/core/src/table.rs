//! Contingency tables with a canonical row-major cell ordering.
//!
//! Cells are stored flat with the last declared factor varying fastest, so a
//! two-way table reads left-to-right, top-to-bottom.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};

/// Layout of a textual table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    /// Rectangular two-way grid, optionally with a header row and a label column.
    Grid,
    /// One line per cell: `i1,i2,...,ik,count` with 1-based level numbers.
    Long,
}

/// Observed counts of a k-way contingency table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    dims: Vec<usize>,
    counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Vec<String>>>,
}

impl ContingencyTable {
    pub fn new(dims: Vec<usize>, counts: Vec<u64>) -> Result<Self> {
        validate_dims(&dims)?;
        let n: usize = dims.iter().product();
        if counts.len() != n {
            return Err(Error::InvalidDims(format!(
                "{} counts given for dims {:?} ({} cells)",
                counts.len(),
                dims,
                n
            )));
        }
        Ok(Self {
            dims,
            counts,
            labels: None,
        })
    }

    /// Attaches per-factor level names. Each factor needs exactly one name per level.
    pub fn with_labels(mut self, labels: Vec<Vec<String>>) -> Result<Self> {
        if labels.len() != self.dims.len()
            || labels.iter().zip(&self.dims).any(|(l, &d)| l.len() != d)
        {
            return Err(Error::InvalidDims(
                "labels do not match table dimensions".into(),
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn labels(&self) -> Option<&[Vec<String>]> {
        self.labels.as_deref()
    }

    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, multi: &[usize]) -> Result<u64> {
        Ok(self.counts[cell_index(multi, &self.dims)?])
    }

    /// Counts as floating point, in cell order.
    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Returns a copy with the count of cell `index` replaced.
    pub fn with_count(&self, index: usize, value: u64) -> Self {
        let mut out = self.clone();
        out.counts[index] = value;
        out
    }

    /// Human-readable name of a cell: `(i,j)` for two-way tables, `n_ijk` otherwise.
    /// Levels are 1-based.
    pub fn cell_name(&self, index: usize) -> String {
        cell_name(index, &self.dims)
    }

    /// Serializes the table in the given format. Grid output requires two factors.
    pub fn to_text(&self, format: TableFormat) -> Result<String> {
        match format {
            TableFormat::Grid => {
                if self.dims.len() != 2 {
                    return Err(Error::InvalidDims(
                        "grid format needs a two-way table".into(),
                    ));
                }
                let cols = self.dims[1];
                let mut out = String::new();
                if let Some(labels) = &self.labels {
                    out.push(',');
                    out.push_str(&labels[1].join(","));
                    out.push('\n');
                }
                for (r, row) in self.counts.chunks(cols).enumerate() {
                    if let Some(labels) = &self.labels {
                        out.push_str(&labels[0][r]);
                        out.push(',');
                    }
                    let fields: Vec<String> = row.iter().map(|c| c.to_string()).collect();
                    out.push_str(&fields.join(","));
                    out.push('\n');
                }
                Ok(out)
            }
            TableFormat::Long => {
                let mut out = String::new();
                for (j, c) in self.counts.iter().enumerate() {
                    let multi = multi_index(j, &self.dims)?;
                    for m in multi {
                        out.push_str(&(m + 1).to_string());
                        out.push(',');
                    }
                    out.push_str(&c.to_string());
                    out.push('\n');
                }
                Ok(out)
            }
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidDims(format!(
            "dims must be non-empty and positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Flat index of a multi-index under row-major order (last factor fastest).
pub fn cell_index(multi: &[usize], dims: &[usize]) -> Result<usize> {
    if multi.len() != dims.len() {
        return Err(Error::InvalidArgument(format!(
            "multi-index has {} entries, table has {} factors",
            multi.len(),
            dims.len()
        )));
    }
    let mut idx = 0;
    for (factor, (&m, &d)) in multi.iter().zip(dims).enumerate() {
        if m >= d {
            return Err(Error::IndexOutOfRange {
                factor,
                index: m,
                levels: d,
            });
        }
        idx = idx * d + m;
    }
    Ok(idx)
}

/// Inverse of [`cell_index`].
pub fn multi_index(index: usize, dims: &[usize]) -> Result<Vec<usize>> {
    let n: usize = dims.iter().product();
    if index >= n {
        return Err(Error::IndexOutOfRange {
            factor: 0,
            index,
            levels: n,
        });
    }
    let mut out = vec![0; dims.len()];
    let mut rest = index;
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = rest % d;
        rest /= d;
    }
    Ok(out)
}

pub fn cell_name(index: usize, dims: &[usize]) -> String {
    let multi = multi_index(index, dims).unwrap_or_default();
    let levels: Vec<String> = multi.iter().map(|m| (m + 1).to_string()).collect();
    if dims.len() == 2 {
        format!("({})", levels.join(","))
    } else if dims.iter().all(|&d| d <= 9) {
        format!("n_{}", levels.concat())
    } else {
        format!("n_{}", levels.join("_"))
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split(',').map(str::trim).collect()))
        }
    })
}

fn parse_count(field: &str, line: usize) -> Result<u64> {
    field.parse::<u64>().map_err(|_| Error::Parse {
        line,
        msg: format!("`{field}` is not a non-negative integer count"),
    })
}

/// Parses a table from text in the given layout.
///
/// Grid layout: the first line is treated as a header when any of its fields is
/// non-numeric; the first column is treated as row labels when it is
/// non-numeric on every data row. Lines starting with `#` are comments.
pub fn load_table(text: &str, format: TableFormat) -> Result<ContingencyTable> {
    match format {
        TableFormat::Grid => parse_grid(text),
        TableFormat::Long => parse_long(text),
    }
}

fn is_numeric(field: &str) -> bool {
    !field.is_empty() && field.parse::<f64>().is_ok()
}

fn parse_grid(text: &str) -> Result<ContingencyTable> {
    let mut rows: Vec<(usize, Vec<&str>)> = data_lines(text).collect();
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let first = &rows[0].1;
    let looks_like_header = first.iter().skip(1).any(|f| !is_numeric(f))
        || (first.len() == 1 && !is_numeric(first[0]));
    let header = if rows.len() > 1 && looks_like_header {
        Some(rows.remove(0))
    } else {
        None
    };
    let row_labels = rows.iter().all(|(_, r)| !is_numeric(r[0]));
    let width = rows[0].1.len();
    for (i, (_, r)) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Ragged {
                row: i + 1,
                got: r.len(),
                expected: width,
            });
        }
    }
    let skip = usize::from(row_labels);
    let cols = width - skip;
    if cols == 0 {
        return Err(Error::Parse {
            line: rows[0].0,
            msg: "no count columns".into(),
        });
    }
    let mut counts = Vec::with_capacity(rows.len() * cols);
    for (line, r) in &rows {
        for f in &r[skip..] {
            counts.push(parse_count(f, *line)?);
        }
    }
    let table = ContingencyTable::new(vec![rows.len(), cols], counts)?;
    let col_labels: Option<Vec<String>> = header.as_ref().and_then(|(_, h)| {
        let h: Vec<String> = h.iter().map(|s| s.to_string()).collect();
        if h.len() == width {
            Some(h[skip..].to_vec())
        } else if h.len() == cols {
            Some(h)
        } else {
            None
        }
    });
    if let Some(h) = &header {
        if col_labels.is_none() {
            return Err(Error::Ragged {
                row: 0,
                got: h.1.len(),
                expected: width,
            });
        }
    }
    if !row_labels && col_labels.is_none() {
        return Ok(table);
    }
    let rl = if row_labels {
        rows.iter().map(|(_, r)| r[0].to_string()).collect()
    } else {
        (1..=rows.len()).map(|i| i.to_string()).collect()
    };
    let cl = col_labels.unwrap_or_else(|| (1..=cols).map(|i| i.to_string()).collect());
    table.with_labels(vec![rl, cl])
}

fn parse_long(text: &str) -> Result<ContingencyTable> {
    let mut entries: Vec<(usize, Vec<usize>, u64)> = Vec::new();
    let mut width = None;
    for (line, fields) in data_lines(text) {
        // tolerate a header line of non-numeric names
        if entries.is_empty() && width.is_none() && fields.iter().any(|f| !is_numeric(f)) {
            width = Some(fields.len());
            continue;
        }
        let w = *width.get_or_insert(fields.len());
        if fields.len() != w {
            return Err(Error::Ragged {
                row: line,
                got: fields.len(),
                expected: w,
            });
        }
        if w < 2 {
            return Err(Error::Parse {
                line,
                msg: "long format needs at least one level column and a count".into(),
            });
        }
        let mut multi = Vec::with_capacity(w - 1);
        for f in &fields[..w - 1] {
            let level: usize = f.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("`{f}` is not a level number"),
            })?;
            if level == 0 {
                return Err(Error::Parse {
                    line,
                    msg: "level numbers are 1-based".into(),
                });
            }
            multi.push(level - 1);
        }
        let count = parse_count(fields[w - 1], line)?;
        entries.push((line, multi, count));
    }
    if entries.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let k = entries[0].1.len();
    let dims: Vec<usize> = (0..k)
        .map(|f| entries.iter().map(|e| e.1[f]).max().unwrap_or(0) + 1)
        .collect();
    let n: usize = dims.iter().product();
    let mut counts: Vec<Option<u64>> = vec![None; n];
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for (line, multi, count) in entries {
        let idx = cell_index(&multi, &dims)?;
        if seen.insert(idx, line).is_some() {
            return Err(Error::DuplicateCell(multi.iter().map(|m| m + 1).collect()));
        }
        counts[idx] = Some(count);
    }
    let mut out = Vec::with_capacity(n);
    for (idx, c) in counts.into_iter().enumerate() {
        match c {
            Some(c) => out.push(c),
            None => {
                let multi = multi_index(idx, &dims)?;
                return Err(Error::MissingCell(multi.iter().map(|m| m + 1).collect()));
            }
        }
    }
    ContingencyTable::new(dims, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nevada_grid() {
        let text = "2,10,4,2\n3,8,4,6\n13,5,3,9\n20,36,19,20\n";
        let t = load_table(text, TableFormat::Grid).unwrap();
        assert_eq!(t.dims(), &[4, 4]);
        assert_eq!(
            t.counts(),
            &[2, 10, 4, 2, 3, 8, 4, 6, 13, 5, 3, 9, 20, 36, 19, 20]
        );
    }

    #[test]
    fn glass_grid_with_labels() {
        let text = ",high,middle,low\nhigh,588,395,159\nmiddle,349,714,447\nlow,111,320,411\n";
        let t = load_table(text, TableFormat::Grid).unwrap();
        assert_eq!(t.dims(), &[3, 3]);
        assert_eq!(t.counts(), &[588, 395, 159, 349, 714, 447, 111, 320, 411]);
        let labels = t.labels().unwrap();
        assert_eq!(labels[0], vec!["high", "middle", "low"]);
        assert_eq!(labels[1], vec!["high", "middle", "low"]);
        assert_eq!(t.to_text(TableFormat::Grid).unwrap(), text);
    }

    #[test]
    fn single_zero_cell() {
        let t = load_table("0\n", TableFormat::Grid).unwrap();
        assert_eq!(t.dims(), &[1, 1]);
        assert_eq!(t.counts(), &[0]);
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(
            load_table("1,2\n3\n", TableFormat::Grid),
            Err(Error::Ragged { .. })
        ));
        assert!(matches!(
            load_table("1,-2\n3,4\n", TableFormat::Grid),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            load_table("1,2.5\n3,4\n", TableFormat::Grid),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn long_format() {
        let text = "x1,x2,x3,count\n1,1,1,30\n1,1,2,6\n1,2,1,2\n1,2,2,13\n";
        let t = load_table(text, TableFormat::Long).unwrap();
        assert_eq!(t.dims(), &[1, 2, 2]);
        assert_eq!(t.counts(), &[30, 6, 2, 13]);
        assert_eq!(t.cell_name(2), "n_121");
    }

    #[test]
    fn long_format_errors() {
        assert!(matches!(
            load_table("1,1,3\n1,1,4\n", TableFormat::Long),
            Err(Error::DuplicateCell(_))
        ));
        assert!(matches!(
            load_table("1,1,3\n2,2,4\n", TableFormat::Long),
            Err(Error::MissingCell(_))
        ));
        assert!(matches!(
            load_table("1,1,3\n1,2\n", TableFormat::Long),
            Err(Error::Ragged { .. })
        ));
    }

    #[test]
    fn index_examples() {
        assert_eq!(cell_index(&[0, 0], &[3, 3]).unwrap(), 0);
        assert_eq!(cell_index(&[2, 2], &[3, 3]).unwrap(), 8);
        assert_eq!(cell_index(&[2, 0, 0], &[3, 2, 2]).unwrap(), 8);
        assert!(matches!(
            cell_index(&[3, 0], &[3, 3]),
            Err(Error::IndexOutOfRange { factor: 0, .. })
        ));
    }

    #[test]
    fn index_bijection_exhaustive() {
        for dims in [vec![5, 5, 5], vec![3, 2, 2], vec![4, 5], vec![7]] {
            let n: usize = dims.iter().product();
            for j in 0..n {
                let m = multi_index(j, &dims).unwrap();
                assert_eq!(cell_index(&m, &dims).unwrap(), j);
            }
        }
    }

    #[test]
    fn cell_names() {
        assert_eq!(cell_name(8, &[4, 4]), "(3,1)");
        assert_eq!(cell_name(0, &[3, 2, 2]), "n_111");
    }
}
