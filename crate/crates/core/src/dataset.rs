//! Column-named numeric tables with missing values, preprocessing
//! (jitter, rank QQ-transform), testwise deletion and fold assignment.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::normal;
use crate::{QuaccError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column {
            name: name.into(),
            values,
        }
    }

    pub fn complete(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column::new(name, values.into_iter().map(Some).collect())
    }
}

/// An immutable table of optional reals. All columns have `n_rows` entries
/// and names are unique and non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |c| c.values.len());
        let mut seen = HashSet::new();
        for (i, col) in columns.iter().enumerate() {
            if col.name.is_empty() {
                return Err(QuaccError::EmptyColumnName(i));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(QuaccError::DuplicateColumn(col.name.clone()));
            }
            if col.values.len() != n_rows {
                return Err(QuaccError::invalid(format!(
                    "column `{}` has {} rows, expected {}",
                    col.name,
                    col.values.len(),
                    n_rows
                )));
            }
        }
        Ok(Dataset { columns, n_rows })
    }

    /// Builds a table with no missing values.
    pub fn from_columns<S: Into<String>>(columns: Vec<(S, Vec<f64>)>) -> Result<Self> {
        Dataset::new(
            columns
                .into_iter()
                .map(|(name, v)| Column::complete(name, v))
                .collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| QuaccError::UnknownVariable(name.to_string()))
    }

    /// Values of a column that must be complete.
    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .iter()
            .map(|v| v.ok_or_else(|| QuaccError::MissingValues(name.to_string())))
            .collect()
    }

    /// n × |names| matrix of complete columns, in the order given.
    pub fn matrix(&self, names: &[&str]) -> Result<DMatrix<f64>> {
        let cols = names
            .iter()
            .map(|n| self.values(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.n_rows, names.len(), |i, j| {
            cols[j][i]
        }))
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| Column::new(c.name.clone(), rows.iter().map(|&r| c.values[r]).collect()))
            .collect();
        Dataset {
            columns,
            n_rows: rows.len(),
        }
    }

    /// Replaces (or appends) a column.
    pub fn with_column(&self, column: Column) -> Result<Dataset> {
        let mut columns = self.columns.clone();
        match columns.iter_mut().find(|c| c.name == column.name) {
            Some(slot) => *slot = column,
            None => columns.push(column),
        }
        Dataset::new(columns)
    }

    /// Keeps only the rows where every listed column is observed.
    pub fn pairwise_complete(&self, vars: &[&str]) -> Result<Dataset> {
        let cols = vars
            .iter()
            .map(|v| self.column(v))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<usize> = (0..self.n_rows)
            .filter(|&r| cols.iter().all(|c| c[r].is_some()))
            .collect();
        Ok(self.select_rows(&rows))
    }

    pub fn load_csv(path: impl AsRef<Path>, delimiter: u8) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Dataset::read_csv(file, delimiter)
    }

    pub fn read_csv<R: Read>(reader: R, delimiter: u8) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(rec) => rec?,
            None => return Err(QuaccError::NoHeader),
        };
        let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
        if names.len() == 1 && names[0].is_empty() {
            return Err(QuaccError::NoHeader);
        }
        let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
        for rec in records {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != names.len() {
                return Err(QuaccError::RaggedRow {
                    row: line,
                    expected: names.len(),
                    found: rec.len(),
                });
            }
            for (j, cell) in rec.iter().enumerate() {
                let cell = cell.trim();
                let v = if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| QuaccError::ParseCell {
                        row: line,
                        column: names[j].clone(),
                        value: cell.to_string(),
                    })?)
                };
                values[j].push(v);
            }
        }
        Dataset::new(
            names
                .into_iter()
                .zip(values)
                .map(|(n, v)| Column::new(n, v))
                .collect(),
        )
    }

    /// Writes the table as CSV; missing cells are left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for r in 0..self.n_rows {
            wtr.write_record(
                self.columns
                    .iter()
                    .map(|c| c.values[r].map_or(String::new(), |v| v.to_string())),
            )?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Adds Unif(−d/5, d/5) noise, where d is the smallest gap between adjacent
/// distinct values. Noise stays below d/2, so distinct values never swap.
pub fn jitter<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let d = min_gap(values)
        .ok_or_else(|| QuaccError::invalid("jitter needs at least two distinct finite values"))?;
    let half_width = d / 5.0;
    Ok(values
        .iter()
        .map(|&v| v + rng.random_range(-half_width..half_width))
        .collect())
}

/// Jitter applied to the observed entries of a column with missing values.
pub fn jitter_column<R: Rng + ?Sized>(
    values: &[Option<f64>],
    rng: &mut R,
) -> Result<Vec<Option<f64>>> {
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    let mut jittered = jitter(&observed, rng)?.into_iter();
    Ok(values
        .iter()
        .map(|v| v.and_then(|_| jittered.next()))
        .collect())
}

fn min_gap(values: &[f64]) -> Option<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .min_by(f64::total_cmp)
}

/// Average ranks (1-based, ties averaged) of the given values.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share the mean of ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Rank-based normal scores Φ⁻¹(r/(m+1)) over the m observed entries;
/// missing entries stay missing.
pub fn qq_transform(values: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    let m = observed.len();
    if m < 2 {
        return Err(QuaccError::InsufficientSample(format!(
            "qq-transform needs at least 2 observed values, found {m}"
        )));
    }
    let ranks = average_ranks(&observed);
    let mut scores = ranks
        .into_iter()
        .map(|r| normal::quantile(r / (m as f64 + 1.0)));
    Ok(values
        .iter()
        .map(|v| v.and_then(|_| scores.next()))
        .collect())
}

/// Fold label of every row for K-fold cross-fitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of_row: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of_row(&self) -> &[usize] {
        &self.fold_of_row
    }

    /// Rows belonging to fold `fold`, ascending.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_row.len())
            .filter(|&r| self.fold_of_row[r] == fold)
            .collect()
    }

    /// Rows outside fold `fold`, ascending.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_row.len())
            .filter(|&r| self.fold_of_row[r] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of_row {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Random permutation of 0..n cut into K contiguous blocks whose sizes
/// differ by at most one.
pub fn kfold_split<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(QuaccError::invalid(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    if n < k {
        return Err(QuaccError::InsufficientSample(format!(
            "{n} rows cannot fill {k} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let (base, extra) = (n / k, n % k);
    let mut fold_of_row = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &perm[pos..pos + size] {
            fold_of_row[row] = fold;
        }
        pos += size;
    }
    Ok(FoldAssignment { fold_of_row, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn csv(text: &str) -> Result<Dataset> {
        Dataset::read_csv(text.as_bytes(), b',')
    }

    #[test]
    fn parses_missing_cells() {
        let d = csv("a,b\n1,2\n3,\n").unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.column("b").unwrap(), &[Some(2.0), None]);
        assert_eq!(d.names(), vec!["a", "b"]);
    }

    #[test]
    fn empty_file_has_no_header() {
        assert!(matches!(csv(""), Err(QuaccError::NoHeader)));
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = csv("a,b,c\n1,2,3\n1,2,3\n1,2,3\n1,2\n").unwrap_err();
        assert_eq!(err.to_string(), "ragged row 5: expected 3 cells, found 2");
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(matches!(
            csv("a,a\n1,2\n"),
            Err(QuaccError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn unparseable_cell_rejected() {
        assert!(matches!(csv("a\nfoo\n"), Err(QuaccError::ParseCell { .. })));
    }

    #[test]
    fn csv_round_trip_keeps_missing() {
        let d = csv("x,y\n1.5,\n,2\n").unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(csv(std::str::from_utf8(&buf).unwrap()).unwrap(), d);
    }

    #[test]
    fn jitter_bounds() {
        let mut rng = seeded(1);
        let out = jitter(&[1.0, 1.0, 2.0], &mut rng).unwrap();
        for (o, i) in out.iter().zip([1.0, 1.0, 2.0]) {
            assert!((o - i).abs() <= 0.2);
        }
        assert!(out[0] < out[2] && out[1] < out[2]);

        let out = jitter(&[0.0, 10.0, 20.0], &mut rng).unwrap();
        for (o, i) in out.iter().zip([0.0, 10.0, 20.0]) {
            assert!((o - i).abs() < 2.0);
        }
    }

    #[test]
    fn jitter_constant_fails() {
        assert!(jitter(&[5.0, 5.0, 5.0], &mut seeded(0)).is_err());
    }

    #[test]
    fn qq_transform_examples() {
        let out = qq_transform(&[Some(1.0), Some(2.0), Some(3.0)]).unwrap();
        let expect = [-0.674_489_750_196_081_7, 0.0, 0.674_489_750_196_081_7];
        for (o, e) in out.iter().zip(expect) {
            assert!((o.unwrap() - e).abs() < 1e-12);
        }
        let ties = qq_transform(&[Some(7.0), Some(7.0)]).unwrap();
        assert!(ties.iter().all(|v| v.unwrap().abs() < 1e-15));

        let gap = qq_transform(&[Some(3.0), None, Some(1.0)]).unwrap();
        assert!((gap[0].unwrap() - normal::quantile(2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(gap[1], None);
        assert!((gap[2].unwrap() - normal::quantile(1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn qq_transform_needs_two_values() {
        assert!(qq_transform(&[Some(1.0), None]).is_err());
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn pairwise_complete_examples() {
        let d = csv("a,b,c\n1,2,3\n1,,3\n,2,\n").unwrap();
        let ab = d.pairwise_complete(&["a", "b"]).unwrap();
        assert_eq!(ab.n_rows(), 1);
        assert_eq!(d.pairwise_complete(&[]).unwrap(), d);
        let none = d.pairwise_complete(&["a", "b", "c"]).unwrap();
        assert_eq!(none.n_rows(), 1);
        let d2 = csv("a,b\n1,\n,2\n").unwrap();
        assert_eq!(d2.pairwise_complete(&["a", "b"]).unwrap().n_rows(), 0);
        assert!(matches!(
            d.pairwise_complete(&["zz"]),
            Err(QuaccError::UnknownVariable(_))
        ));
    }

    #[test]
    fn kfold_sizes() {
        let f = kfold_split(10, 5, &mut seeded(3)).unwrap();
        assert_eq!(f.fold_sizes(), vec![2; 5]);
        let mut sizes = kfold_split(11, 5, &mut seeded(3)).unwrap().fold_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
        assert_eq!(
            kfold_split(50, 5, &mut seeded(9)).unwrap(),
            kfold_split(50, 5, &mut seeded(9)).unwrap()
        );
        assert!(kfold_split(3, 5, &mut seeded(0)).is_err());
        assert!(kfold_split(10, 1, &mut seeded(0)).is_err());
    }

    #[test]
    fn matrix_layout() {
        let d = Dataset::from_columns(vec![("a", vec![1.0, 2.0]), ("b", vec![3.0, 4.0])]).unwrap();
        let m = d.matrix(&["b", "a"]).unwrap();
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(d.matrix(&[]).unwrap().ncols(), 0);
    }
}
