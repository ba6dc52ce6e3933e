//! Dense matrix ingestion: numeric CSV and a raw little-endian binary layout.

use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use super::ProblemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    /// Comma-separated numeric rows; an optional header row is detected by a
    /// non-numeric first line and skipped.
    Csv,
    /// 16-byte header of two little-endian u64 dims (rows, cols) followed by
    /// row-major little-endian f64 values.
    Binary,
}

/// Load a dense matrix from disk, optionally standardizing each column to
/// mean 0 and (population) variance 1.
pub fn load_matrix(
    path: impl AsRef<Path>,
    format: MatrixFormat,
    standardize: bool,
) -> Result<Array2<f64>, ProblemError> {
    let mut matrix = match format {
        MatrixFormat::Csv => load_csv(path.as_ref())?,
        MatrixFormat::Binary => load_binary(path.as_ref())?,
    };
    if standardize {
        standardize_columns(&mut matrix);
    }
    Ok(matrix)
}

fn load_csv(path: &Path) -> Result<Array2<f64>, ProblemError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected_cols = None;
    let mut data_row = 0usize;
    for (line_idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parsed = Vec::new();
        let mut failed_at = None;
        for (col, cell) in line.split(',').enumerate() {
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                Ok(_) => {
                    failed_at = Some((col, "non-finite value".to_string()));
                    break;
                }
                Err(e) => {
                    failed_at = Some((col, format!("{e}: {:?}", cell.trim())));
                    break;
                }
            }
        }
        if let Some((col, message)) = failed_at {
            // a non-numeric first line is a header
            if line_idx == 0 && rows.is_empty() {
                continue;
            }
            return Err(ProblemError::Parse {
                row: data_row,
                col,
                message,
            });
        }
        if let Some(expected) = expected_cols {
            if parsed.len() != expected {
                return Err(ProblemError::RaggedRow {
                    row: data_row,
                    expected,
                    got: parsed.len(),
                });
            }
        } else {
            expected_cols = Some(parsed.len());
        }
        rows.push(parsed);
        data_row += 1;
    }
    let cols = expected_cols.ok_or(ProblemError::EmptyFile)?;
    if rows.is_empty() || cols == 0 {
        return Err(ProblemError::EmptyFile);
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / cols, cols), flat).map_err(|_| ProblemError::EmptyFile)
}

fn load_binary(path: &Path) -> Result<Array2<f64>, ProblemError> {
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header).map_err(|_| ProblemError::Parse {
        row: 0,
        col: 0,
        message: "file shorter than the 16-byte header".into(),
    })?;
    let rows = u64::from_le_bytes(header[0..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(ProblemError::EmptyFile);
    }
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let expected = rows * cols * 8;
    if bytes.len() != expected {
        return Err(ProblemError::Parse {
            row: 0,
            col: 0,
            message: format!(
                "payload is {} bytes, header implies {expected}",
                bytes.len()
            ),
        });
    }
    let mut flat = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(ProblemError::NonFinite {
                row: i / cols,
                col: i % cols,
            });
        }
        flat.push(v);
    }
    Array2::from_shape_vec((rows, cols), flat).map_err(|_| ProblemError::EmptyFile)
}

/// In-place per-column standardization to mean 0 and population variance 1.
/// Constant columns are centered and left with zero variance.
pub fn standardize_columns(matrix: &mut Array2<f64>) {
    let n = matrix.nrows() as f64;
    for mut col in matrix.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        if var > 0.0 {
            let inv = var.sqrt().recip();
            col.mapv_inplace(|v| v * inv);
        }
    }
}

/// Write a matrix in the binary layout `load_matrix` reads.
pub fn write_binary(path: impl AsRef<Path>, matrix: &Array2<f64>) -> Result<(), ProblemError> {
    let mut bytes =
        Vec::with_capacity(16 + matrix.len() * 8);
    bytes.extend_from_slice(&(matrix.nrows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(matrix.ncols() as u64).to_le_bytes());
    for v in matrix.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("sgdflow-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn csv_two_by_two() {
        let p = tmp("basic.csv");
        std::fs::write(&p, "1,2\n3,4\n").unwrap();
        let m = load_matrix(&p, MatrixFormat::Csv, false).unwrap();
        assert_eq!(m, array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn csv_header_detected_and_skipped() {
        let p = tmp("header.csv");
        std::fs::write(&p, "x,y\n1,2\n3,4\n").unwrap();
        let m = load_matrix(&p, MatrixFormat::Csv, false).unwrap();
        assert_eq!(m.nrows(), 2);
    }

    #[test]
    fn empty_file_is_an_error() {
        let p = tmp("empty.csv");
        std::fs::write(&p, "").unwrap();
        assert!(matches!(
            load_matrix(&p, MatrixFormat::Csv, false),
            Err(ProblemError::EmptyFile)
        ));
    }

    #[test]
    fn ragged_and_bad_cells_are_located() {
        let p = tmp("ragged.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        match load_matrix(&p, MatrixFormat::Csv, false) {
            Err(ProblemError::RaggedRow { row, expected, got }) => {
                assert_eq!((row, expected, got), (1, 2, 1));
            }
            other => panic!("expected ragged row error, got {other:?}"),
        }

        let p = tmp("badcell.csv");
        std::fs::write(&p, "1,2\n3,oops\n").unwrap();
        match load_matrix(&p, MatrixFormat::Csv, false) {
            Err(ProblemError::Parse { row, col, .. }) => assert_eq!((row, col), (1, 1)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn standardization_centers_and_scales() {
        let p = tmp("standardize.csv");
        std::fs::write(&p, "1,10\n2,20\n3,30\n4,40\n").unwrap();
        let m = load_matrix(&p, MatrixFormat::Csv, true).unwrap();
        let n = m.nrows() as f64;
        for col in m.columns() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| v * v).sum::<f64>() / n;
            assert!(mean.abs() <= 1e-12, "column mean {mean}");
            assert!((var - 1.0).abs() <= 1e-10, "column variance {var}");
        }
    }

    #[test]
    fn binary_round_trip() {
        let p = tmp("mat.bin");
        let m = array![[1.5, -2.25, 3.0], [0.0, 4.5, -1.125]];
        write_binary(&p, &m).unwrap();
        let back = load_matrix(&p, MatrixFormat::Binary, false).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn binary_truncated_payload_rejected() {
        let p = tmp("short.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(
            load_matrix(&p, MatrixFormat::Binary, false),
            Err(ProblemError::Parse { .. })
        ));
    }
}
