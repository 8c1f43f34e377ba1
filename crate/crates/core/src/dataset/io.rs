//! File formats.
//!
//! * features: CSV `id,f0,...,f{D-1}`, or binary: `ZSLF`, u32 rows, u32 cols
//!   (little endian), then row-major little-endian f32 values.
//! * labels: CSV `id,class`, one row per feature row, same order.
//! * embeddings: CSV `class,e0,...,e{D'-1}`. Rows are L2-normalized on load.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::{fuse_embeddings, ZslDataset};
use crate::error::{Result, ZslError};

pub const FEATURES_MAGIC: &[u8; 4] = b"ZSLF";

struct Table {
    keys: Vec<String>,
    lines: Vec<u64>,
    values: Vec<f64>,
    cols: usize,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| ZslError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> ZslError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    ZslError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Reads `key,v0,...` rows where the header's first column must be `key_name`.
fn read_numeric_table(path: &Path, key_name: &str) -> Result<Table> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 || &header[0] != key_name {
        return Err(ZslError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{key_name},...` with at least one value column"),
        });
    }
    let cols = header.len() - 1;
    let mut table = Table {
        keys: Vec::new(),
        lines: Vec::new(),
        values: Vec::new(),
        cols,
    };
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != cols + 1 {
            return Err(ZslError::RaggedRow {
                path: path.to_path_buf(),
                line,
                expected: cols + 1,
                found: record.len(),
            });
        }
        table.keys.push(record[0].to_string());
        table.lines.push(line);
        for field in record.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| ZslError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(ZslError::NonFiniteInput {
                    path: path.to_path_buf(),
                    line,
                });
            }
            table.values.push(v);
        }
    }
    Ok(table)
}

/// Feature rows and, for CSV input, their ids.
pub fn read_features(path: &Path) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    let mut file = File::open(path).map_err(|e| ZslError::io(path, e))?;
    let mut magic = [0u8; 4];
    let is_binary = matches!(file.read(&mut magic), Ok(4)) && &magic == FEATURES_MAGIC;
    drop(file);
    if is_binary {
        return read_features_binary(path).map(|m| (None, m));
    }
    let table = read_numeric_table(path, "id")?;
    let rows = table.keys.len();
    Ok((
        Some(table.keys),
        DMatrix::from_row_slice(rows, table.cols, &table.values),
    ))
}

fn read_features_binary(path: &Path) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ZslError::io(path, e))?;
    let bad = |message: String| ZslError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    if bytes.len() < 12 {
        return Err(bad("truncated binary header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + rows * cols * 4;
    if bytes.len() != expected {
        return Err(bad(format!(
            "binary payload is {} bytes, header declares {rows}x{cols} ({expected} bytes)",
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[12..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            // binary rows are reported 1-based like CSV data lines
            return Err(ZslError::NonFiniteInput {
                path: path.to_path_buf(),
                line: (i / cols.max(1) + 1) as u64,
            });
        }
        values.push(v as f64);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_features_binary(features: &DMatrix<f64>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| ZslError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| ZslError::io(path, e));
    write(FEATURES_MAGIC)?;
    write(&(features.nrows() as u32).to_le_bytes())?;
    write(&(features.ncols() as u32).to_le_bytes())?;
    for row in features.row_iter() {
        for &v in row.iter() {
            write(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| ZslError::io(path, e))
}

/// Class names and raw (un-normalized) embedding rows.
pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let table = read_numeric_table(path, "class")?;
    let mut seen = HashMap::new();
    for (name, line) in table.keys.iter().zip(&table.lines) {
        if seen.insert(name.as_str(), *line).is_some() {
            return Err(ZslError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("duplicate class `{name}`"),
            });
        }
    }
    let rows = table.keys.len();
    Ok((
        table.keys,
        DMatrix::from_row_slice(rows, table.cols, &table.values),
    ))
}

struct LabelRow {
    id: String,
    class: String,
    line: u64,
}

fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() != 2 || &header[0] != "id" || &header[1] != "class" {
        return Err(ZslError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header `id,class`".into(),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(ZslError::RaggedRow {
                path: path.to_path_buf(),
                line,
                expected: 2,
                found: record.len(),
            });
        }
        rows.push(LabelRow {
            id: record[0].to_string(),
            class: record[1].to_string(),
            line,
        });
    }
    Ok(rows)
}

pub fn load_dataset(
    features_path: &Path,
    labels_path: &Path,
    embeddings_path: &Path,
) -> Result<ZslDataset> {
    load_dataset_fused(features_path, labels_path, &[embeddings_path.to_path_buf()])
}

/// Loads a dataset whose label embedding is the concatenation of several
/// embedding files (e.g. attributes and word vectors). Classes are ordered as
/// in the first embedding file; every file must cover the same classes.
pub fn load_dataset_fused(
    features_path: &Path,
    labels_path: &Path,
    embedding_paths: &[PathBuf],
) -> Result<ZslDataset> {
    let first = embedding_paths
        .first()
        .ok_or_else(|| ZslError::InvalidArgument("no embeddings file given".into()))?;
    let (class_names, first_block) = read_embeddings(first)?;
    let index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let mut blocks = vec![first_block];
    for path in &embedding_paths[1..] {
        let (names, block) = read_embeddings(path)?;
        if names.len() != class_names.len() {
            return Err(ZslError::DimensionMismatch(format!(
                "{} lists {} classes, {} lists {}",
                first.display(),
                class_names.len(),
                path.display(),
                names.len()
            )));
        }
        let mut aligned = DMatrix::zeros(block.nrows(), block.ncols());
        for (row, name) in names.iter().enumerate() {
            let target = *index.get(name.as_str()).ok_or_else(|| ZslError::UnknownClass {
                path: path.clone(),
                line: row as u64 + 2,
                class: name.clone(),
            })?;
            aligned.set_row(target, &block.row(row));
        }
        blocks.push(aligned);
    }
    let embeddings = fuse_embeddings(&blocks)?;

    let (ids, features) = read_features(features_path)?;
    let label_rows = read_labels(labels_path)?;
    if label_rows.len() != features.nrows() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} has {} rows but {} has {}",
            features_path.display(),
            features.nrows(),
            labels_path.display(),
            label_rows.len()
        )));
    }
    let mut labels = Vec::with_capacity(label_rows.len());
    for (i, row) in label_rows.iter().enumerate() {
        if let Some(ids) = &ids {
            if ids[i] != row.id {
                return Err(ZslError::Parse {
                    path: labels_path.to_path_buf(),
                    line: row.line,
                    message: format!(
                        "id `{}` does not match feature row {} id `{}`",
                        row.id,
                        i + 1,
                        ids[i]
                    ),
                });
            }
        }
        let class = *index
            .get(row.class.as_str())
            .ok_or_else(|| ZslError::UnknownClass {
                path: labels_path.to_path_buf(),
                line: row.line,
                class: row.class.clone(),
            })?;
        labels.push(class);
    }
    ZslDataset::new(features, labels, embeddings, class_names)
}

/// Writes `features.csv`, `labels.csv` and `embeddings.csv` into `dir`.
pub fn write_dataset_csv(dataset: &ZslDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ZslError::io(dir, e))?;
    let id_width = dataset.n_instances().to_string().len();
    let instance_id = |i: usize| format!("x{i:0id_width$}");

    let write_matrix = |path: PathBuf, key: &str, prefix: &str, keys: &dyn Fn(usize) -> String, m: &DMatrix<f64>| -> Result<()> {
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let mut header = vec![key.to_string()];
        header.extend((0..m.ncols()).map(|j| format!("{prefix}{j}")));
        w.write_record(&header).map_err(|e| csv_error(&path, e))?;
        for (i, row) in m.row_iter().enumerate() {
            let mut rec = vec![keys(i)];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| ZslError::io(&path, e))
    };

    write_matrix(dir.join("features.csv"), "id", "f", &instance_id, dataset.features())?;
    let names = dataset.class_names();
    write_matrix(
        dir.join("embeddings.csv"),
        "class",
        "e",
        &|i| names[i].clone(),
        dataset.embeddings(),
    )?;

    let path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["id", "class"]).map_err(|e| csv_error(&path, e))?;
    for (i, &l) in dataset.labels().iter().enumerate() {
        w.write_record([instance_id(i).as_str(), names[l].as_str()])
            .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| ZslError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_minimal_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "id,f0,f1\na,0,1\nb,1,0\nc,2,2\n");
        let l = write(dir.path(), "l.csv", "id,class\na,cat\nb,dog\nc,dog\n");
        let e = write(dir.path(), "e.csv", "class,e0,e1\ncat,3,4\ndog,0,2\n");
        let d = load_dataset(&f, &l, &e).unwrap();
        assert_eq!((d.n_instances(), d.n_classes(), d.feature_dim()), (3, 2, 2));
        assert_eq!(d.labels(), &[0, 1, 1]);
        assert_eq!(d.features()[(2, 1)], 2.0);
        assert!((d.embeddings()[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((d.embeddings()[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_class_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "id,f0\na,0\nb,1\n");
        let l = write(dir.path(), "l.csv", "id,class\na,cat\nb,zebra\n");
        let e = write(dir.path(), "e.csv", "class,e0\ncat,1\ndog,2\n");
        match load_dataset(&f, &l, &e).unwrap_err() {
            ZslError::UnknownClass { class, line, .. } => {
                assert_eq!(class, "zebra");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ragged_feature_row() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(
            dir.path(),
            "f.csv",
            "id,f0,f1,f2,f3\na,0,1,2,3\nb,1,0,2\n",
        );
        let l = write(dir.path(), "l.csv", "id,class\na,cat\nb,dog\n");
        let e = write(dir.path(), "e.csv", "class,e0\ncat,1\ndog,2\n");
        match load_dataset(&f, &l, &e).unwrap_err() {
            ZslError::RaggedRow {
                line,
                expected,
                found,
                ..
            } => assert_eq!((line, expected, found), (3, 5, 4)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn row_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "id,f0\na,0\nb,1\nc,3\n");
        let l = write(dir.path(), "l.csv", "id,class\na,cat\nb,dog\n");
        let e = write(dir.path(), "e.csv", "class,e0\ncat,1\ndog,2\n");
        assert!(matches!(
            load_dataset(&f, &l, &e).unwrap_err(),
            ZslError::DimensionMismatch(_)
        ));
    }

    #[test]
    fn non_finite_feature() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "id,f0\na,0\nb,inf\n");
        let l = write(dir.path(), "l.csv", "id,class\na,cat\nb,dog\n");
        let e = write(dir.path(), "e.csv", "class,e0\ncat,1\ndog,2\n");
        assert!(matches!(
            load_dataset(&f, &l, &e).unwrap_err(),
            ZslError::NonFiniteInput { line: 3, .. }
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_embeddings(Path::new("/nonexistent/emb.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/emb.csv"));
    }

    #[test]
    fn binary_features_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[0.5, -1.0, 2.0, 3.25, 0.0, 1.5]);
        let p = dir.path().join("f.bin");
        write_features_binary(&m, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"ZSLF");
        assert_eq!(bytes.len(), 12 + 6 * 4);
        let (ids, back) = read_features(&p).unwrap();
        assert!(ids.is_none());
        assert_eq!(back, m);
    }

    #[test]
    fn fused_files_align_by_class_name() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "id,f0\na,0\nb,1\n");
        let l = write(dir.path(), "l.csv", "id,class\na,cat\nb,dog\n");
        let a = write(dir.path(), "a.csv", "class,e0\ncat,2\ndog,5\n");
        let w = write(dir.path(), "w.csv", "class,e0,e1\ndog,0,3\ncat,4,0\n");
        let d = load_dataset_fused(&f, &l, &[a, w]).unwrap();
        let e = d.embeddings();
        assert_eq!(e.ncols(), 3);
        assert_eq!(e.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0]);
        assert_eq!(e.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 1.0]);
    }
}
