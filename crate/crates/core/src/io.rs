//! File formats: dense matrices (CSV or binary), observation sets, truth
//! sidecars and JSON reports.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{Entry, LinearObservation, ObservationSet, Observations};
use crate::sampling::SyntheticTruth;

pub const BINARY_MAGIC: &[u8; 5] = b"SSSM1";
pub const TRUTH_SCHEMA: &str = "ss3-truth-1";

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{}:{line}: bad number {s:?}", path.display())))
}

fn parse_usize(s: &str, path: &Path, line: usize) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("{}:{line}: bad index {s:?}", path.display())))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        k => Error::Parse(format!("{}: {k:?}", path.display())),
    }
}

/// Dense CSV, one row per line, no header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|x| format!("{x:?}")))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec.iter().map(|f| parse_f64(f, path, k + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "{}:{}: expected {} columns, found {}",
                    path.display(),
                    k + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return Err(Error::Parse(format!("{}: empty matrix", path.display())));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// "SSSM1", u64 rows, u64 cols, then f64 row-major, all little-endian.
pub fn write_matrix_binary(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for x in m.row(i).iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_binary(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Parse(format!("{}: not an SSSM1 matrix", path.display())));
    }
    let mut u = [0u8; 8];
    r.read_exact(&mut u)?;
    let nr = u64::from_le_bytes(u) as usize;
    r.read_exact(&mut u)?;
    let nc = u64::from_le_bytes(u) as usize;
    let avail = (fs::metadata(path)?.len() as usize).saturating_sub(21) / 8;
    let len = nr
        .checked_mul(nc)
        .filter(|&n| n <= avail)
        .ok_or_else(|| Error::Parse(format!("{}: header claims {nr}×{nc}, file too short", path.display())))?;
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf)?;
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(DMatrix::from_row_slice(nr, nc, &vals))
}

/// Reads either format, sniffing the binary magic.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut head = [0u8; 5];
    let n = File::open(path)?.read(&mut head)?;
    if n == 5 && &head == BINARY_MAGIC {
        read_matrix_binary(path)
    } else {
        read_matrix_csv(path)
    }
}

/// Writes binary when the extension is `.bin`, CSV otherwise.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        write_matrix_binary(path, m)
    } else {
        write_matrix_csv(path, m)
    }
}

/// "i,j,value" lines, 0-based.
pub fn write_entries_csv(path: &Path, entries: &[Entry]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for e in entries {
        w.write_record([e.i.to_string(), e.j.to_string(), format!("{:?}", e.y)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_entries_csv(path: &Path) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (k, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::Parse(format!("{}:{}: expected i,j,value", path.display(), k + 1)));
        }
        out.push(Entry {
            i: parse_usize(&rec[0], path, k + 1)?,
            j: parse_usize(&rec[1], path, k + 1)?,
            y: parse_f64(&rec[2], path, k + 1)?,
        });
    }
    Ok(out)
}

fn sorted_files(dir: &Path, accept: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_file() && p.file_name().and_then(|n| n.to_str()).is_some_and(&accept) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn is_matrix_file(name: &str) -> bool {
    name.ends_with(".csv") || name.ends_with(".bin")
}

/// Writes an observation set. Entrywise data goes to a single CSV file;
/// replicates to `rep_00000.csv, …` inside `path`; linear functionals to
/// `y.csv` plus `A_00000.csv, …` inside `path`.
pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    match obs.data() {
        Observations::Entrywise(e) => write_entries_csv(path, e),
        Observations::Replicate(reps) => {
            fs::create_dir_all(path)?;
            for (k, r) in reps.iter().enumerate() {
                write_matrix_csv(&path.join(format!("rep_{k:05}.csv")), r)?;
            }
            Ok(())
        }
        Observations::Linear(obs) => {
            fs::create_dir_all(path)?;
            let y = DMatrix::from_iterator(obs.len(), 1, obs.iter().map(|o| o.y));
            write_matrix_csv(&path.join("y.csv"), &y)?;
            for (k, o) in obs.iter().enumerate() {
                write_matrix_csv(&path.join(format!("A_{k:05}.csv")), &o.a)?;
            }
            Ok(())
        }
    }
}

/// Reads what [`write_observations`] wrote. A file is entrywise data (its
/// dimensions come from `dims` or, failing that, the largest indices seen);
/// a directory with `y.csv` holds linear functionals; any other directory
/// holds replicates.
pub fn read_observations(path: &Path, dims: Option<(usize, usize)>) -> Result<ObservationSet> {
    if path.is_file() {
        let entries = read_entries_csv(path)?;
        let (p1, p2) = match dims {
            Some(d) => d,
            None => (
                entries.iter().map(|e| e.i + 1).max().unwrap_or(0),
                entries.iter().map(|e| e.j + 1).max().unwrap_or(0),
            ),
        };
        return ObservationSet::entrywise(p1, p2, entries);
    }
    if !path.is_dir() {
        return Err(invalid(format!("{} does not exist", path.display())));
    }
    let y_path = path.join("y.csv");
    if y_path.is_file() {
        let y = read_matrix(&y_path)?;
        if y.ncols() != 1 {
            return Err(Error::Parse(format!("{}: expected one value per line", y_path.display())));
        }
        let a_files = sorted_files(path, |n| n.starts_with("A_") && is_matrix_file(n))?;
        if a_files.len() != y.nrows() {
            return Err(invalid(format!(
                "{} responses but {} sensing matrices",
                y.nrows(),
                a_files.len()
            )));
        }
        let mut obs = Vec::with_capacity(a_files.len());
        for (k, f) in a_files.iter().enumerate() {
            obs.push(LinearObservation {
                a: Arc::new(read_matrix(f)?),
                y: y[k],
            });
        }
        let (p1, p2) = obs[0].a.shape();
        if let Some(d) = dims {
            if d != (p1, p2) {
                return Err(crate::error::mismatch(format!("expected {d:?}, files are {:?}", (p1, p2))));
            }
        }
        return ObservationSet::linear(p1, p2, obs);
    }
    let files = sorted_files(path, is_matrix_file)?;
    if files.is_empty() {
        return Err(invalid(format!("{} holds no matrix files", path.display())));
    }
    let reps = files.iter().map(|f| read_matrix(f)).collect::<Result<Vec<_>>>()?;
    let set = ObservationSet::replicate(reps)?;
    if let Some(d) = dims {
        if d != set.dims() {
            return Err(crate::error::mismatch(format!("expected {d:?}, files are {:?}", set.dims())));
        }
    }
    Ok(set)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthMeta {
    pub schema: String,
    pub p1: usize,
    pub p2: usize,
    pub rank: usize,
    pub spectrum: Vec<f64>,
    pub seed: u64,
    /// L⋆, relative to the metadata file.
    pub matrix: String,
    /// Full orthogonal frames; optional so that hand-written sidecars work.
    #[serde(default)]
    pub u_frame: Option<String>,
    #[serde(default)]
    pub v_frame: Option<String>,
}

/// Writes `<stem>.csv` (L⋆), `<stem>_u.csv`, `<stem>_v.csv` and `<stem>.json`
/// into `dir`, returning the metadata path.
pub fn write_truth(dir: &Path, stem: &str, truth: &SyntheticTruth) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (p1, p2) = truth.dims();
    let meta = TruthMeta {
        schema: TRUTH_SCHEMA.into(),
        p1,
        p2,
        rank: truth.rank(),
        spectrum: truth.spectrum.clone(),
        seed: truth.seed,
        matrix: format!("{stem}.csv"),
        u_frame: Some(format!("{stem}_u.csv")),
        v_frame: Some(format!("{stem}_v.csv")),
    };
    write_matrix_csv(&dir.join(&meta.matrix), &truth.l_star)?;
    write_matrix_csv(&dir.join(meta.u_frame.as_ref().unwrap()), &truth.u_full)?;
    write_matrix_csv(&dir.join(meta.v_frame.as_ref().unwrap()), &truth.v_full)?;
    let json = dir.join(format!("{stem}.json"));
    write_json(&json, &meta)?;
    Ok(json)
}

/// Loads a truth sidecar from its JSON metadata. Stored frames are used when
/// present; otherwise L⋆ is decomposed at the recorded rank.
pub fn read_truth(meta_path: &Path) -> Result<SyntheticTruth> {
    let meta: TruthMeta = read_json(meta_path)?;
    if meta.schema != TRUTH_SCHEMA {
        return Err(Error::Parse(format!("unknown truth schema {:?}", meta.schema)));
    }
    if meta.spectrum.len() != meta.rank {
        return Err(invalid("truth metadata: spectrum length differs from rank"));
    }
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let truth = match (&meta.u_frame, &meta.v_frame) {
        (Some(u), Some(v)) => {
            SyntheticTruth::from_frames(read_matrix(&dir.join(u))?, read_matrix(&dir.join(v))?, &meta.spectrum, meta.seed)?
        }
        _ => SyntheticTruth::from_matrix(read_matrix(&dir.join(&meta.matrix))?, Some(meta.rank), 0.0, meta.seed)?,
    };
    if truth.dims() != (meta.p1, meta.p2) {
        return Err(crate::error::mismatch(format!(
            "truth metadata says {}×{}, files are {:?}",
            meta.p1,
            meta.p2,
            truth.dims()
        )));
    }
    Ok(truth)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
