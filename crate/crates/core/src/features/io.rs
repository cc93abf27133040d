use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{FeatureSequence, Frames, CHROMA_DIM};
use crate::error::{Error, Result};

const CHROMA_SUFFIX: &str = ".chroma.csv";
const ONSET_SUFFIX: &str = ".onset.csv";

/// Label encoded in a `<label>.chroma.csv` file name (falls back to the
/// file stem for other names).
pub(crate) fn label_from_path(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    match name.strip_suffix(CHROMA_SUFFIX) {
        Some(label) => label.to_string(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(name),
    }
}

pub(crate) fn onset_companion(path: &Path) -> Option<PathBuf> {
    let name = path.file_name()?.to_str()?;
    let label = name.strip_suffix(CHROMA_SUFFIX)?;
    Some(path.with_file_name(format!("{label}{ONSET_SUFFIX}")))
}

/// Reads a headerless CSV of non-negative numbers, one frame per line.
/// With `expected_dim` unset the first row fixes the dimension.
pub(crate) fn read_frames_csv(path: &Path, expected_dim: Option<usize>) -> Result<Frames> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut dim = expected_dim;
    let mut data = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    message: e.to_string(),
                });
            }
        }
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let d = *dim.get_or_insert(record.len());
        if record.len() != d {
            return Err(parse_err(format!("expected {d} columns, found {}", record.len())));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(format!("column {}: {cell:?} is not a number", col + 1)))?;
            if !v.is_finite() || v < 0.0 {
                return Err(parse_err(format!(
                    "column {}: value {v} must be finite and non-negative",
                    col + 1
                )));
            }
            data.push(v);
        }
    }
    match dim {
        Some(d) if !data.is_empty() => Frames::new(d, data),
        _ => Err(Error::EmptyFile {
            path: path.to_path_buf(),
        }),
    }
}

/// Loads a `<label>.chroma.csv` file (12 columns) and, when present, the
/// companion `<label>.onset.csv` with the same number of lines.
pub fn load_feature_sequence(path: impl AsRef<Path>, hop_duration: f64) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let chroma = read_frames_csv(path, Some(CHROMA_DIM))?;
    let onset = match onset_companion(path) {
        Some(p) if p.exists() => {
            let onset = read_frames_csv(&p, None)?;
            if onset.len() != chroma.len() {
                return Err(Error::Invalid(format!(
                    "{}: {} onset frames but {} chroma frames",
                    p.display(),
                    onset.len(),
                    chroma.len()
                )));
            }
            Some(onset)
        }
        _ => None,
    };
    FeatureSequence::new(label_from_path(path), hop_duration, chroma, onset)
}

pub fn write_frames_csv(path: impl AsRef<Path>, frames: &Frames) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        for frame in frames.iter() {
            let mut first = true;
            for v in frame {
                if !first {
                    out.write_all(b",")?;
                }
                first = false;
                // `{}` on f64 prints the shortest representation that parses back exactly.
                write!(out, "{v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Writes `<dir>/<label>.chroma.csv` and, if the sequence has onsets,
/// `<dir>/<label>.onset.csv`. Returns the chroma path.
pub fn save_feature_sequence(dir: impl AsRef<Path>, seq: &FeatureSequence) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let chroma_path = dir.join(format!("{}{CHROMA_SUFFIX}", seq.label()));
    write_frames_csv(&chroma_path, seq.chroma())?;
    if let Some(onset) = seq.onset() {
        write_frames_csv(dir.join(format!("{}{ONSET_SUFFIX}", seq.label())), onset)?;
    }
    Ok(chroma_path)
}
