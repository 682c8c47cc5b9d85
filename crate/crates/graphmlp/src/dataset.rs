//! Dataset files: JSON lines and the packed little-endian "GPSE" format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use graphmlp_core::data::PoseSample;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GPSE";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One JSON object per line, 64-bit values.
    Jsonl,
    /// Packed binary, 32-bit values.
    Binary,
}

impl DatasetFormat {
    /// `.jsonl` / `.json` or `.bin` / `.gpse`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => Ok(DatasetFormat::Jsonl),
            Some("bin" | "gpse") => Ok(DatasetFormat::Binary),
            _ => Err(Error::Format(format!(
                "{}: cannot infer dataset format from extension (use .jsonl or .bin)",
                path.display()
            ))),
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "bin" => Ok(DatasetFormat::Binary),
            other => Err(Error::Config(format!("unknown dataset format '{other}' (jsonl|bin)"))),
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<PoseSample>> {
    let format = DatasetFormat::from_path(path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        DatasetFormat::Jsonl => read_jsonl(reader),
        DatasetFormat::Binary => read_binary(reader),
    }
    .map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes `samples` in `format`, or the format implied by the extension.
pub fn write_dataset(path: &Path, samples: &[PoseSample], format: Option<DatasetFormat>) -> Result<()> {
    let format = match format {
        Some(f) => f,
        None => DatasetFormat::from_path(path)?,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        DatasetFormat::Jsonl => write_jsonl(&mut w, samples),
        DatasetFormat::Binary => write_binary(&mut w, samples),
    }
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<W: Write>(w: &mut W, samples: &[PoseSample]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut *w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<PoseSample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: PoseSample = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        s.validate()
            .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_binary<W: Write>(w: &mut W, samples: &[PoseSample]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        let id = s.id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&(s.frames as u32).to_le_bytes())?;
        w.write_all(&(s.joints as u32).to_le_bytes())?;
        for v in s.pose2d.iter().chain(&s.pose3d) {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<R> {
    inner: R,
    sample: Option<u64>,
}

impl<R: Read> Cursor<R> {
    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            let at = match self.sample {
                Some(i) => format!("sample {i}: "),
                None => String::new(),
            };
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format(format!("{at}truncated while reading {what}"))
            } else {
                Error::Format(format!("{at}{what}: {e}"))
            }
        })
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0; 8];
        self.fill(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0; n * 4];
        self.fill(&mut bytes, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }
}

/// Reads the packed format. A zero-length input is an empty dataset.
pub fn read_binary<R: Read>(r: R) -> Result<Vec<PoseSample>> {
    let mut c = Cursor { inner: r, sample: None };
    let mut magic = [0u8; 4];
    match c.inner.read(&mut magic[..1]) {
        Ok(0) => return Ok(Vec::new()),
        Ok(_) => c.fill(&mut magic[1..], "magic")?,
        Err(e) => return Err(Error::Format(format!("magic: {e}"))),
    }
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"GPSE\"")));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version} (expected {VERSION})")));
    }
    let count = c.u64("sample count")?;
    let mut out = Vec::new();
    for i in 0..count {
        c.sample = Some(i);
        let id_len = c.u32("id length")? as usize;
        let mut id = vec![0; id_len];
        c.fill(&mut id, "id")?;
        let id = String::from_utf8(id).map_err(|_| Error::Format(format!("sample {i}: id is not UTF-8")))?;
        let frames = c.u32("frame count")? as usize;
        let joints = c.u32("joint count")? as usize;
        if frames == 0 || joints == 0 {
            return Err(Error::Format(format!("sample {i}: T and N must be >= 1")));
        }
        let pose2d = c.f32s(frames * joints * 2, "pose2d")?;
        let pose3d = c.f32s(joints * 3, "pose3d")?;
        out.push(PoseSample::new(id, frames, joints, pose2d, pose3d)?);
    }
    Ok(out)
}

/// Rounds every coordinate through `f32`, i.e. what a binary round trip
/// yields.
pub fn quantize_f32(s: &PoseSample) -> PoseSample {
    let q = |v: &Vec<f64>| v.iter().map(|&x| f64::from(x as f32)).collect();
    PoseSample {
        pose2d: q(&s.pose2d),
        pose3d: q(&s.pose3d),
        camera: None,
        ..s.clone()
    }
}
