//! CSV, JSON and binary path files, and the run manifest.
//!
//! Binary path frame, all little-endian: `u32 d`, `u64 n_times`, then
//! `n_times` rows of `1 + d` `f64` values `(t, x_1, …, x_d)`. A path file is
//! a sequence of frames, one per path, in path-index order.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use feller_core::{ConditionProfile, DiagnosticReport, GrowthTable, PathSample};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, LabError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Collects output files under one directory and records them for the manifest.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, LabError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, LabError> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, LabError> {
        let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }
}

/// `x, mass, stderr` rows for one radius; infinite masses are written as `inf`.
pub fn profile_csv(p: &ConditionProfile) -> String {
    let mut s = String::from("x,mass,stderr\n");
    for pt in &p.points {
        let x = pt.x.first().copied().unwrap_or(f64::NAN);
        let m = pt.mass.map_or("inf".to_string(), |m| format!("{m:e}"));
        let _ = writeln!(s, "{x:e},{m},{:e}", pt.stderr);
    }
    s
}

pub fn growth_csv(g: &GrowthTable) -> String {
    let mut s = String::from("r,sup_abs_q\n");
    for row in &g.rows {
        let _ = writeln!(s, "{:e},{:e}", row.r, row.sup_abs_q);
    }
    s
}

/// `path_id, t, x_1, …` rows.
pub fn paths_csv(paths: &[PathSample]) -> String {
    let d = paths.first().map_or(1, |p| p.dim);
    let mut s = String::from("path_id,t");
    for i in 1..=d {
        let _ = write!(s, ",x{i}");
    }
    s.push('\n');
    for p in paths {
        for (i, t) in p.times.iter().enumerate() {
            let _ = write!(s, "{},{t:e}", p.path_index);
            for v in p.state(i) {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
    }
    s
}

pub fn jumps_csv(paths: &[PathSample]) -> String {
    let d = paths.first().map_or(1, |p| p.dim);
    let k = paths.iter().find_map(|p| p.jump_log.first()).map_or(1, |j| j.jump.len());
    let mut s = String::from("path_id,time,large");
    for i in 1..=k {
        let _ = write!(s, ",c{i}");
    }
    for i in 1..=d {
        let _ = write!(s, ",before{i}");
    }
    for i in 1..=d {
        let _ = write!(s, ",after{i}");
    }
    s.push('\n');
    for p in paths {
        for j in &p.jump_log {
            let _ = write!(s, "{},{:e},{}", p.path_index, j.time, j.large as u8);
            for v in j.jump.iter().chain(&j.state_before).chain(&j.state_after) {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
    }
    s
}

pub fn decay_csv(r: &DiagnosticReport) -> String {
    let mut s = String::from("x,t,mean,stderr,smoothed_mean,smoothed_stderr\n");
    for row in &r.rows {
        let (sm, se) = row.smoothed.map_or((f64::NAN, f64::NAN), |e| (e.mean, e.stderr));
        let x = row.x.first().copied().unwrap_or(f64::NAN);
        let _ = writeln!(s, "{x:e},{:e},{:e},{:e},{sm:e},{se:e}", row.t, row.estimate.mean, row.estimate.stderr);
    }
    s
}

pub fn write_frame<W: Write>(w: &mut W, p: &PathSample) -> io::Result<()> {
    w.write_all(&(p.dim as u32).to_le_bytes())?;
    w.write_all(&(p.times.len() as u64).to_le_bytes())?;
    for (i, t) in p.times.iter().enumerate() {
        w.write_all(&t.to_le_bytes())?;
        for v in p.state(i) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// One decoded frame: `rows[i] = (t, x…)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_frames<R: Read>(mut r: R) -> io::Result<Vec<Frame>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut out = Vec::new();
    let mut at = 0usize;
    let bad = || io::Error::new(io::ErrorKind::InvalidData, "truncated path frame");
    let take = |n: usize, at: &mut usize| -> io::Result<&[u8]> {
        let s = bytes.get(*at..*at + n).ok_or_else(bad)?;
        *at += n;
        Ok(s)
    };
    while at < bytes.len() {
        let d = u32::from_le_bytes(take(4, &mut at)?.try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(take(8, &mut at)?.try_into().unwrap()) as usize;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row = Vec::with_capacity(d + 1);
            for _ in 0..=d {
                row.push(f64::from_le_bytes(take(8, &mut at)?.try_into().unwrap()));
            }
            rows.push(row);
        }
        out.push(Frame { dim: d, rows });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_label: Option<String>,
    /// SHA-256 of the scenario JSON after overrides.
    pub scenario_hash: Option<String>,
    pub config_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

impl RunManifest {
    pub fn outputs_from(paths: &[PathBuf]) -> Result<Vec<OutputEntry>, LabError> {
        paths
            .iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
                Ok(OutputEntry { path: p.display().to_string(), sha256: sha256_hex(&bytes) })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_round_trip() {
        let p = PathSample {
            path_index: 3,
            seed: 1,
            times: vec![0.0, 0.5, 1.0],
            states: vec![1.0, -2.0, 1.5, -2.5, 2.0, 3.0],
            dim: 2,
            jump_log: Vec::new(),
            exploded: false,
        };
        let mut buf = Vec::new();
        write_frame(&mut buf, &p).unwrap();
        write_frame(&mut buf, &p).unwrap();
        assert_eq!(buf.len(), 2 * (4 + 8 + 3 * 3 * 8));
        assert_eq!(&buf[..4], &2u32.to_le_bytes());
        let frames = read_frames(&buf[..]).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].rows[1], vec![0.5, 1.5, -2.5]);
        assert!(read_frames(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn csv_headers() {
        let p = PathSample {
            path_index: 0,
            seed: 0,
            times: vec![0.0],
            states: vec![1.0],
            dim: 1,
            jump_log: Vec::new(),
            exploded: false,
        };
        assert_eq!(paths_csv(&[p.clone()]), "path_id,t,x1\n0,0e0,1e0\n");
        assert!(jumps_csv(&[p]).starts_with("path_id,time,large,c1,before1,after1\n"));
    }
}
