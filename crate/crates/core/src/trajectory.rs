//! Snapshot sequences and their binary file format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "C1DTRAJ\0"
//! version    u32
//! header_len u64
//! header     header_len bytes of JSON: config echo, mesh and field layout
//! records    per snapshot: t, dt, u[n], v[n+1], theta[n], z[n] as f64
//! ```
//!
//! A sidecar `<file>.idx` holds the byte offset of every record as `u64`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::TrajectoryIoError;
use crate::grid::{Mesh, State};

pub const MAGIC: &[u8; 8] = b"C1DTRAJ\0";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: RunConfig,
    pub mesh: Mesh,
    pub snapshots: Vec<State>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layout {
    n_cells: usize,
    n_nodes: usize,
    fields: Vec<String>,
    record_bytes: usize,
    snapshots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    config: RunConfig,
    layout: Layout,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.snapshots.last().expect("a trajectory holds at least the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Largest accepted step size over the run.
    pub fn max_dt(&self) -> f64 {
        self.snapshots.iter().map(|s| s.dt).fold(0.0, f64::max)
    }

    /// Largest gap between consecutive snapshots.
    pub fn max_gap(&self) -> f64 {
        self.snapshots
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .fold(0.0, f64::max)
    }

    fn record_bytes(&self) -> usize {
        8 * (2 + 4 * self.mesh.n() + 1)
    }

    /// Serialized file contents and the record offsets.
    pub fn to_bytes(&self) -> Result<(Vec<u8>, Vec<u64>), TrajectoryIoError> {
        let header = Header {
            schema_version: SCHEMA_VERSION,
            config: self.config.clone(),
            layout: Layout {
                n_cells: self.mesh.n(),
                n_nodes: self.mesh.n() + 1,
                fields: ["t", "dt", "u", "v", "theta", "z"].map(String::from).to_vec(),
                record_bytes: self.record_bytes(),
                snapshots: self.snapshots.len(),
            },
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + self.snapshots.len() * self.record_bytes());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut offsets = Vec::with_capacity(self.snapshots.len());
        for s in &self.snapshots {
            s.check_shape(&self.mesh)
                .map_err(|e| TrajectoryIoError::Format(e.to_string()))?;
            offsets.push(out.len() as u64);
            for x in [s.t, s.dt]
                .iter()
                .chain(&s.u)
                .chain(&s.v)
                .chain(&s.theta)
                .chain(&s.z)
            {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok((out, offsets))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrajectoryIoError> {
        let bad = |m: &str| TrajectoryIoError::Format(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != SCHEMA_VERSION {
            return Err(TrajectoryIoError::Format(format!(
                "unsupported schema version {version}"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mesh = header
            .config
            .mesh()
            .map_err(|e| TrajectoryIoError::Format(e.to_string()))?;
        let n = mesh.n();
        let record = 8 * (4 * n + 3);
        if header.layout.n_cells != n || header.layout.record_bytes != record {
            return Err(bad("layout does not match the configured mesh"));
        }
        let data = &bytes[20 + len..];
        if data.len() != record * header.layout.snapshots {
            return Err(TrajectoryIoError::Format(format!(
                "expected {} snapshot records of {record} bytes, found {} bytes",
                header.layout.snapshots,
                data.len()
            )));
        }
        let snapshots = data
            .chunks_exact(record)
            .map(|rec| {
                let vals: Vec<f64> = rec
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                let (u, rest) = vals[2..].split_at(n);
                let (v, rest) = rest.split_at(n + 1);
                let (theta, z) = rest.split_at(n);
                State {
                    t: vals[0],
                    dt: vals[1],
                    u: u.to_vec(),
                    v: v.to_vec(),
                    theta: theta.to_vec(),
                    z: z.to_vec(),
                }
            })
            .collect();
        Ok(Self {
            config: header.config,
            mesh,
            snapshots,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), TrajectoryIoError> {
        let (bytes, offsets) = self.to_bytes()?;
        std::fs::File::create(path)?.write_all(&bytes)?;
        let idx: Vec<u8> = offsets.iter().flat_map(|o| o.to_le_bytes()).collect();
        std::fs::File::create(index_path(path))?.write_all(&idx)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, TrajectoryIoError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

pub fn index_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".idx");
    PathBuf::from(p)
}

/// Read a single snapshot through the sidecar index without loading the rest.
pub fn read_snapshot(path: &Path, index: usize) -> Result<State, TrajectoryIoError> {
    use std::io::{Seek, SeekFrom};
    let idx = std::fs::read(index_path(path))?;
    let offset = idx
        .chunks_exact(8)
        .nth(index)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| TrajectoryIoError::Format(format!("no snapshot {index}")))?;
    let mut file = std::fs::File::open(path)?;
    let mut head = [0u8; 20];
    file.read_exact(&mut head)?;
    let len = u64::from_le_bytes(head[12..20].try_into().unwrap()) as usize;
    let mut json = vec![0u8; len];
    file.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let n = header.layout.n_cells;
    let mut rec = vec![0u8; header.layout.record_bytes];
    file.seek(SeekFrom::Start(offset))?;
    file.read_exact(&mut rec)?;
    let vals: Vec<f64> = rec
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(State {
        t: vals[0],
        dt: vals[1],
        u: vals[2..2 + n].to_vec(),
        v: vals[2 + n..3 + 2 * n].to_vec(),
        theta: vals[3 + 2 * n..3 + 3 * n].to_vec(),
        z: vals[3 + 3 * n..3 + 4 * n].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scenario;

    fn sample() -> Trajectory {
        let mut cfg = RunConfig::scenario(Scenario::HotSpot);
        cfg.mesh.n = 64;
        cfg.mesh.half_length = 16.0;
        cfg.initial.theta_radius = Some(3.0);
        let mesh = cfg.mesh().unwrap();
        let s0 = cfg.initial_state(&mesh).unwrap();
        let mut s1 = s0.clone();
        s1.t = 0.1 + 0.2; // not exactly representable
        s1.dt = 1.0 / 3.0;
        s1.v[5] = -1e-300;
        Trajectory {
            config: cfg,
            mesh,
            snapshots: vec![s0, s1],
        }
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.traj");
        let p2 = dir.path().join("b.traj");
        let t = sample();
        t.write(&p1).unwrap();
        let back = Trajectory::read(&p1).unwrap();
        assert_eq!(back, t);
        back.write(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(std::fs::read(index_path(&p1)).unwrap(), std::fs::read(index_path(&p2)).unwrap());
    }

    #[test]
    fn index_gives_random_access() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.traj");
        let t = sample();
        t.write(&p).unwrap();
        assert_eq!(read_snapshot(&p, 1).unwrap(), t.snapshots[1]);
        assert!(read_snapshot(&p, 2).is_err());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (bytes, _) = sample().to_bytes().unwrap();
        assert!(Trajectory::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Trajectory::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[8] = 9;
        assert!(Trajectory::from_bytes(&bad).is_err());
    }
}
