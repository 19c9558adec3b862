//! Per-tick closed-loop log and its CSV / JSON-lines writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::SolveStatus;

/// One tick of plant truth, errors, commands and controller diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub ax: f64,
    pub ay: f64,
    pub delta: f64,
    pub omega: f64,
    pub s: f64,
    /// Distance travelled along the centerline since the start.
    pub progress: f64,
    pub e_y: f64,
    pub e_psi_deg: f64,
    pub bound: f64,
    pub delta_cmd: f64,
    pub d_cmd: f64,
    pub throttle: f64,
    pub brake: f64,
    pub gear: usize,
    pub rpm: f64,
    pub fz_fl: f64,
    pub fz_fr: f64,
    pub fz_rl: f64,
    pub fz_rr: f64,
    pub slip_rl: f64,
    pub slip_rr: f64,
    pub m_diff: f64,
    pub v_profile: f64,
    pub v_plan: f64,
    pub v_low_ref: f64,
    pub a_low_ref: f64,
    pub mpc_solved: bool,
    pub mpc_status: Option<SolveStatus>,
    pub mpc_cost: f64,
    pub mpc_iterations: usize,
    /// Wall-clock solve time; zero unless timing is recorded.
    pub mpc_time: f64,
    pub mpc_failed: bool,
    pub lmpc_softened: bool,
    pub lowlevel_saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Termination {
    Completed,
    TimeLimit,
    OffTrack {
        t: f64,
        n: f64,
        bound: f64,
    },
    /// The car could not be projected onto the track.
    Lost {
        t: f64,
    },
    NonFinite {
        t: f64,
    },
}

impl Termination {
    pub fn is_failure(&self) -> bool {
        matches!(
            self,
            Termination::OffTrack { .. } | Termination::Lost { .. } | Termination::NonFinite { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub tick: f64,
    pub records: Vec<TelemetryRecord>,
    pub termination: Termination,
}

impl Telemetry {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path, tick: f64) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let records = rd
            .deserialize()
            .collect::<std::result::Result<Vec<TelemetryRecord>, _>>()?;
        Ok(Self {
            tick,
            records,
            termination: Termination::Completed,
        })
    }
}

/// Streams records to a JSON-lines file from a writer thread. The queue is
/// bounded; a full queue blocks the sender until the writer catches up.
pub struct TelemetrySink {
    tx: Option<SyncSender<TelemetryRecord>>,
    handle: Option<JoinHandle<Result<usize>>>,
}

impl TelemetrySink {
    pub fn jsonl(path: &Path, bound: usize) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let (tx, rx) = sync_channel(bound.max(1));
        let path = path.to_path_buf();
        let handle = std::thread::spawn(move || write_loop(rx, BufWriter::new(f), path));
        Ok(Self {
            tx: Some(tx),
            handle: Some(handle),
        })
    }

    pub fn send(&self, rec: &TelemetryRecord) {
        if let Some(tx) = &self.tx {
            // a dead writer surfaces its error on finish()
            let _ = tx.send(*rec);
        }
    }

    /// Closes the queue and returns the number of records written.
    pub fn finish(mut self) -> Result<usize> {
        self.tx.take();
        match self.handle.take().map(|h| h.join()) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(Error::Validation("telemetry writer panicked".into())),
            None => Ok(0),
        }
    }
}

impl Drop for TelemetrySink {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn write_loop(
    rx: Receiver<TelemetryRecord>,
    mut w: BufWriter<File>,
    path: PathBuf,
) -> Result<usize> {
    let mut count = 0;
    for rec in rx {
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        count += 1;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(count)
}
