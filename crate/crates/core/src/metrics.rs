//! Evaluation artifacts: learning curves, density colormaps and fundamental
//! diagram points, plus their file formats.
//!
//! * Curve CSV: `episode,mean,best,worst,se_mean,se_best,se_worst`.
//! * Diagram CSV: `n_agent,rho_bar,v_bar,se`.
//! * Density CSV: `group,y,x,occupancy`, and one 16-bit binary PGM (P5,
//!   big-endian, row-major) per group with pixel `round(65535·occ/max)`.
//!
//! Standard errors are the sample standard deviation across trials divided by
//! `√n_trials`. With a single trial they are reported as 0 and flagged.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{MapSpec, Pos};
use crate::error::{Error, Result};
use crate::runner::EpisodeRecord;

/// Mean signed speed per step.
pub fn average_velocity(mean_episode_reward: f64, t_max: usize) -> Result<f64> {
    if t_max == 0 {
        return Err(Error::invalid("t_max must be positive"));
    }
    Ok(mean_episode_reward / t_max as f64)
}

/// The same speed computed from net displacements along each agent's direction.
pub fn velocity_from_displacement(displacement: &[i64], t_max: usize) -> Result<f64> {
    if displacement.is_empty() {
        return Err(Error::invalid("no agents"));
    }
    let mean = displacement.iter().sum::<i64>() as f64 / displacement.len() as f64;
    average_velocity(mean, t_max)
}

/// Agents per walkable cell.
pub fn average_density(n_agent: usize, map: &MapSpec) -> Result<f64> {
    let walkable = map.walkable_count();
    if walkable == 0 {
        return Err(Error::invalid(format!("map `{}` has no walkable cell", map.name)));
    }
    Ok(n_agent as f64 / walkable as f64)
}

/// Mean, standard error and whether the error is degenerate (one sample).
pub fn mean_and_se(values: &[f64]) -> (f64, f64, bool) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0, true);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, true);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt(), false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean: f64,
    pub best: f64,
    pub worst: f64,
    pub se_mean: f64,
    pub se_best: f64,
    pub se_worst: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
    pub n_trials: usize,
    /// Set when some point rests on a single trial.
    pub degenerate_se: bool,
}

impl LearningCurve {
    /// Average per episode across trials. Episode `k` uses every trial that
    /// reached it.
    pub fn from_trials(trials: &[&[EpisodeRecord]]) -> Self {
        let longest = trials.iter().map(|t| t.len()).max().unwrap_or(0);
        let mut degenerate_se = false;
        let points = (0..longest)
            .map(|k| {
                let recs: Vec<&EpisodeRecord> = trials.iter().filter_map(|t| t.get(k)).collect();
                let col = |f: fn(&EpisodeRecord) -> f64| recs.iter().map(|r| f(r)).collect::<Vec<_>>();
                let (mean, se_mean, flag) = mean_and_se(&col(|r| r.mean));
                let (best, se_best, _) = mean_and_se(&col(|r| r.best));
                let (worst, se_worst, _) = mean_and_se(&col(|r| r.worst));
                degenerate_se |= flag;
                CurvePoint {
                    episode: recs[0].episode,
                    mean,
                    best,
                    worst,
                    se_mean,
                    se_best,
                    se_worst,
                }
            })
            .collect();
        LearningCurve {
            points,
            n_trials: trials.len(),
            degenerate_se,
        }
    }

    /// Every value divided by `t_max`: the per-step velocity variant.
    pub fn per_step(&self, t_max: usize) -> Result<Self> {
        let mut out = self.clone();
        for p in &mut out.points {
            for v in [
                &mut p.mean,
                &mut p.best,
                &mut p.worst,
                &mut p.se_mean,
                &mut p.se_best,
                &mut p.se_worst,
            ] {
                *v = average_velocity(*v, t_max)?;
            }
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.points, &CURVE_HEADER)
    }

    pub fn read_csv(path: &Path) -> Result<Vec<CurvePoint>> {
        read_rows(path)
    }
}

const CURVE_HEADER: [&str; 7] = ["episode", "mean", "best", "worst", "se_mean", "se_best", "se_worst"];
const DIAGRAM_HEADER: [&str; 4] = ["n_agent", "rho_bar", "v_bar", "se"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalPoint {
    pub n_agent: usize,
    pub rho_bar: f64,
    pub v_bar: f64,
    pub se: f64,
}

/// `v̄` over the inclusive 1-based episode window, averaged per trial and
/// then across trials.
pub fn fundamental_point(
    n_agent: usize,
    map: &MapSpec,
    trials: &[&[EpisodeRecord]],
    t_max: usize,
    episode_window: (usize, usize),
) -> Result<FundamentalPoint> {
    check_window("episode", episode_window)?;
    let mut per_trial = Vec::with_capacity(trials.len());
    for (i, records) in trials.iter().enumerate() {
        let in_window: Vec<f64> = records
            .iter()
            .filter(|r| (episode_window.0..=episode_window.1).contains(&r.episode))
            .map(|r| r.mean)
            .collect();
        if in_window.is_empty() {
            return Err(Error::invalid(format!(
                "trial {i} has no episodes in {}..={}",
                episode_window.0, episode_window.1
            )));
        }
        let mean = in_window.iter().sum::<f64>() / in_window.len() as f64;
        per_trial.push(average_velocity(mean, t_max)?);
    }
    if per_trial.is_empty() {
        return Err(Error::invalid("no trials"));
    }
    let (v_bar, se, _) = mean_and_se(&per_trial);
    Ok(FundamentalPoint {
        n_agent,
        rho_bar: average_density(n_agent, map)?,
        v_bar,
        se,
    })
}

pub fn write_diagram_csv(points: &[FundamentalPoint], path: &Path) -> Result<()> {
    write_rows(path, points, &DIAGRAM_HEADER)
}

pub fn read_diagram_csv(path: &Path) -> Result<Vec<FundamentalPoint>> {
    read_rows(path)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

fn check_window(what: &str, w: (usize, usize)) -> Result<()> {
    if w.0 > w.1 {
        return Err(Error::invalid(format!("empty {what} window {}..={}", w.0, w.1)));
    }
    Ok(())
}

/// Agent positions for every recorded step `0 ≤ t < t_len` of every episode.
///
/// Binary layout, little-endian: magic `ESNJ`, u32 version 1, u32 width,
/// u32 height, u32 t_len, u32 n_agent, n_agent group bytes, u32 episode
/// count, then per episode a u32 episode number followed by `t_len·n_agent`
/// u16 cell indices `y·width + x` (time-major, agents in id order).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub width: usize,
    pub height: usize,
    pub t_len: usize,
    pub groups: Vec<u8>,
    episodes: Vec<u32>,
    cells: Vec<u16>,
}

const TRAJ_MAGIC: &[u8; 4] = b"ESNJ";

impl TrajectoryLog {
    pub fn new(width: usize, height: usize, t_len: usize, groups: Vec<u8>) -> Result<Self> {
        if width * height > u16::MAX as usize + 1 {
            return Err(Error::invalid(format!(
                "{width}×{height} map is too large for trajectory logging"
            )));
        }
        Ok(TrajectoryLog {
            width,
            height,
            t_len,
            groups,
            episodes: Vec::new(),
            cells: Vec::new(),
        })
    }

    pub fn n_agent(&self) -> usize {
        self.groups.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.iter().map(|&g| g as usize + 1).max().unwrap_or(0)
    }

    pub fn episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn episode_numbers(&self) -> &[u32] {
        &self.episodes
    }

    fn frame_len(&self) -> usize {
        self.t_len * self.n_agent()
    }

    /// `frames` holds `t_len` snapshots of all agents, time-major.
    pub fn push_episode(&mut self, episode: usize, frames: Vec<Pos>) -> Result<()> {
        if frames.len() != self.frame_len() {
            return Err(Error::invalid(format!(
                "expected {} positions, got {}",
                self.frame_len(),
                frames.len()
            )));
        }
        self.episodes.push(episode as u32);
        self.cells
            .extend(frames.iter().map(|p| (p.y * self.width + p.x) as u16));
        Ok(())
    }

    /// Cells of all agents at step `t` of the `k`-th stored episode.
    pub fn frame(&self, k: usize, t: usize) -> &[u16] {
        let n = self.n_agent();
        let start = k * self.frame_len() + t * n;
        &self.cells[start..start + n]
    }

    /// Keep only episodes numbered `≤ last`.
    pub fn truncated(mut self, last: usize) -> Self {
        let keep = self.episodes.iter().take_while(|&&e| e as usize <= last).count();
        self.episodes.truncate(keep);
        self.cells.truncate(keep * self.frame_len());
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.cells.len() * 2);
        out.extend_from_slice(TRAJ_MAGIC);
        for v in [1, self.width, self.height, self.t_len, self.n_agent()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.groups);
        out.extend_from_slice(&(self.episodes.len() as u32).to_le_bytes());
        for (k, &e) in self.episodes.iter().enumerate() {
            out.extend_from_slice(&e.to_le_bytes());
            for &c in &self.cells[k * self.frame_len()..(k + 1) * self.frame_len()] {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::invalid("malformed trajectory log");
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(bad)?;
            pos += n;
            Ok(s)
        };
        if take(4)? != TRAJ_MAGIC {
            return Err(bad());
        }
        let mut u32s = [0usize; 5];
        for v in &mut u32s {
            *v = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        }
        let [version, width, height, t_len, n_agent] = u32s;
        if version != 1 {
            return Err(Error::invalid(format!("unsupported trajectory log version {version}")));
        }
        let groups = take(n_agent)?.to_vec();
        let mut log = TrajectoryLog::new(width, height, t_len, groups)?;
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let frame = log.frame_len();
        for _ in 0..count {
            log.episodes.push(u32::from_le_bytes(take(4)?.try_into().unwrap()));
            let raw = take(frame * 2)?;
            log.cells
                .extend(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])));
        }
        if take(1).is_ok() {
            return Err(bad());
        }
        if log.cells.iter().any(|&c| c as usize >= width * height) {
            return Err(bad());
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::Format {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }
}

/// Mean occupancy per cell and group over a window of steps and episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub width: usize,
    pub height: usize,
    /// `occupancy[g][y·width + x]`.
    pub occupancy: Vec<Vec<f64>>,
    pub samples: usize,
    pub time_window: (usize, usize),
    pub episode_window: (usize, usize),
}

/// Average the indicator "an agent of group g is at this cell" over every
/// `(t, episode)` with `t` and the 1-based episode number inside the inclusive
/// windows, pooling all logs (trials).
pub fn accumulate_density(
    logs: &[&TrajectoryLog],
    time_window: (usize, usize),
    episode_window: (usize, usize),
) -> Result<DensityMap> {
    check_window("time", time_window)?;
    check_window("episode", episode_window)?;
    let first = logs.first().ok_or_else(|| Error::invalid("no trajectory logs"))?;
    let (width, height) = (first.width, first.height);
    if logs
        .iter()
        .any(|l| l.width != width || l.height != height || l.groups != first.groups)
    {
        return Err(Error::invalid("trajectory logs disagree on map or agents"));
    }
    if time_window.1 >= first.t_len {
        return Err(Error::invalid(format!(
            "time window ends at {} but only steps 0..{} were recorded",
            time_window.1, first.t_len
        )));
    }
    let mut occupancy = vec![vec![0.0; width * height]; first.n_groups()];
    let mut samples = 0usize;
    for log in logs {
        for (k, &e) in log.episodes.iter().enumerate() {
            if !(episode_window.0..=episode_window.1).contains(&(e as usize)) {
                continue;
            }
            for t in time_window.0..=time_window.1 {
                for (&cell, &g) in log.frame(k, t).iter().zip(&log.groups) {
                    occupancy[g as usize][cell as usize] += 1.0;
                }
                samples += 1;
            }
        }
    }
    if samples == 0 {
        return Err(Error::invalid(format!(
            "no recorded episodes in {}..={}",
            episode_window.0, episode_window.1
        )));
    }
    for g in &mut occupancy {
        for v in g.iter_mut() {
            *v /= samples as f64;
        }
    }
    Ok(DensityMap {
        width,
        height,
        occupancy,
        samples,
        time_window,
        episode_window,
    })
}

impl DensityMap {
    pub fn group_total(&self, g: usize) -> f64 {
        self.occupancy[g].iter().sum()
    }

    /// 16-bit pixels, `round(65535·occ/max)`; all zero for an empty group.
    pub fn pixels(&self, g: usize) -> Vec<u16> {
        let max = self.occupancy[g].iter().copied().fold(0.0, f64::max);
        self.occupancy[g]
            .iter()
            .map(|&v| if max > 0.0 { (65535.0 * v / max).round() as u16 } else { 0 })
            .collect()
    }

    /// Per-row occupancy of group `g` (summed over columns).
    pub fn row_profile(&self, g: usize) -> Vec<f64> {
        self.occupancy[g].chunks(self.width).map(|r| r.iter().sum()).collect()
    }

    /// Writes `<stem>.csv` and `<stem>_g<k>.pgm` for each group.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
        w.write_record(["group", "y", "x", "occupancy"]).map_err(|e| csv_error(&csv_path, e))?;
        for (g, occ) in self.occupancy.iter().enumerate() {
            for (i, v) in occ.iter().enumerate() {
                let (y, x) = (i / self.width, i % self.width);
                w.serialize((g, y, x, v)).map_err(|e| csv_error(&csv_path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        let mut paths = vec![csv_path];
        for g in 0..self.occupancy.len() {
            let p = dir.join(format!("{stem}_g{g}.pgm"));
            write_pgm16(&p, self.width, self.height, &self.pixels(g))?;
            paths.push(p);
        }
        Ok(paths)
    }

    /// Occupancy values back from a density CSV.
    pub fn read_csv(path: &Path) -> Result<Vec<(usize, usize, usize, f64)>> {
        read_rows(path)
    }
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, pixels: &[u16]) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &p in pixels {
        out.extend_from_slice(&p.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Width, height and pixels of a 16-bit P5 file written by [`write_pgm16`].
pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Format {
        path: path.to_owned(),
        message: m.to_owned(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(bad("not a 16-bit P5 image"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let data = bytes.get(pos..).ok_or_else(|| bad("missing pixel data"))?;
    if data.len() != w * h * 2 {
        return Err(bad("pixel data length mismatch"));
    }
    let px = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, px))
}

/// Provenance written next to every metrics artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSidecar {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_window: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode_window: Option<(usize, usize)>,
    pub seeds: Vec<u64>,
    pub config_hashes: Vec<String>,
    pub n_trials: usize,
    pub degenerate_se: bool,
    pub files: Vec<PathBuf>,
}

impl MetricsSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}
