//! Plot-ready CSV and JSON artifacts. Values are written in SI with 17
//! significant digits; every file goes through a temporary sibling and an
//! atomic rename.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::effective::EffectiveTrajectory;
use crate::fulldyn::Trajectory;
use crate::model::{Scales, Vec2};

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

/// `t, x, y, px, py, re_psi_1, im_psi_1, ..., energy, norm, I_1..I_N`.
/// Actions are `NaN` where the eigenbasis was undefined.
pub fn trajectory_csv(traj: &Trajectory, scales: &Scales) -> String {
    let n = traj.samples.first().map_or(0, |s| s.psi.dim());
    let mut out = String::from("t,x,y,px,py");
    for j in 1..=n {
        let _ = write!(out, ",re_psi_{j},im_psi_{j}");
    }
    out.push_str(",energy,norm");
    for j in 1..=n {
        let _ = write!(out, ",I_{j}");
    }
    out.push('\n');
    for (s, d) in traj.samples.iter().zip(&traj.diagnostics) {
        let mut row = vec![
            s.t * scales.time,
            s.q.x * scales.length,
            s.q.y * scales.length,
            s.p.x * scales.momentum,
            s.p.y * scales.momentum,
        ];
        for z in s.psi.amps() {
            row.push(z.re);
            row.push(z.im);
        }
        row.push(d.energy * scales.energy);
        row.push(d.norm);
        match &d.actions {
            Some(a) => row.extend(a.iter().map(|i| i * scales.action)),
            None => row.extend(std::iter::repeat_n(f64::NAN, n)),
        }
        push_row(&mut out, row);
    }
    out
}

/// `t, x, y, px, py, energy` with kinetic momentum `M v`.
pub fn effective_csv(traj: &EffectiveTrajectory, mass: f64, scales: &Scales) -> String {
    let mut out = String::from("t,x,y,px,py,energy\n");
    for (s, e) in traj.samples.iter().zip(&traj.energies) {
        push_row(
            &mut out,
            [
                s.t * scales.time,
                s.q.x * scales.length,
                s.q.y * scales.length,
                mass * s.v.x * scales.momentum,
                mass * s.v.y * scales.momentum,
                e * scales.energy,
            ],
        );
    }
    out
}

/// `x, y, B_curvature`.
pub fn curvature_grid_csv(points: &[(Vec2, f64)], scales: &Scales) -> String {
    let mut out = String::from("x,y,B_curvature\n");
    for (q, b) in points {
        push_row(&mut out, [q.x * scales.length, q.y * scales.length, b * scales.curvature]);
    }
    out
}

/// Loop phase against the solid-angle prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    /// m
    pub loop_radius: f64,
    pub band: String,
    pub phase: f64,
    pub solid_angle_prediction: f64,
    pub difference: f64,
}

/// Numeric table under a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        push_row(&mut out, r.iter().copied());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fulldyn::{SampleDiagnostics, StepStats};
    use crate::fulldyn::HybridState;
    use crate::{QuantumState, C64};

    #[test]
    fn trajectory_columns_and_precision() {
        let psi = QuantumState::new(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let s = HybridState::new(psi, Vec2::new(1.0 / 3.0, 0.0), Vec2::ZERO, 0.0);
        let traj = Trajectory {
            samples: vec![s],
            diagnostics: vec![SampleDiagnostics { energy: -1.0, norm: 1.0, actions: None }],
            stats: StepStats::default(),
        };
        let csv = trajectory_csv(&traj, &Scales::identity());
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,x,y,px,py,re_psi_1,im_psi_1,re_psi_2,im_psi_2,energy,norm,I_1,I_2"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 13);
        assert_eq!(row[1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(row[11], "NaN");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.json");
        write_json(&path, &vec![1, 2]).unwrap();
        write_json(&path, &vec![3]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(serde_json::from_str::<Vec<i32>>(&text).unwrap(), vec![3]);
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
