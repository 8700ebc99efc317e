use std::fs;
use std::io::Write;
use std::path::Path;

use super::experiments::{LearningCurve, ReconstructionTable, SubspaceTrajectory, SweepTable};
use crate::error::{Error, Result};
use crate::timeseries::format_f64;

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn invalid_data(msg: String) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io(path))?;
    f.write_all(body.as_bytes()).map_err(io(path))
}

/// File-name friendly form of a method label.
pub fn slug(label: &str) -> String {
    let mut s: String =
        label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    while s.ends_with('_') {
        s.pop();
    }
    s
}

pub fn curve_csv(curve: &LearningCurve) -> String {
    let mut out = String::from("step,mean_mse,std_mse\n");
    for ((s, m), d) in curve.steps.iter().zip(&curve.mean_mse).zip(&curve.std_mse) {
        out.push_str(&format!("{s},{},{}\n", format_f64(*m), format_f64(*d)));
    }
    out
}

pub fn final_csv(curves: &[LearningCurve]) -> String {
    let mut out = String::from("method,final_mean_mse,final_std_mse,mean_dimension\n");
    for c in curves {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.label,
            format_f64(c.final_mean()),
            format_f64(c.final_std()),
            format_f64(c.mean_size)
        ));
    }
    out
}

/// Writes `curve_<label>.csv` per method plus `final.csv`.
pub fn write_curves(dir: &Path, curves: &[LearningCurve]) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    for c in curves {
        write_file(&dir.join(format!("curve_{}.csv", slug(&c.label))), &curve_csv(c))?;
    }
    write_file(&dir.join("final.csv"), &final_csv(curves))
}

pub fn reconstruction_csv(table: &ReconstructionTable) -> String {
    let mut out = String::from("m,frobenius_mean,plain_frobenius_mean,trials\n");
    for i in 0..table.m.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            table.m[i],
            format_f64(table.frobenius_mean[i]),
            format_f64(table.plain_mean[i]),
            table.trials[i]
        ));
    }
    out
}

pub fn write_reconstruction(dir: &Path, table: &ReconstructionTable) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    write_file(&dir.join("reconstruction.csv"), &reconstruction_csv(table))
}

pub fn write_subspace(dir: &Path, traj: &SubspaceTrajectory) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut mean = String::from("update,mean_distance\n");
    for (k, d) in traj.mean_distance.iter().enumerate() {
        mean.push_str(&format!("{k},{}\n", format_f64(*d)));
    }
    write_file(&dir.join("subspace.csv"), &mean)?;
    let mut trials = String::from("trial,updates,initial_distance,final_distance\n");
    for (t, tr) in traj.per_trial.iter().enumerate() {
        trials.push_str(&format!("{t},{},{},{}\n", tr.len() - 1, format_f64(tr[0]), format_f64(*tr.last().unwrap())));
    }
    write_file(&dir.join("subspace_trials.csv"), &trials)
}

pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = format!("{},method,final_mean_mse,final_std_mse\n", table.param);
    for (v, row) in table.values.iter().zip(&table.rows) {
        for (label, (m, s)) in table.labels.iter().zip(row) {
            out.push_str(&format!("{v},{label},{},{}\n", format_f64(*m), format_f64(*s)));
        }
    }
    out
}

pub fn write_sweep(dir: &Path, table: &SweepTable) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    write_file(&dir.join("sweep.csv"), &sweep_csv(table))
}

/// Parsed `final.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalRow {
    pub method: String,
    pub mean: f64,
    pub std: f64,
    pub dimension: f64,
}

pub fn read_final_csv(path: &Path) -> Result<Vec<FinalRow>> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.starts_with("method,") => {}
        _ => return Err(invalid_data(format!("{}: not a final.csv file", path.display()))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| invalid_data(format!("{}:{}: bad number {s:?}", path.display(), i + 2)))
            };
            if f.len() != 4 {
                return Err(invalid_data(format!("{}:{}: expected 4 fields", path.display(), i + 2)));
            }
            Ok(FinalRow { method: f[0].into(), mean: num(f[1])?, std: num(f[2])?, dimension: num(f[3])? })
        })
        .collect()
}
