//! Stage orchestration: each stage reads its inputs from and writes its
//! outputs to a run directory.
//!
//! | stage      | reads                              | writes                                   |
//! |------------|------------------------------------|------------------------------------------|
//! | `fom`      |                                    | `snapshots.podns`                        |
//! | `pod`      | snapshots                          | `basis_{v,p}.podns`, `eigenvalues_{v,p}.csv` |
//! | `rom`      | snapshots, velocity basis          | `rom.podns`, `rom.csv`                   |
//! | `pressure` | snapshots, both bases, ROM         | `pressure_{se,sm}_r{r}.podns` and `.csv` |
//! | `errors`   | everything above                   | `errors.csv`, `qoi.csv` (cylinder)       |
//! | `report`   | every `errors.csv` below a directory | `convergence.csv`                      |
//! | `sweep`    | configuration only                 | one run directory per grid point, then the report |

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ProblemId, Rank, RunConfig};
use crate::container::{load, save};
use crate::error::{Error, Result};
use crate::fe_space::THSpace;
use crate::fom::{run_fom, SnapshotSet};
use crate::metrics::{compute_errors, cylinder_qoi, empirical_order, force_coefficients, CylinderQoi, Reference, Series};
use crate::pod::{build_pressure_pod_input, build_velocity_pod_input, compute_pod, write_spectrum_csv, PodBasis};
use crate::rom::{
    precompute_reduced_operators, run_pressure_rom, run_rom, tau_from_diameters, PressureMethod, PressureRecovery,
    PressureTrajectory, ReducedOperators, RomConfig, RomTrajectory, SeSystem, SmSystem,
};

pub const SNAPSHOTS: &str = "snapshots.podns";
pub const BASIS_V: &str = "basis_v.podns";
pub const BASIS_P: &str = "basis_p.podns";
pub const ROM: &str = "rom.podns";
pub const ERRORS: &str = "errors.csv";
pub const QOI: &str = "qoi.csv";
pub const CONVERGENCE: &str = "convergence.csv";

pub fn pressure_file(method: PressureMethod, r: usize) -> String {
    format!("pressure_{method}_r{r}.podns")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fom,
    Pod,
    Rom,
    Pressure,
    Errors,
    Report,
    Sweep,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Fom, Stage::Pod, Stage::Rom, Stage::Pressure, Stage::Errors, Stage::Report, Stage::Sweep];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Fom => "fom",
            Stage::Pod => "pod",
            Stage::Rom => "rom",
            Stage::Pressure => "pressure",
            Stage::Errors => "errors",
            Stage::Report => "report",
            Stage::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage `{s}`")))
    }
}

/// One line of `errors.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub problem: ProblemId,
    pub level: usize,
    pub h: f64,
    pub nu: f64,
    pub mu: f64,
    /// `fom` or `rom`.
    pub model: String,
    pub method: Option<PressureMethod>,
    /// Requested pressure rank, `all` or a number.
    pub rank: String,
    pub r_v: usize,
    pub r_p: usize,
    pub d_v: usize,
    pub d_p: usize,
    pub velocity_l2l2: Option<f64>,
    pub divergence_l2l2: Option<f64>,
    pub pressure_l2l2: Option<f64>,
    pub pressure_h1k: Option<f64>,
    pub remaining_fraction: Option<f64>,
    pub mean_correction: f64,
}

const ERROR_HEADER: &str = "problem,level,h,nu,mu,model,method,rank,r_v,r_p,d_v,d_p,velocity_l2l2,divergence_l2l2,\
pressure_l2l2,pressure_h1k,remaining_fraction,mean_correction";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl ErrorRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.problem,
            self.level,
            self.h,
            self.nu,
            self.mu,
            self.model,
            self.method.map_or("", PressureMethod::as_str),
            self.rank,
            self.r_v,
            self.r_p,
            self.d_v,
            self.d_p,
            opt(self.velocity_l2l2),
            opt(self.divergence_l2l2),
            opt(self.pressure_l2l2),
            opt(self.pressure_h1k),
            opt(self.remaining_fraction),
            self.mean_correction,
        )
    }

    fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 18 {
            return Err(Error::Format(format!("errors.csv row with {} fields", f.len())));
        }
        let bad = |what: &str| Error::Format(format!("errors.csv: bad {what}"));
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(what));
        let optn = |s: &str, what: &str| if s.is_empty() { Ok(None) } else { num(s, what).map(Some) };
        Ok(Self {
            problem: f[0].parse()?,
            level: int(f[1], "level")?,
            h: num(f[2], "h")?,
            nu: num(f[3], "nu")?,
            mu: num(f[4], "mu")?,
            model: f[5].to_string(),
            method: if f[6].is_empty() { None } else { Some(f[6].parse()?) },
            rank: f[7].to_string(),
            r_v: int(f[8], "r_v")?,
            r_p: int(f[9], "r_p")?,
            d_v: int(f[10], "d_v")?,
            d_p: int(f[11], "d_p")?,
            velocity_l2l2: optn(f[12], "velocity error")?,
            divergence_l2l2: optn(f[13], "divergence error")?,
            pressure_l2l2: optn(f[14], "pressure error")?,
            pressure_h1k: optn(f[15], "h1k error")?,
            remaining_fraction: optn(f[16], "remaining fraction")?,
            mean_correction: num(f[17], "mean correction")?,
        })
    }
}

pub fn write_error_rows(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{ERROR_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_error_rows(path: &Path) -> Result<Vec<ErrorRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(ERROR_HEADER) {
        return Err(Error::Format(format!("{} does not start with the errors header", path.display())));
    }
    lines.filter(|l| !l.is_empty()).map(ErrorRow::from_csv).collect()
}

/// Cylinder quantities of one model, a line of `qoi.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QoiRow {
    pub level: usize,
    pub model: String,
    pub method: Option<PressureMethod>,
    pub qoi: CylinderQoi,
}

fn write_qoi_rows(path: &Path, rows: &[QoiRow]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "level,model,method,strouhal,period,max_drag,max_lift,delta_p,periods")?;
    for r in rows {
        let q = &r.qoi;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.level,
            r.model,
            r.method.map_or("", PressureMethod::as_str),
            q.strouhal,
            q.period,
            q.max_drag,
            q.max_lift,
            q.delta_p,
            q.periods.len()
        )?;
    }
    w.flush()
}

fn write_csv_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// A run directory bound to a configuration and its finite element space.
pub struct Run {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub space: THSpace,
}

impl Run {
    pub fn new(cfg: RunConfig, dir: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let space = cfg.problem.space(cfg.level)?;
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { cfg, dir, space })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn fingerprint(&self) -> u64 {
        self.space.mesh().fingerprint()
    }

    pub fn fom(&self) -> Result<SnapshotSet> {
        let set = run_fom(&self.cfg.fom, self.cfg.problem.problem(), &self.space)?;
        save(&self.path(SNAPSHOTS), &set, self.fingerprint())?;
        Ok(set)
    }

    pub fn load_snapshots(&self) -> Result<SnapshotSet> {
        let set: SnapshotSet = load(&self.path(SNAPSHOTS), Some(self.fingerprint()))?;
        set.check_space(&self.space)?;
        if set.config != self.cfg.fom {
            return Err(Error::InvalidConfig(format!(
                "{} was computed with a different full order configuration",
                self.path(SNAPSHOTS).display()
            )));
        }
        Ok(set)
    }

    /// Velocity and pressure bases.
    pub fn pod(&self, set: &SnapshotSet) -> Result<(PodBasis, PodBasis)> {
        let p = &self.cfg.pod;
        let mut vin = build_velocity_pod_input(set, p.tau, self.cfg.problem.mean_in_generators())?;
        vin.inner_product = p.inner_product;
        let vb = compute_pod(&vin, &self.space, p.cutoff)?;
        let pb = compute_pod(&build_pressure_pod_input(set, true)?, &self.space, p.cutoff)?;
        save(&self.path(BASIS_V), &vb, self.fingerprint())?;
        save(&self.path(BASIS_P), &pb, self.fingerprint())?;
        write_csv_file(&self.path("eigenvalues_v.csv"), |w| write_spectrum_csv(&vb, w))?;
        write_csv_file(&self.path("eigenvalues_p.csv"), |w| write_spectrum_csv(&pb, w))?;
        Ok((vb, pb))
    }

    pub fn load_bases(&self) -> Result<(PodBasis, PodBasis)> {
        let fp = Some(self.fingerprint());
        Ok((load(&self.path(BASIS_V), fp)?, load(&self.path(BASIS_P), fp)?))
    }

    /// Reduced operators of the configured velocity rank, lifted by the snapshot mean.
    pub fn operators(&self, vb: &PodBasis) -> Result<ReducedOperators> {
        let r = self.cfg.velocity_rank.resolve(vb.dim());
        precompute_reduced_operators(vb, r, &self.space, vb.mean.as_deref())
    }

    pub fn rom(&self, set: &SnapshotSet, ops: &ReducedOperators) -> Result<RomTrajectory> {
        let first = set.velocity.first().ok_or(Error::EmptySnapshots)?;
        let tr = run_rom(ops, &RomConfig::from_fom(&set.config), self.cfg.problem.problem(), &self.space, &set.times, first)?;
        save(&self.path(ROM), &tr, self.fingerprint())?;
        write_csv_file(&self.path("rom.csv"), |w| tr.write_csv(w))?;
        Ok(tr)
    }

    pub fn load_rom(&self, ops: &ReducedOperators) -> Result<RomTrajectory> {
        let tr: RomTrajectory = load(&self.path(ROM), Some(self.fingerprint()))?;
        if tr.r != ops.rank() {
            return Err(Error::InvalidConfig(format!(
                "stored ROM has rank {} but the configuration asks for {}",
                tr.r,
                ops.rank()
            )));
        }
        Ok(tr)
    }

    /// Pressure recoveries at `rank` for the configured methods, driven by
    /// the same reduced velocities.
    pub fn pressure(
        &self,
        set: &SnapshotSet,
        pb: &PodBasis,
        velocities: &[Vec<f64>],
        rank: Rank,
    ) -> Result<Vec<PressureTrajectory>> {
        let r = rank.resolve(pb.dim());
        let modes = &pb.modes[..r];
        let c = &set.config;
        let mut out = Vec::new();
        for &m in self.cfg.methods.methods() {
            let rec: Box<dyn PressureRecovery> = match m {
                PressureMethod::Se => {
                    Box::new(SeSystem::new(&self.space, modes, pb.mean.as_deref(), c.nu, c.mu, c.dt, c.scheme)?)
                }
                PressureMethod::Sm => Box::new(SmSystem::new(
                    &self.space,
                    modes,
                    pb.mean.as_deref(),
                    tau_from_diameters(&self.space, self.cfg.tau_c),
                    c.nu,
                    c.dt,
                    c.scheme,
                )?),
            };
            let tr = run_pressure_rom(rec.as_ref(), &self.space, self.cfg.problem.problem(), velocities, &set.times)?;
            save(&self.path(&pressure_file(m, r)), &tr, self.fingerprint())?;
            let csv = pressure_file(m, r).replace(".podns", ".csv");
            write_csv_file(&self.path(&csv), |w| tr.write_csv(w))?;
            out.push(tr);
        }
        Ok(out)
    }

    pub fn load_pressure(&self, method: PressureMethod, r: usize) -> Result<PressureTrajectory> {
        load(&self.path(&pressure_file(method, r)), Some(self.fingerprint()))
    }

    /// Error rows of the full order model and of every given pressure
    /// trajectory, plus cylinder quantities of interest.
    pub fn errors(
        &self,
        set: &SnapshotSet,
        bases: (&PodBasis, &PodBasis),
        rom: Option<(&ReducedOperators, &[Vec<f64>])>,
        pressures: &[(Rank, PressureTrajectory)],
    ) -> Result<(Vec<ErrorRow>, Vec<QoiRow>)> {
        let (vb, pb) = bases;
        let c = &set.config;
        let tau = tau_from_diameters(&self.space, self.cfg.tau_c);
        let times = &set.times[1..];
        let fom_v = Series::new(times, &set.velocity[1..])?;
        let fom_p = Series::new(times, &set.pressure[1..])?;
        let problem = self.cfg.problem;
        let reference = match problem {
            ProblemId::NoFlow => Reference::Analytic(problem.problem()),
            ProblemId::Cylinder => Reference::Discrete { velocity: Some(fom_v), pressure: Some(fom_p) },
        };
        let row = |model: &str, method, rank: String, r_v, r_p| ErrorRow {
            problem,
            level: self.cfg.level,
            h: self.space.mesh().stats().h,
            nu: c.nu,
            mu: c.mu,
            model: model.to_string(),
            method,
            rank,
            r_v,
            r_p,
            d_v: vb.dim(),
            d_p: pb.dim(),
            velocity_l2l2: None,
            divergence_l2l2: None,
            pressure_l2l2: None,
            pressure_h1k: None,
            remaining_fraction: None,
            mean_correction: 0.0,
        };
        let fill = |mut r: ErrorRow, rep: crate::metrics::ErrorReport| {
            r.velocity_l2l2 = rep.velocity_l2l2;
            r.divergence_l2l2 = rep.divergence_l2l2;
            r.pressure_l2l2 = rep.pressure_l2l2;
            r.pressure_h1k = rep.pressure_h1k;
            r.mean_correction = rep.mean_correction;
            r
        };

        let mut rows = Vec::new();
        let mut qoi = Vec::new();
        let fom_row = row("fom", None, String::new(), 0, 0);
        match problem {
            ProblemId::NoFlow => {
                rows.push(fill(fom_row, compute_errors(&self.space, &reference, Some(fom_v), Some(fom_p), &tau, c.dt)?));
            }
            ProblemId::Cylinder => {
                rows.push(fom_row);
                let f = force_coefficients(
                    &self.space,
                    Series::new(&set.times, &set.velocity)?,
                    fom_p,
                    c.nu,
                    c.scheme,
                    c.dt,
                )?;
                qoi.push(QoiRow { level: self.cfg.level, model: "fom".into(), method: None, qoi: cylinder_qoi(&f)? });
            }
        }

        let Some((ops, vel)) = rom else {
            return Ok((rows, qoi));
        };
        let rom_v = Series::new(times, &vel[1..])?;
        let computed: Vec<(ErrorRow, Option<QoiRow>)> = pressures
            .par_iter()
            .map(|(rank, tr)| {
                let r_p = tr.rank();
                let ps: Vec<Vec<f64>> = (0..tr.len()).map(|n| reconstruct(pb, r_p, &tr.coefficients[n])).collect();
                let rom_p = Series::new(&tr.times, &ps)?;
                let rep = compute_errors(&self.space, &reference, Some(rom_v), Some(rom_p), &tau, c.dt)?;
                let mut r = fill(row("rom", Some(tr.method), rank.to_string(), ops.rank(), r_p), rep);
                r.remaining_fraction = Some(pb.remaining_fraction(r_p));
                let q = match problem {
                    ProblemId::NoFlow => None,
                    ProblemId::Cylinder => {
                        let f = force_coefficients(&self.space, Series::new(&set.times, vel)?, rom_p, c.nu, c.scheme, c.dt)?;
                        Some(QoiRow {
                            level: self.cfg.level,
                            model: "rom".into(),
                            method: Some(tr.method),
                            qoi: cylinder_qoi(&f)?,
                        })
                    }
                };
                Ok((r, q))
            })
            .collect::<Result<_>>()?;
        for (r, q) in computed {
            rows.push(r);
            qoi.extend(q);
        }
        Ok((rows, qoi))
    }

    pub fn write_errors(&self, rows: &[ErrorRow], qoi: &[QoiRow]) -> Result<()> {
        write_error_rows(&self.path(ERRORS), rows)?;
        if !qoi.is_empty() {
            write_qoi_rows(&self.path(QOI), qoi)?;
        }
        Ok(())
    }

    /// Runs one stage, loading whatever upstream artifacts it needs, and
    /// returns a one-line summary.
    pub fn stage(&self, stage: Stage, full: bool) -> Result<String> {
        let dir = self.dir.display();
        match stage {
            Stage::Fom => {
                let set = self.fom()?;
                Ok(format!("fom: {} snapshots in {dir}/{SNAPSHOTS}", set.len()))
            }
            Stage::Pod => {
                let (vb, pb) = self.pod(&self.load_snapshots()?)?;
                Ok(format!("pod: d_v = {}, d_p = {} in {dir}", vb.dim(), pb.dim()))
            }
            Stage::Rom => {
                let set = self.load_snapshots()?;
                let (vb, _) = self.load_bases()?;
                let tr = self.rom(&set, &self.operators(&vb)?)?;
                Ok(format!("rom: rank {}, {} steps in {dir}/{ROM}", tr.r, tr.len() - 1))
            }
            Stage::Pressure => {
                let set = self.load_snapshots()?;
                let (vb, pb) = self.load_bases()?;
                let ops = self.operators(&vb)?;
                let vel = velocities(&ops, &self.load_rom(&ops)?);
                let out = self.pressure(&set, &pb, &vel, self.cfg.pressure_rank)?;
                let names: Vec<String> = out.iter().map(|t| pressure_file(t.method, t.rank())).collect();
                Ok(format!("pressure: {} in {dir}", names.join(", ")))
            }
            Stage::Errors => {
                let set = self.load_snapshots()?;
                let (vb, pb) = self.load_bases()?;
                let ops = self.operators(&vb)?;
                let vel = velocities(&ops, &self.load_rom(&ops)?);
                let r = self.cfg.pressure_rank.resolve(pb.dim());
                let pressures = self
                    .cfg
                    .methods
                    .methods()
                    .iter()
                    .map(|&m| Ok((self.cfg.pressure_rank, self.load_pressure(m, r)?)))
                    .collect::<Result<Vec<_>>>()?;
                let (rows, qoi) = self.errors(&set, (&vb, &pb), Some((&ops, &vel)), &pressures)?;
                self.write_errors(&rows, &qoi)?;
                Ok(format!("errors: {} rows in {dir}/{ERRORS}", rows.len()))
            }
            Stage::Report => {
                let rows = report(&self.dir)?;
                Ok(format!("report: {} rows in {dir}/{CONVERGENCE}", rows.len()))
            }
            Stage::Sweep => {
                let rows = sweep(&self.cfg, &self.dir, full)?;
                Ok(format!("sweep: {} rows in {dir}/{CONVERGENCE}", rows.len()))
            }
        }
    }

    /// Every stage from the full order model to the error tables, with the
    /// pressure recovered at each of `ranks`.
    pub fn all(&self, ranks: &[Rank]) -> Result<(Vec<ErrorRow>, Vec<QoiRow>)> {
        let set = self.fom()?;
        let (vb, pb) = self.pod(&set)?;
        let ops = self.operators(&vb)?;
        let vel = velocities(&ops, &self.rom(&set, &ops)?);
        let mut pressures = Vec::new();
        let mut seen = Vec::new();
        for &rank in ranks {
            let r = rank.resolve(pb.dim());
            if r == 0 || seen.contains(&r) {
                continue;
            }
            seen.push(r);
            pressures.extend(self.pressure(&set, &pb, &vel, rank)?.into_iter().map(|t| (rank, t)));
        }
        let (rows, qoi) = self.errors(&set, (&vb, &pb), Some((&ops, &vel)), &pressures)?;
        self.write_errors(&rows, &qoi)?;
        Ok((rows, qoi))
    }
}

fn reconstruct(pb: &PodBasis, r: usize, c: &[f64]) -> Vec<f64> {
    let mut v = pb.mean.clone().unwrap_or_else(|| vec![0.0; pb.modes.first().map_or(0, Vec::len)]);
    for (a, m) in c.iter().zip(&pb.modes[..r]) {
        v.iter_mut().zip(m).for_each(|(x, y)| *x += a * y);
    }
    v
}

/// Full order velocities of a reduced trajectory.
pub fn velocities(ops: &ReducedOperators, tr: &RomTrajectory) -> Vec<Vec<f64>> {
    (0..tr.len()).map(|n| tr.velocity(ops, n)).collect()
}

/// One line of `convergence.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub row: ErrorRow,
    pub eoc_velocity: Option<f64>,
    pub eoc_divergence: Option<f64>,
    pub eoc_pressure: Option<f64>,
    pub eoc_h1k: Option<f64>,
}

fn collect_error_files(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_error_files(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == ERRORS) {
            out.push(p);
        }
    }
    Ok(())
}

fn order(prev: Option<f64>, cur: Option<f64>) -> Option<f64> {
    match (prev, cur) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => empirical_order(&[a, b]).ok().map(|e| e[0]),
        _ => None,
    }
}

/// Collects every `errors.csv` below `dir` into `convergence.csv`, with
/// orders between consecutive levels of the same configuration.
pub fn report(dir: &Path) -> Result<Vec<ConvergenceRow>> {
    let mut files = Vec::new();
    if dir.is_dir() {
        collect_error_files(dir, &mut files)?;
    }
    let mut groups: BTreeMap<String, Vec<ErrorRow>> = BTreeMap::new();
    for f in &files {
        for r in read_error_rows(f)? {
            let key = format!(
                "{},{},{},{:e},{:e},{}",
                r.problem,
                r.model,
                r.method.map_or("", PressureMethod::as_str),
                r.nu,
                r.mu,
                r.rank
            );
            groups.entry(key).or_default().push(r);
        }
    }
    if groups.is_empty() {
        return Err(Error::NoRuns(dir.display().to_string()));
    }
    let mut out = Vec::new();
    for rows in groups.values_mut() {
        rows.sort_by_key(|r| r.level);
        for (k, r) in rows.iter().enumerate() {
            let prev = (k > 0 && rows[k - 1].level + 1 == r.level).then(|| &rows[k - 1]);
            out.push(ConvergenceRow {
                eoc_velocity: order(prev.and_then(|p| p.velocity_l2l2), r.velocity_l2l2),
                eoc_divergence: order(prev.and_then(|p| p.divergence_l2l2), r.divergence_l2l2),
                eoc_pressure: order(prev.and_then(|p| p.pressure_l2l2), r.pressure_l2l2),
                eoc_h1k: order(prev.and_then(|p| p.pressure_h1k), r.pressure_h1k),
                row: r.clone(),
            });
        }
    }
    let mut w = BufWriter::new(fs::File::create(dir.join(CONVERGENCE))?);
    writeln!(w, "{ERROR_HEADER},eoc_velocity,eoc_divergence,eoc_pressure,eoc_h1k")?;
    for c in &out {
        writeln!(
            w,
            "{},{},{},{},{}",
            c.row.to_csv(),
            opt(c.eoc_velocity),
            opt(c.eoc_divergence),
            opt(c.eoc_pressure),
            opt(c.eoc_h1k)
        )?;
    }
    w.flush()?;
    Ok(out)
}

/// Runs the grid of the configuration's sweep section, one subdirectory per
/// (level, nu, mu), and writes the report. `full` adds the large levels.
pub fn sweep(cfg: &RunConfig, dir: &Path, full: bool) -> Result<Vec<ConvergenceRow>> {
    let g = &cfg.sweep;
    let mut levels = g.levels.clone();
    if full {
        levels.extend(&g.full_levels);
    }
    levels.sort_unstable();
    levels.dedup();
    let mut runs = Vec::new();
    for &l in &levels {
        for &nu in &g.nu {
            for &mu in &g.mu {
                runs.push(cfg.variant(l, nu, mu));
            }
        }
    }
    fs::create_dir_all(dir)?;
    runs.par_iter()
        .map(|c| {
            let run = Run::new(c.clone(), dir.join(c.run_name()))?;
            run.all(&g.ranks).map(drop)
        })
        .collect::<Result<Vec<()>>>()?;
    report(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(level: usize, e: f64) -> ErrorRow {
        ErrorRow {
            problem: ProblemId::NoFlow,
            level,
            h: 0.1 / level as f64,
            nu: 0.01,
            mu: 0.1,
            model: "rom".into(),
            method: Some(PressureMethod::Se),
            rank: "all".into(),
            r_v: 3,
            r_p: 2,
            d_v: 3,
            d_p: 2,
            velocity_l2l2: Some(e),
            divergence_l2l2: None,
            pressure_l2l2: Some(2.0 * e),
            pressure_h1k: Some(0.1),
            remaining_fraction: Some(0.0),
            mean_correction: 1.5,
        }
    }

    #[test]
    fn stage_names() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("plot".parse::<Stage>().is_err());
    }

    #[test]
    fn error_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(1, 0.125), row(2, 1e-300)];
        let p = dir.path().join(ERRORS);
        write_error_rows(&p, &rows).unwrap();
        assert_eq!(read_error_rows(&p).unwrap(), rows);
    }

    #[test]
    fn report_on_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(dir.path()), Err(Error::NoRuns(_))));
        assert!(matches!(report(&dir.path().join("missing")), Err(Error::NoRuns(_))));
    }

    #[test]
    fn report_orders_between_levels() {
        let dir = tempfile::tempdir().unwrap();
        for (l, e) in [(1, 8.0), (2, 1.0), (3, 0.25)] {
            let d = dir.path().join(format!("L{l}"));
            fs::create_dir_all(&d).unwrap();
            write_error_rows(&d.join(ERRORS), &[row(l, e)]).unwrap();
        }
        let rows = report(dir.path()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].eoc_velocity, None);
        assert!((rows[1].eoc_velocity.unwrap() - 3.0).abs() < 1e-14);
        assert!((rows[2].eoc_pressure.unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(rows[2].eoc_h1k, Some(0.0));
        assert_eq!(rows[1].eoc_divergence, None);
        let text = fs::read_to_string(dir.path().join(CONVERGENCE)).unwrap();
        assert_eq!(text.lines().count(), 4);
    }
}
