//! Persistence: the SPD1 binary trajectory format, CSV export of
//! estimates and Monte-Carlo results, the generated plotting script, and
//! the reader for externally supplied `(nu, mse)` tables.
//!
//! SPD1 layout, all little-endian: magic `"SPD1"`, `u32` version (1),
//! `u64` M, `u64` N, `f64` l, `f64` T, `f64` nu, `f64` alpha, `u64` seed,
//! then `(N + 1)(M + 1)` `f64` nodal values in row-major order.
//!
//! Every CSV starts with `#` comment lines (including the seed that
//! produced the data and a `# columns:` line) followed by bare numeric
//! rows, so plotting tools and dataframe readers consume them without
//! special casing. Floats carry 17 significant digits and round-trip
//! exactly.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimate::{EstimateResult, PointEstimate};
use crate::grid::GridSpec;
use crate::mc::{McResult, RateFit, RunOutcome};
use crate::simulate::Trajectory;

const MAGIC: [u8; 4] = *b"SPD1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8 * 4 + 8;

/// Serializes a trajectory to the SPD1 binary format.
pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let grid = traj.grid();
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.m() as u64).to_le_bytes())?;
    w.write_all(&(grid.n() as u64).to_le_bytes())?;
    for v in [grid.l(), grid.t_end(), traj.nu(), traj.alpha()] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&traj.seed().to_le_bytes())?;
    let mut chunk = [0u8; 8 * 1024];
    for block in traj.values().chunks(1024) {
        let bytes = &mut chunk[..8 * block.len()];
        for (dst, v) in bytes.chunks_exact_mut(8).zip(block) {
            dst.copy_from_slice(&v.to_le_bytes());
        }
        w.write_all(bytes)?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::TruncatedFile { offset: self.data.len() as u64 });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads an SPD1 file back into a trajectory. The stored model fingerprint
/// is not part of the format, so the result carries none.
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let data = std::fs::read(path.as_ref())?;
    let mut c = Cursor { data: &data, pos: 0 };
    let magic = c.take(4)?;
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic.try_into().unwrap() });
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::VersionUnsupported { found: version });
    }
    let m = usize::try_from(c.u64()?)
        .map_err(|_| Error::invalid("stored grid size M does not fit this platform"))?;
    let n = usize::try_from(c.u64()?)
        .map_err(|_| Error::invalid("stored step count N does not fit this platform"))?;
    let l = c.f64()?;
    let t_end = c.f64()?;
    let nu = c.f64()?;
    let alpha = c.f64()?;
    let seed = c.u64()?;
    debug_assert_eq!(c.pos, HEADER_LEN);
    let grid = GridSpec::new(l, t_end, m, n)?;
    let count = (m + 1)
        .checked_mul(n + 1)
        .ok_or_else(|| Error::invalid("stored grid dimensions overflow"))?;
    let payload = c.take(8 * count)?;
    if c.pos != data.len() {
        return Err(Error::invalid(format!(
            "{} trailing bytes after the trajectory payload",
            data.len() - c.pos
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Trajectory::from_raw(grid, nu, alpha, None, seed, values)
}

/// 17-significant-digit float formatting: parses back to the same bits.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: impl AsRef<Path>) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path.as_ref())?))
}

/// Writes one estimate as a single-row CSV.
pub fn write_estimate_csv(
    path: impl AsRef<Path>,
    est: &EstimateResult,
    seed: Option<u64>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# intensity estimate")?;
    if let Some(seed) = seed {
        writeln!(w, "# seed = {seed}")?;
    }
    writeln!(
        w,
        "# columns: theta_hat,fisher,stderr,ci_lo,ci_hi,alpha_bar,n_increments,\
         window_y0,window_t0,window_delta_y,window_delta_t"
    )?;
    let win = est.window.as_ref().map_or([f64::NAN; 4], |win| {
        [win.y0(), win.t0(), win.delta_y(), win.delta_t()]
    });
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{}",
        fmt(est.theta_hat),
        fmt(est.fisher),
        fmt(est.stderr),
        fmt(est.ci.0),
        fmt(est.ci.1),
        fmt(est.alpha_bar),
        est.n_increments,
        fmt(win[0]),
        fmt(win[1]),
        fmt(win[2]),
        fmt(win[3]),
    )?;
    w.flush()?;
    Ok(())
}

/// Writes the pointwise estimates, one row per evaluation point. Failed
/// points keep their row, with an error code instead of numbers.
pub fn write_points_csv(
    path: impl AsRef<Path>,
    points: &[PointEstimate],
    seed: Option<u64>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# pointwise intensity estimates")?;
    if let Some(seed) = seed {
        writeln!(w, "# seed = {seed}")?;
    }
    writeln!(
        w,
        "# columns: y0,t0,delta_y,delta_t,theta_hat,stderr,ci_lo,ci_hi,n_increments,error"
    )?;
    for p in points {
        match &p.outcome {
            Ok(est) => writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},",
                fmt(p.y0),
                fmt(p.t0),
                fmt(p.delta_y),
                fmt(p.delta_t),
                fmt(est.theta_hat),
                fmt(est.stderr),
                fmt(est.ci.0),
                fmt(est.ci.1),
                est.n_increments,
            )?,
            Err(e) => writeln!(
                w,
                "{},{},{},{},nan,nan,nan,nan,0,{}",
                fmt(p.y0),
                fmt(p.t0),
                fmt(p.delta_y),
                fmt(p.delta_t),
                e.code(),
            )?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-run Monte-Carlo table. Blown-up or failed runs keep their row with
/// `nan` estimate fields and the corresponding flag set.
pub fn write_mc_csv(path: impl AsRef<Path>, mc: &McResult) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# monte-carlo runs")?;
    writeln!(w, "# base_seed = {}", mc.base_seed)?;
    writeln!(w, "# true_theta = {}", fmt(mc.true_theta))?;
    writeln!(w, "# alpha_bar = {}", fmt(mc.alpha_bar))?;
    writeln!(w, "# columns: nu,run,seed,theta_hat,fisher,ci_lo,ci_hi,covered,blowup")?;
    for nu_result in &mc.per_nu {
        for rec in &nu_result.records {
            let (theta_hat, fisher, ci, covered, blowup) = match &rec.outcome {
                RunOutcome::Estimate(e) => {
                    let covered = e.ci.0 <= mc.true_theta && mc.true_theta <= e.ci.1;
                    (e.theta_hat, e.fisher, e.ci, covered as u8, 0u8)
                }
                RunOutcome::BlowUp { .. } => (f64::NAN, f64::NAN, (f64::NAN, f64::NAN), 0, 1),
                RunOutcome::Failed { .. } => (f64::NAN, f64::NAN, (f64::NAN, f64::NAN), 0, 0),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                fmt(nu_result.nu),
                rec.run,
                rec.seed,
                fmt(theta_hat),
                fmt(fisher),
                fmt(ci.0),
                fmt(ci.1),
                covered,
                blowup,
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-diffusivity aggregate table.
pub fn write_diagnostics_csv(path: impl AsRef<Path>, mc: &McResult) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# monte-carlo aggregates")?;
    writeln!(w, "# base_seed = {}", mc.base_seed)?;
    writeln!(w, "# true_theta = {}", fmt(mc.true_theta))?;
    writeln!(
        w,
        "# columns: nu,attempted,used,blowups,mse,bias,variance,coverage,z_mean,z_var,ks_distance"
    )?;
    for r in &mc.per_nu {
        let nan = f64::NAN;
        let (used, mse, bias, var, cov, zm, zv, ks) = match &r.aggregates {
            Some(a) => (a.used, a.mse, a.bias, a.variance, a.coverage, a.z_mean, a.z_var, a.ks),
            None => (0, nan, nan, nan, nan, nan, nan, nan),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt(r.nu),
            r.attempted,
            used,
            r.blowups,
            fmt(mse),
            fmt(bias),
            fmt(var),
            fmt(cov),
            fmt(zm),
            fmt(zv),
            fmt(ks),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// The fitted convergence rate as a single-row CSV.
pub fn write_rate_csv(
    path: impl AsRef<Path>,
    fit: &RateFit,
    base_seed: Option<u64>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# log-log rate fit of mse against nu")?;
    if let Some(seed) = base_seed {
        writeln!(w, "# base_seed = {seed}")?;
    }
    writeln!(w, "# columns: slope,intercept,r2,n_points")?;
    writeln!(
        w,
        "{},{},{},{}",
        fmt(fit.slope),
        fmt(fit.intercept),
        fmt(fit.r2),
        fit.n_points
    )?;
    w.flush()?;
    Ok(())
}

/// Gnuplot script for the log-log MSE figure. Pure presentation: it reads
/// the aggregate CSV and computes nothing itself.
pub fn write_plot_script(
    path: impl AsRef<Path>,
    diagnostics_csv: &str,
    figure_out: &str,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# renders the mean-squared-error figure from {diagnostics_csv}")?;
    writeln!(w, "set datafile separator \",\"")?;
    writeln!(w, "set datafile commentschars \"#\"")?;
    writeln!(w, "set logscale xy")?;
    writeln!(w, "set xlabel \"diffusivity nu\"")?;
    writeln!(w, "set ylabel \"MSE\"")?;
    writeln!(w, "set grid")?;
    writeln!(w, "set key left top")?;
    writeln!(w, "set terminal pngcairo size 900,600")?;
    writeln!(w, "set output \"{figure_out}\"")?;
    writeln!(
        w,
        "plot \"{diagnostics_csv}\" using 1:5 with linespoints pointtype 7 title \"MSE\""
    )?;
    w.flush()?;
    Ok(())
}

/// Reads `(nu, mse)` pairs from a CSV file. `#` lines are comments; when a
/// `# columns:` comment or a textual header row names the columns, `nu` and
/// `mse` are located by name, otherwise the first two columns are used.
pub fn read_rate_points(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut nu_col = 0usize;
    let mut mse_col = 1usize;
    let mut saw_names = false;
    let mut points = Vec::new();
    let name_cols = |names: &[&str]| -> Option<(usize, usize)> {
        let find = |want: &str| names.iter().position(|n| n.trim() == want);
        Some((find("nu")?, find("mse")?))
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(cols) = rest.strip_prefix("columns:") {
                let names: Vec<&str> = cols.split(',').collect();
                if let Some((a, b)) = name_cols(&names) {
                    nu_col = a;
                    mse_col = b;
                    saw_names = true;
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: Option<(f64, f64)> = (|| {
            let nu = fields.get(nu_col)?.trim().parse::<f64>().ok()?;
            let mse = fields.get(mse_col)?.trim().parse::<f64>().ok()?;
            Some((nu, mse))
        })();
        match parsed {
            Some(p) => points.push(p),
            None if !saw_names => {
                // Possibly a textual header row naming the columns.
                if let Some((a, b)) = name_cols(&fields) {
                    nu_col = a;
                    mse_col = b;
                    saw_names = true;
                } else if points.is_empty() {
                    continue; // unnamed header row
                } else {
                    return Err(Error::RateFitInput {
                        what: format!("unparseable row {line:?}"),
                    });
                }
            }
            None => {
                return Err(Error::RateFitInput { what: format!("unparseable row {line:?}") })
            }
        }
    }
    if points.is_empty() {
        return Err(Error::RateFitInput {
            what: format!("no (nu, mse) rows in {}", path.as_ref().display()),
        });
    }
    Ok(points)
}
