//! CSV artifacts: fixed column layouts, dot decimal separator, 17
//! significant digits, LF line endings. Two runs with the same config and
//! seed write byte-identical files.

use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use num_complex::Complex64 as C;
use qbm_core::algebra::{FourierFunction, TensorValue2};
use qbm_core::fock::Space;
use qbm_core::ito::{correction_check, id_gamma_column, PastProjector};
use qbm_core::law::MarginalLaw;
use qbm_core::rough::{
    solve_rde, strat_levy_area, wong_zakai_compare, LevyAreaApprox, PathGrid, PicardOptions,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn render_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "{}", header.join(","));
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let cells: Vec<String> = row.iter().map(|&x| format_value(x)).collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    text
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    std::fs::write(path, render_csv(header, rows))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Like [`write_csv`] with one leading text column (e.g. a word).
pub fn write_csv_labeled(
    path: &Path,
    label: &str,
    header: &[&str],
    rows: &[(String, Vec<f64>)],
) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "{label},{}", header.join(","));
    for (tag, row) in rows {
        let cells: Vec<String> = row.iter().map(|&x| format_value(x)).collect();
        let _ = writeln!(text, "{tag},{}", cells.join(","));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Density,
    LevyDecay,
    Correction,
    WongZakai,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::Density,
        PlotKind::LevyDecay,
        PlotKind::Correction,
        PlotKind::WongZakai,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Density => "density",
            PlotKind::LevyDecay => "levy-decay",
            PlotKind::Correction => "correction",
            PlotKind::WongZakai => "wong-zakai",
        }
    }

    fn file_name(self) -> &'static str {
        match self {
            PlotKind::Density => "density.csv",
            PlotKind::LevyDecay => "levy_decay.csv",
            PlotKind::Correction => "correction.csv",
            PlotKind::WongZakai => "wong_zakai.csv",
        }
    }
}

impl FromStr for PlotKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "density" => Ok(PlotKind::Density),
            "levy-decay" => Ok(PlotKind::LevyDecay),
            "correction" => Ok(PlotKind::Correction),
            "wong-zakai" => Ok(PlotKind::WongZakai),
            other => bail!("unknown plot kind `{other}`; expected density, levy-decay, correction or wong-zakai"),
        }
    }
}

fn qbm_grid(cfg: &RunConfig) -> Result<(Arc<Space>, PathGrid)> {
    let space = Space::new(cfg.q, cfg.d, cfg.n)?;
    let grid = PathGrid::new(&space)?;
    Ok((space, grid))
}

fn density_rows(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let law = MarginalLaw::new(cfg.q)?;
    let (lo, hi) = law.support();
    let rows = (0..cfg.k)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (cfg.k - 1) as f64;
            vec![x, law.density(x)]
        })
        .collect();
    Ok(rows)
}

fn levy_decay_rows(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let (space, grid) = qbm_grid(cfg)?;
    let driver = grid.driver();
    let unit = TensorValue2::identity(&space);
    let (_, cert) = strat_levy_area(&driver, 0.0, 1.0, &unit, cfg.n_max, cfg.gamma)?;
    Ok(cert
        .defects
        .iter()
        .map(|&(n, d)| vec![n as f64, d])
        .collect())
}

fn correction_rows(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let (space, grid) = qbm_grid(cfg)?;
    let unit = TensorValue2::identity(&space);
    let levels: Vec<usize> = (1..=cfg.n_max).collect();
    let report = correction_check(
        &grid,
        &unit,
        0.0,
        1.0,
        &levels,
        2,
        cfg.tolerances.correction_rel,
    )?;
    let proj = PastProjector::all_past(&grid, 0.0, grid.step(), 2)?;
    let corr = id_gamma_column(&proj, &unit)?;
    let corr_l2 = (0..corr.nrows())
        .map(|i| corr[(i, 0)].norm_sqr())
        .sum::<f64>()
        .sqrt()
        * 0.5
        * (report.t - report.s);
    Ok(report
        .levels
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            vec![
                n as f64,
                report.strat_state[i].re,
                report.strat_state[i].im,
                report.ito_state[i].re,
                report.ito_state[i].im,
                corr_l2,
                report.residuals[i],
            ]
        })
        .collect())
}

fn wong_zakai_rows(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let (space, grid) = qbm_grid(cfg)?;
    let driver = grid.driver();
    let f = FourierFunction::new(vec![(C::new(0.35, 0.0), 1.0)], 3);
    let g = f.adjoint_pair();
    let init = space.identity_op().scaled(C::new(0.2, 0.0));
    let area = LevyAreaApprox::new(&driver, cfg.n_max)?;
    let times: Vec<f64> = (0..=cfg.d).map(|k| driver.time(k)).collect();
    let (reference, _) = solve_rde(
        std::slice::from_ref(&f),
        std::slice::from_ref(&g),
        &init,
        &area,
        &times,
        PicardOptions::default(),
    )?;
    let levels: Vec<usize> = (1..=cfg.n_max).collect();
    let rows = wong_zakai_compare(&[f], &[g], &init, &reference, &levels, 8, cfg.gamma)?;
    Ok(rows
        .into_iter()
        .map(|(n, dist)| vec![n as f64, dist])
        .collect())
}

/// Computes one table and writes it under `out_dir`, returning the path.
pub fn emit_plotdata(kind: PlotKind, cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let (header, rows): (&[&str], Vec<Vec<f64>>) = match kind {
        PlotKind::Density => (&["x", "density"], density_rows(cfg)?),
        PlotKind::LevyDecay => (&["n", "defect_norm"], levy_decay_rows(cfg)?),
        PlotKind::Correction => (
            &[
                "level",
                "strat_phi_re",
                "strat_phi_im",
                "ito_phi_re",
                "ito_phi_im",
                "correction_l2",
                "residual",
            ],
            correction_rows(cfg)?,
        ),
        PlotKind::WongZakai => (&["level", "distance"], wong_zakai_rows(cfg)?),
    };
    let path = out_dir.join(kind.file_name());
    write_csv(&path, header, &rows)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        let s = format_value(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(s.parse::<f64>().unwrap(), std::f64::consts::PI);
        // Round-trips the worst cases bit-exactly.
        for x in [0.1, 2.0f64.powi(-1074), f64::MAX, -1.0 / 3.0] {
            assert_eq!(format_value(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn csv_layout_is_plain() {
        let text = render_csv(&["a", "b"], &[vec![1.0, 0.5]]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "a,b");
        let row = lines.next().unwrap();
        assert!(row.starts_with("1.0000000000000000e0,5.0"), "{row}");
        assert!(!text.contains(';'));
    }

    #[test]
    fn density_table_peaks_at_the_semicircle_maximum() {
        let cfg = RunConfig {
            q: 0.0,
            k: 401,
            ..RunConfig::default()
        };
        let rows = density_rows(&cfg).unwrap();
        assert_eq!(rows.len(), 401);
        let max = rows.iter().map(|r| r[1]).fold(0.0f64, f64::max);
        assert!((max - 1.0 / std::f64::consts::PI).abs() < 1e-4, "{max}");
        assert!(rows.first().unwrap()[0] <= -1.99);
    }

    #[test]
    fn levy_decay_table_is_positive_and_decreasing() {
        let cfg = RunConfig::default();
        let rows = levy_decay_rows(&cfg).unwrap();
        assert!(rows.len() >= 2);
        for pair in rows.windows(2) {
            assert!(pair[0][1] > 0.0);
            assert!(pair[1][1] < pair[0][1], "{rows:?}");
        }
    }

    #[test]
    fn bad_config_is_rejected_before_any_io() {
        let cfg = RunConfig {
            d: 0,
            ..RunConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let err = emit_plotdata(PlotKind::Density, &cfg, dir.path()).unwrap_err();
        assert!(err.to_string().contains("`d`"), "{err}");
        assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = RunConfig {
            k: 51,
            d: 4,
            n: 2,
            n_max: 2,
            ..RunConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let a = emit_plotdata(PlotKind::Density, &cfg, &dir.path().join("a")).unwrap();
        let b = emit_plotdata(PlotKind::Density, &cfg, &dir.path().join("b")).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}
