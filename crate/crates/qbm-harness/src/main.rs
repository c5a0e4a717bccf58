use anyhow::{ensure, Context, Result};
use clap::{Parser, Subcommand};
use num_complex::Complex64 as C;
use qbm_core::algebra::FourierFunction;
use qbm_core::law::MarginalLaw;
use qbm_core::pairings::{q_moment, q_moment_table, CovarianceSpec};
use qbm_core::rough::{solve_rde, strat_levy_area, LevyAreaApprox, PicardOptions};
use qbm_harness::checks::{self, all_words, qbm_grid, word_phi, CheckCtx};
use qbm_harness::config::RunConfig;
use qbm_harness::emit::{emit_plotdata, format_value, write_csv, PlotKind};
use qbm_harness::report::Summary;
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "qbm",
    version,
    about = "q-Brownian motion toolkit: moments, densities, rough-path checks"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for emitted tables and summaries.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the configured seed for randomized checks.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate one q-Gaussian word moment over an explicit covariance.
    Moments {
        /// Deformation parameter; falls back to the config value.
        #[arg(long)]
        q: Option<f64>,
        /// Word as comma- or space-separated labels, e.g. "a,b,a,b".
        #[arg(long)]
        word: String,
        /// Covariance rows, ';'-separated, entries ','-separated; identity
        /// when omitted.
        #[arg(long)]
        cov: Option<String>,
        /// File with one covariance row per line instead of --cov.
        #[arg(long, value_name = "PATH")]
        cov_file: Option<PathBuf>,
        /// Also print the per-pairing table (pairs, crossings, weight).
        #[arg(long)]
        verbose: bool,
    },
    /// Emit the marginal density table plus a moment comparison.
    Density,
    /// Sweep grid-increment words: dense matrices against the pairing sum.
    FockCheck {
        /// Largest word length; default keeps the sweep exact (2N).
        #[arg(long)]
        r: Option<usize>,
    },
    /// Emit per-level area defect norms and the decay summary.
    LevyArea,
    /// Emit the correction table and run both correction checks.
    ItoCompare,
    /// Solve the sample equation; emit snapshots, residuals and distances.
    Rde,
    /// Run acceptance checks and write the JSON summary; nonzero exit on
    /// failure.
    Report {
        /// Run a single named check instead of the whole suite.
        #[arg(long, value_name = "NAME")]
        check: Option<String>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match cli.cmd {
        Cmd::Moments {
            q,
            word,
            cov,
            cov_file,
            verbose,
        } => cmd_moments(&cfg, q, &word, cov, cov_file, verbose),
        Cmd::Density => cmd_density(&cfg, &out),
        Cmd::FockCheck { r } => cmd_fock_check(&cfg, r),
        Cmd::LevyArea => cmd_levy_area(&cfg, &out),
        Cmd::ItoCompare => cmd_ito_compare(&cfg, &out),
        Cmd::Rde => cmd_rde(&cfg, &out),
        Cmd::Report { check } => cmd_report(&cfg, &out, check),
    }
}

fn parse_cov(text: &str, n: usize) -> Result<Vec<f64>> {
    let mut flat = Vec::new();
    let rows: Vec<&str> = text
        .split([';', '\n'])
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .collect();
    ensure!(rows.len() == n, "covariance has {} rows, word uses {n} labels", rows.len());
    for row in rows {
        let entries: Vec<&str> = row
            .split([',', ' '])
            .map(str::trim)
            .filter(|e| !e.is_empty())
            .collect();
        ensure!(
            entries.len() == n,
            "covariance row `{row}` has {} entries, expected {n}",
            entries.len()
        );
        for e in entries {
            flat.push(e.parse::<f64>().with_context(|| format!("bad covariance entry `{e}`"))?);
        }
    }
    Ok(flat)
}

fn cmd_moments(
    cfg: &RunConfig,
    q_flag: Option<f64>,
    word: &str,
    cov: Option<String>,
    cov_file: Option<PathBuf>,
    verbose: bool,
) -> Result<()> {
    let q = q_flag.unwrap_or(cfg.q);
    ensure!((0.0..1.0).contains(&q), "q = {q} outside [0, 1)");
    let labels: Vec<&str> = word
        .split([',', ' '])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    ensure!(!labels.is_empty(), "empty word");
    let mut names: Vec<String> = Vec::new();
    let mut idx_word = Vec::with_capacity(labels.len());
    for l in &labels {
        let i = match names.iter().position(|n| n == l) {
            Some(i) => i,
            None => {
                names.push((*l).to_string());
                names.len() - 1
            }
        };
        idx_word.push(i);
    }
    let n = names.len();
    let cov_text = match cov_file {
        Some(path) => fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => cov.unwrap_or_default(),
    };
    let flat = if cov_text.trim().is_empty() {
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        id
    } else {
        parse_cov(&cov_text, n)?
    };
    let spec = CovarianceSpec::new(names, flat)?;
    let value = q_moment(&idx_word, &spec, q)?;
    println!("moment = {}", format_value(value));
    if verbose {
        println!("pairing,crossings,weight");
        if idx_word.len() % 2 == 0 {
            for (p, w) in q_moment_table(&idx_word, &spec, q)? {
                let pairs: String = p
                    .pairs()
                    .iter()
                    .map(|(a, b)| format!("({a} {b})"))
                    .collect();
                println!(
                    "{pairs},{},{}",
                    qbm_core::pairings::crossing_number(&p),
                    format_value(w)
                );
            }
        }
    }
    Ok(())
}

fn cmd_density(cfg: &RunConfig, out: &PathBuf) -> Result<()> {
    let path = emit_plotdata(PlotKind::Density, cfg, out)?;
    println!("wrote {}", path.display());
    let law = MarginalLaw::new(cfg.q)?;
    let r_max = cfg.r_max.min(8);
    let moments = law.moments_upto(r_max, 1e-12)?;
    let spec = CovarianceSpec::diagonal(&[1.0])?;
    let mut rows = Vec::new();
    for (r, &m) in moments.iter().enumerate() {
        let oracle = q_moment(&vec![0usize; r], &spec, cfg.q)?;
        rows.push(vec![r as f64, m, oracle, (m - oracle).abs()]);
    }
    let table = out.join("density_moments.csv");
    write_csv(&table, &["r", "quadrature", "pairing_sum", "abs_error"], &rows)?;
    println!("wrote {}", table.display());
    Ok(())
}

fn cmd_fock_check(cfg: &RunConfig, r_flag: Option<usize>) -> Result<()> {
    let letters = cfg.d.min(4);
    let r = r_flag.unwrap_or(cfg.r_max.min(2 * cfg.n));
    ensure!(r >= 1 && r <= qbm_core::pairings::R_MAX, "word length {r} out of range");
    let (_, grid) = qbm_grid(cfg.q, cfg.d, cfg.n)?;
    let driver = grid.driver();
    let incs: Vec<_> = (0..letters)
        .map(|k| driver.increment_idx(k, k + 1))
        .collect();
    let spec = CovarianceSpec::diagonal(&vec![driver.step(); letters])?;
    println!("word,matrix_value,oracle_value,abs_error");
    for word in all_words(letters, r) {
        let matrix = word_phi(&incs, &word).re;
        let oracle = q_moment(&word, &spec, cfg.q)?;
        let tag: Vec<String> = word.iter().map(|i| i.to_string()).collect();
        println!(
            "{},{},{},{}",
            tag.join("."),
            format_value(matrix),
            format_value(oracle),
            format_value((matrix - oracle).abs())
        );
    }
    Ok(())
}

fn cmd_levy_area(cfg: &RunConfig, out: &PathBuf) -> Result<()> {
    let path = emit_plotdata(PlotKind::LevyDecay, cfg, out)?;
    println!("wrote {}", path.display());
    let (space, grid) = qbm_grid(cfg.q, cfg.d, cfg.n)?;
    let driver = grid.driver();
    let unit = qbm_core::algebra::TensorValue2::identity(&space);
    let (_, cert) = strat_levy_area(&driver, 0.0, 1.0, &unit, cfg.n_max, cfg.gamma)?;
    println!(
        "levels 1..{}: ratio threshold {}, geometric = {}",
        cfg.n_max, cert.threshold, cert.geometric
    );
    for (i, ratio) in cert.ratios.iter().enumerate() {
        println!("ratio {} -> {}: {}", i + 1, i + 2, format_value(*ratio));
    }
    Ok(())
}

fn cmd_ito_compare(cfg: &RunConfig, out: &PathBuf) -> Result<()> {
    let path = emit_plotdata(PlotKind::Correction, cfg, out)?;
    println!("wrote {}", path.display());
    let ctx = CheckCtx::new(cfg.clone());
    let mut records = Vec::new();
    for name in ["ito-correction", "quadratic-variation"] {
        let rec = checks::run(name, &ctx)?;
        println!("{}", rec.one_line());
        records.push(rec);
    }
    let summary = Summary::new(cfg.seed, records);
    fs::create_dir_all(out)?;
    let json = out.join("ito_compare.json");
    fs::write(&json, summary.to_json())?;
    println!("wrote {}", json.display());
    Ok(())
}

fn cmd_rde(cfg: &RunConfig, out: &PathBuf) -> Result<()> {
    let path = emit_plotdata(PlotKind::WongZakai, cfg, out)?;
    println!("wrote {}", path.display());
    let (space, grid) = qbm_grid(cfg.q, cfg.d, cfg.n)?;
    let driver = grid.driver();
    let f = FourierFunction::new(vec![(C::new(0.35, 0.0), 1.0)], 3);
    let g = f.adjoint_pair();
    let init = space.identity_op().scaled(C::new(0.1, 0.0));
    let area = LevyAreaApprox::new(&driver, cfg.n_max)?;
    let times: Vec<f64> = (0..=cfg.d).map(|k| k as f64 / cfg.d as f64).collect();
    let (solution, report) = solve_rde(
        std::slice::from_ref(&f),
        std::slice::from_ref(&g),
        &init,
        &area,
        &times,
        PicardOptions::default(),
    )?;
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let v = solution.value(k);
        let phi = v.phi();
        rows.push(vec![t, phi.re, phi.im, v.op_norm()]);
    }
    let snap = out.join("rde_solution.csv");
    write_csv(&snap, &["t", "phi_re", "phi_im", "op_norm"], &rows)?;
    println!("wrote {}", snap.display());
    let res_rows: Vec<Vec<f64>> = report
        .residuals
        .iter()
        .zip(&report.sa_defects)
        .enumerate()
        .map(|(i, (&r, &d))| vec![i as f64, r, d])
        .collect();
    let res = out.join("rde_residuals.csv");
    write_csv(&res, &["iteration", "residual", "sa_defect"], &res_rows)?;
    println!("wrote {}", res.display());
    Ok(())
}

fn cmd_report(cfg: &RunConfig, out: &PathBuf, check: Option<String>) -> Result<()> {
    let ctx = CheckCtx::new(cfg.clone());
    let records = match &check {
        Some(name) => vec![checks::run(name, &ctx)?],
        None => checks::run_all(&ctx)?,
    };
    for rec in &records {
        println!("{}", rec.one_line());
    }
    let summary = Summary::new(cfg.seed, records);
    fs::create_dir_all(out)?;
    let json = out.join("report.json");
    fs::write(&json, summary.to_json())?;
    if check.is_none() {
        for kind in PlotKind::ALL {
            emit_plotdata(kind, cfg, out)?;
        }
    }
    println!(
        "{} passed, {} failed; wrote {}",
        summary.passed,
        summary.failed,
        json.display()
    );
    if summary.failed > 0 {
        std::process::exit(1);
    }
    Ok(())
}
