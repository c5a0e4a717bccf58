//! Marginal density: mass, the free special case, and quadrature moments.

use super::{inputs, CheckCtx};
use crate::report::Judge;
use anyhow::Result;
use qbm_core::law::MarginalLaw;
use qbm_core::pairings::{q_moment, CovarianceSpec};
use std::collections::BTreeMap;

pub fn density(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let tols = &ctx.cfg.tolerances;
    let qs = [0.0, 0.3, 0.6];
    let unit = CovarianceSpec::diagonal(&[1.0])?;

    let mut max_norm_err = 0.0f64;
    let mut max_moment_err = 0.0f64;
    for &q in &qs {
        let law = MarginalLaw::new(q)?;
        let moments = law.moments_upto(8, 1e-12)?;
        max_norm_err = max_norm_err.max((moments[0] - 1.0).abs());
        for (r, &m) in moments.iter().enumerate() {
            let oracle = q_moment(&vec![0; r], &unit, q)?;
            max_moment_err = max_moment_err.max((m - oracle).abs());
        }
    }
    judge.le("max_norm_err", max_norm_err, "density_norm", tols.density_norm);
    judge.le(
        "max_moment_err",
        max_moment_err,
        "density_moment",
        tols.density_moment,
    );

    // q = 0 is the semicircle on [-2, 2].
    let free = MarginalLaw::new(0.0)?;
    let mut sup = 0.0f64;
    for i in 0..1001 {
        let x = -2.0 + 4.0 * i as f64 / 1000.0;
        let semicircle = (4.0 - x * x).max(0.0).sqrt() / (2.0 * std::f64::consts::PI);
        sup = sup.max((free.density(x) - semicircle).abs());
    }
    judge.le(
        "semicircle_sup_err",
        sup,
        "density_semicircle",
        tols.density_semicircle,
    );

    let inp = inputs(&[
        ("q_values", "0, 0.3, 0.6".into()),
        ("moment_orders", "0..=8".into()),
        ("semicircle_points", "1001".into()),
    ]);
    Ok((judge, inp))
}
