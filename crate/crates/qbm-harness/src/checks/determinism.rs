//! Byte-level reproducibility of the emitted tables.

use super::{inputs, CheckCtx};
use crate::emit::{emit_plotdata, PlotKind};
use crate::report::Judge;
use anyhow::Result;
use std::collections::BTreeMap;
use std::fs;

pub fn determinism(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let dir_a = tempfile::tempdir()?;
    let dir_b = tempfile::tempdir()?;
    let mut identical = true;
    for kind in PlotKind::ALL {
        let first = emit_plotdata(kind, &ctx.cfg, dir_a.path())?;
        let second = emit_plotdata(kind, &ctx.cfg, dir_b.path())?;
        let bytes_a = fs::read(&first)?;
        let bytes_b = fs::read(&second)?;
        judge.note(&format!("bytes_{}", kind.name()), bytes_a.len() as f64);
        if bytes_a != bytes_b {
            identical = false;
        }
    }
    judge.require(identical, "repeated runs emitted different bytes");
    let inp = inputs(&[
        ("tables", "density, levy_decay, correction, wong_zakai".into()),
        ("runs", "2, same config and seed".into()),
    ]);
    Ok((judge, inp))
}
