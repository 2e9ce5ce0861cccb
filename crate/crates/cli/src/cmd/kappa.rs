// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use gxli_core::agreement::{fleiss_kappa, RatingTable};
use serde_json::Value;

use crate::args::{Format, KappaCmd};
use crate::fail::{Classify, CliResult};
use crate::io::{emit, emit_json, read_text};

pub fn run(cmd: KappaCmd, out: Option<&Path>, format: Option<Format>) -> CliResult {
    let KappaCmd::Compute { input, raters } = cmd;
    let text = read_text(&input)?;
    let is_json = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
    let table = if is_json {
        let v: Value = serde_json::from_str(&text).data(format!("bad JSON {}", input.display()))?;
        if v.get("splits").is_some() {
            RatingTable::from_splits_json(&text)
        } else {
            // A bare `{"6-0": 1693, ...}` map; raters come from the flag.
            let splits: BTreeMap<String, u64> = serde_json::from_value(v).data("split frequencies")?;
            RatingTable::from_splits(raters, &splits)
        }
    } else {
        RatingTable::from_csv(text.as_bytes())
    }
    .data(format!("bad rating table {}", input.display()))?;
    let k = fleiss_kappa(&table).data("kappa undefined")?.rounded();
    match format {
        Some(Format::Table) => emit(out, &format!("P_bar  {:.4}\nP_e    {:.4}\nkappa  {:.4}\n", k.p_bar, k.p_e, k.kappa)),
        Some(Format::Csv) => emit(out, &format!("P_bar,P_e,kappa\n{:.4},{:.4},{:.4}\n", k.p_bar, k.p_e, k.kappa)),
        _ => emit_json(out, &k),
    }
}
