// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{extract_choice, fpr_acc, EvalError, Extracted, Mode, VqaSample};
use crate::lang::{DimensionTag, Lang};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellStats {
    pub total: u64,
    pub correct: u64,
    /// Responses with no option letter; already counted as wrong.
    pub unparsed: u64,
}

impl CellStats {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub model: String,
    pub mode: Mode,
    pub layer: Option<usize>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    #[serde(default)]
    pub dim_filter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: RunMeta,
    pub cells: BTreeMap<Lang, BTreeMap<DimensionTag, CellStats>>,
    /// Fractions in [0, 1]; only languages with all eight dimensions.
    pub fpr_acc: BTreeMap<Lang, f64>,
}

impl EvalReport {
    /// Builds a report from counts, filling in FPR-ACC where defined.
    pub fn from_cells(meta: RunMeta, cells: BTreeMap<Lang, BTreeMap<DimensionTag, CellStats>>) -> Self {
        let fpr_acc = cells
            .iter()
            .filter_map(|(&lang, dims)| {
                let acc: BTreeMap<_, _> = dims.iter().map(|(&d, c)| (d, c.accuracy())).collect();
                fpr_acc(&acc).ok().map(|v| (lang, v))
            })
            .collect();
        EvalReport { meta, cells, fpr_acc }
    }

    pub fn accuracy(&self, lang: Lang, dim: DimensionTag) -> Option<f64> {
        self.cells.get(&lang)?.get(&dim).map(CellStats::accuracy)
    }

    pub fn unparsed(&self) -> u64 {
        self.cells.values().flat_map(|d| d.values()).map(|c| c.unparsed).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fixed-width table, percentages with one decimal.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<5}", "lang");
        for d in DimensionTag::SCORED {
            let _ = write!(out, "{:>7}", d.as_str());
        }
        let _ = writeln!(out, "{:>9}{:>10}", "FPR-ACC", "unparsed");
        for (lang, dims) in &self.cells {
            let _ = write!(out, "{:<5}", lang.as_str());
            for d in DimensionTag::SCORED {
                match dims.get(&d) {
                    Some(c) => {
                        let _ = write!(out, "{:>7.1}", c.accuracy() * 100.0);
                    }
                    None => {
                        let _ = write!(out, "{:>7}", "-");
                    }
                }
            }
            let fpr = self.fpr_acc.get(lang).map_or("-".to_string(), |v| format!("{:.1}", v * 100.0));
            let unparsed: u64 = dims.values().map(|c| c.unparsed).sum();
            let _ = writeln!(out, "{fpr:>9}{unparsed:>10}");
        }
        out
    }

    /// `lang,dimension,total,correct,unparsed,accuracy` per cell.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lang", "dimension", "total", "correct", "unparsed", "accuracy"])?;
        for (lang, dims) in &self.cells {
            for (dim, c) in dims {
                out.write_record([
                    lang.as_str().to_string(),
                    dim.as_str().to_string(),
                    c.total.to_string(),
                    c.correct.to_string(),
                    c.unparsed.to_string(),
                    c.accuracy().to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct ResponseLine {
    id: serde_json::Value,
    response: String,
}

/// JSONL `{"id": ..., "response": "..."}`; later lines win on repeated ids.
pub fn parse_responses(text: &str) -> Result<HashMap<String, String>, EvalError> {
    let mut out = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let r: ResponseLine =
            serde_json::from_str(raw).map_err(|e| EvalError::ParseError { line: i + 1, message: e.to_string() })?;
        let id = match r.id {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        out.insert(id, r.response);
    }
    Ok(out)
}

pub fn load_responses(path: impl AsRef<Path>) -> Result<HashMap<String, String>, EvalError> {
    parse_responses(&std::fs::read_to_string(path)?)
}

/// Exact-match scoring; every sample needs a response.
pub fn score(
    samples: &[VqaSample],
    responses: &HashMap<String, String>,
    meta: RunMeta,
) -> Result<EvalReport, EvalError> {
    let mut cells: BTreeMap<Lang, BTreeMap<DimensionTag, CellStats>> = BTreeMap::new();
    for s in samples {
        let text = responses.get(&s.id).ok_or_else(|| EvalError::MissingResponse(s.id.clone()))?;
        let cell = cells.entry(s.lang).or_default().entry(s.dimension).or_default();
        cell.total += 1;
        match extract_choice(text, meta.mode) {
            Extracted::Choice(c) if c == s.answer => cell.correct += 1,
            Extracted::Choice(_) => {}
            Extracted::Unparsed => cell.unparsed += 1,
        }
    }
    Ok(EvalReport::from_cells(meta, cells))
}

/// Signed change in percentage points, rounded to one decimal.
fn delta_pp(before: f64, after: f64) -> f64 {
    ((after - before) * 1000.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellDelta {
    pub lang: Lang,
    pub dimension: DimensionTag,
    /// Percentages.
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FprDelta {
    pub lang: Lang,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub cells: Vec<CellDelta>,
    pub fpr_acc: Vec<FprDelta>,
}

/// `↑1.5`, `↓0.3`, `0.0`.
pub fn marker(delta: f64) -> String {
    if delta > 0.0 {
        format!("↑{delta:.1}")
    } else if delta < 0.0 {
        format!("↓{:.1}", -delta)
    } else {
        "0.0".to_string()
    }
}

impl DeltaReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<5}", "lang");
        for d in DimensionTag::SCORED {
            let _ = write!(out, "{:>7}", d.as_str());
        }
        let _ = writeln!(out, "{:>20}", "FPR-ACC");
        let langs: BTreeSet<Lang> = self.cells.iter().map(|c| c.lang).collect();
        for lang in langs {
            let _ = write!(out, "{:<5}", lang.as_str());
            for d in DimensionTag::SCORED {
                let cell = self.cells.iter().find(|c| c.lang == lang && c.dimension == d);
                let _ = write!(out, "{:>7}", cell.map_or("-".to_string(), |c| marker(c.delta)));
            }
            match self.fpr_acc.iter().find(|f| f.lang == lang) {
                Some(f) => {
                    let text = format!("{:.1} \\ {:.1} {}", f.before, f.after, marker(f.delta));
                    let _ = writeln!(out, "{text:>20}");
                }
                None => {
                    let _ = writeln!(out, "{:>20}", "-");
                }
            }
        }
        out
    }
}

fn coverage(r: &EvalReport) -> BTreeSet<(Lang, DimensionTag)> {
    r.cells.iter().flat_map(|(&l, dims)| dims.keys().map(move |&d| (l, d))).collect()
}

pub fn compare_runs(before: &EvalReport, after: &EvalReport) -> Result<DeltaReport, EvalError> {
    let (a, b) = (coverage(before), coverage(after));
    if a != b {
        let describe = |(l, d): &(Lang, DimensionTag), side: &str| format!("{l}/{d} only in {side}");
        let msg = a
            .difference(&b)
            .map(|c| describe(c, "before"))
            .chain(b.difference(&a).map(|c| describe(c, "after")))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(EvalError::CoverageMismatch(msg));
    }
    let to_pct = |x: f64| x * 100.0;
    let cells = a
        .iter()
        .map(|&(lang, dimension)| {
            let x = to_pct(before.accuracy(lang, dimension).expect("covered"));
            let y = to_pct(after.accuracy(lang, dimension).expect("covered"));
            CellDelta { lang, dimension, before: x, after: y, delta: delta_pp(x / 100.0, y / 100.0) }
        })
        .collect();
    let fpr_acc = before
        .fpr_acc
        .iter()
        .filter_map(|(&lang, &x)| {
            after.fpr_acc.get(&lang).map(|&y| FprDelta { lang, before: to_pct(x), after: to_pct(y), delta: delta_pp(x, y) })
        })
        .collect();
    Ok(DeltaReport { cells, fpr_acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{fpr_acc_with, Choice, DimensionWeights};

    fn sample(id: &str, lang: Lang, dim: DimensionTag, answer: Choice) -> VqaSample {
        VqaSample {
            id: id.into(),
            lang,
            dimension: dim,
            question: "q".into(),
            options: ["a".into(), "b".into(), "c".into(), "d".into()],
            answer,
            image_refs: vec!["img".into()],
            line: 0,
        }
    }

    fn uniform(lang: Lang, correct: u64, total: u64) -> BTreeMap<Lang, BTreeMap<DimensionTag, CellStats>> {
        let dims = DimensionTag::SCORED.into_iter().map(|d| (d, CellStats { total, correct, unparsed: 0 })).collect();
        [(lang, dims)].into()
    }

    #[test]
    fn one_sample_per_dimension_tally() {
        let samples: Vec<_> = DimensionTag::SCORED
            .into_iter()
            .enumerate()
            .map(|(i, d)| sample(&format!("s{i}"), Lang::EN, d, Choice::ALL[i % 4]))
            .collect();
        // Correct on AU, AP, WF, RI, SI; wrong on WI; unparsed on AEL, REL.
        let replies = ["A", "the answer is B", "C.", "A", "unsure", "no idea", "(C)", "final: D"];
        let responses: HashMap<_, _> = samples.iter().zip(replies).map(|(s, r)| (s.id.clone(), r.to_string())).collect();
        let report = score(&samples, &responses, RunMeta::default()).unwrap();
        let expected = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        for (d, e) in DimensionTag::SCORED.into_iter().zip(expected) {
            assert_eq!(report.accuracy(Lang::EN, d), Some(e), "{d}");
        }
        assert_eq!(report.unparsed(), 2);
        let recomputed = fpr_acc_with(
            &DimensionTag::SCORED.into_iter().zip(expected).collect(),
            &DimensionWeights::default(),
        )
        .unwrap();
        assert!((report.fpr_acc[&Lang::EN] - recomputed).abs() < 1e-9);
        assert!((recomputed - 6.5 / 9.5).abs() < 1e-12);
    }

    #[test]
    fn all_correct_and_missing_response() {
        let samples = vec![sample("a", Lang::FR, DimensionTag::WF, Choice::D)];
        let all: HashMap<_, _> = [("a".to_string(), "D".to_string())].into();
        let r = score(&samples, &all, RunMeta::default()).unwrap();
        assert_eq!(r.accuracy(Lang::FR, DimensionTag::WF), Some(1.0));
        assert!(r.fpr_acc.is_empty());
        assert!(matches!(score(&samples, &HashMap::new(), RunMeta::default()), Err(EvalError::MissingResponse(_))));
    }

    #[test]
    fn score_ignores_sample_order() {
        let mut samples: Vec<_> = (0..40)
            .map(|i| sample(&i.to_string(), Lang::ALL[i % 6], DimensionTag::SCORED[i % 8], Choice::ALL[i % 4]))
            .collect();
        let responses: HashMap<_, _> =
            (0..40).map(|i| (i.to_string(), ["A", "B", "x", "D", "C"][i % 5].to_string())).collect();
        let r1 = score(&samples, &responses, RunMeta::default()).unwrap();
        samples.reverse();
        samples.swap(3, 17);
        assert_eq!(score(&samples, &responses, RunMeta::default()).unwrap(), r1);
    }

    #[test]
    fn compare_identical_and_known_delta() {
        let before = EvalReport::from_cells(RunMeta::default(), uniform(Lang::ZH, 719, 1000));
        let same = compare_runs(&before, &before).unwrap();
        assert!(same.cells.iter().all(|c| c.delta == 0.0) && same.fpr_acc[0].delta == 0.0);

        let after = EvalReport::from_cells(RunMeta::default(), uniform(Lang::ZH, 828, 1000));
        let d = compare_runs(&before, &after).unwrap();
        assert_eq!(d.fpr_acc[0].delta, 10.9);
        assert_eq!(marker(d.fpr_acc[0].delta), "↑10.9");
        assert_eq!(marker(-0.4), "↓0.4");
        assert!(d.render_table().contains("71.9 \\ 82.8 ↑10.9"));
    }

    #[test]
    fn compare_requires_same_coverage() {
        let mut cells = uniform(Lang::EN, 5, 10);
        cells.extend(uniform(Lang::RU, 5, 10));
        let full = EvalReport::from_cells(RunMeta::default(), cells.clone());
        cells.get_mut(&Lang::RU).unwrap().remove(&DimensionTag::AEL);
        let partial = EvalReport::from_cells(RunMeta::default(), cells);
        match compare_runs(&full, &partial) {
            Err(EvalError::CoverageMismatch(m)) => assert!(m.contains("RU/AEL")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_table_and_csv_outputs() {
        let meta = RunMeta { model: "toy".into(), mode: Mode::Reasoning, layer: Some(6), alpha: Some(0.2), k: Some(4), dim_filter: false };
        let r = EvalReport::from_cells(meta, uniform(Lang::JA, 3, 4));
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
        let table = r.render_table();
        assert!(table.lines().nth(1).unwrap().starts_with("JA"));
        assert!(table.contains("75.0"));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "JA,AU,4,3,0,0.75");
    }

    #[test]
    fn responses_jsonl() {
        let r = parse_responses("{\"id\":\"a\",\"response\":\"B\"}\n\n{\"id\":7,\"response\":\"C\"}\n").unwrap();
        assert_eq!(r["a"], "B");
        assert_eq!(r["7"], "C");
        assert!(matches!(parse_responses("{\"id\":1}"), Err(EvalError::ParseError { line: 1, .. })));
    }
}
