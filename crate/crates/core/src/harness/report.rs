//! Report files.
//!
//! A report directory holds:
//!
//! * `report.json`, the full results plus runtime metadata,
//! * `results.csv`, one row per `(mechanism, k)` for plotting F against k,
//! * `table.csv`, the best row per mechanism with columns
//!   `domain,k,mechanism,f_with_retrieval,f_without_retrieval`,
//! * `examples.csv`, per-example counts of single-k evaluations,
//! * `report.txt`, a human-readable summary.
//!
//! Every file is a pure function of `report.json`, so regenerating from it
//! reproduces the same bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::Split;
use crate::corpus::ExampleId;
use crate::error::{Error, Result};
use crate::eval::{EvalCounts, EvalResult};
use crate::retrieval::Mechanism;

const FORMAT: &str = "rener-report";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Sweep,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mechanism: Mechanism,
    pub k: usize,
    pub with_retrieval: EvalResult,
    pub without_retrieval: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub mechanism: Mechanism,
    pub k: usize,
    pub f_with_retrieval: f64,
    pub f_without_retrieval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRow {
    pub id: ExampleId,
    pub mechanism: Mechanism,
    pub k: usize,
    #[serde(flatten)]
    pub counts: EvalCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub elapsed_ms: u64,
    pub cache_hits: u64,
    pub backend_calls: u64,
    pub cache_hit_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub kind: ReportKind,
    pub domain: String,
    pub split: Split,
    pub model: String,
    pub provider: String,
    pub template_version: String,
    pub config_digest: String,
    pub aggregation: String,
    pub baseline: Mechanism,
    pub rows: Vec<ReportRow>,
    pub best: Vec<BestRow>,
    #[serde(default)]
    pub examples: Vec<ExampleRow>,
    pub runtime: Runtime,
}

/// Per mechanism, in order of first appearance, the row with the highest
/// F with retrieval; ties go to the smallest k.
pub fn best_rows(rows: &[ReportRow]) -> Vec<BestRow> {
    let mut best: Vec<&ReportRow> = Vec::new();
    for row in rows {
        match best.iter_mut().find(|b| b.mechanism == row.mechanism) {
            None => best.push(row),
            Some(current) => {
                let (f, cf) = (row.with_retrieval.f1, current.with_retrieval.f1);
                if f > cf || (f == cf && row.k < current.k) {
                    *current = row;
                }
            }
        }
    }
    best.into_iter()
        .map(|r| BestRow {
            mechanism: r.mechanism,
            k: r.k,
            f_with_retrieval: r.with_retrieval.f1,
            f_without_retrieval: r.without_retrieval.f1,
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn pct(f: f64) -> String {
    format!("{:.2}", f * 100.0)
}

impl Report {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: ReportKind,
        domain: &str,
        split: Split,
        model: &str,
        provider: &str,
        template_version: &str,
        config_digest: &str,
        seed: u64,
        rows: Vec<ReportRow>,
        examples: Vec<ExampleRow>,
        runtime: Runtime,
    ) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            kind,
            domain: domain.into(),
            split,
            model: model.into(),
            provider: provider.into(),
            template_version: template_version.into(),
            config_digest: config_digest.into(),
            aggregation: "micro".into(),
            baseline: Mechanism::FixedRandom { seed },
            best: best_rows(&rows),
            rows,
            examples,
            runtime,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Self = serde_json::from_str(&raw)?;
        if report.format != FORMAT || report.version != VERSION {
            return Err(Error::Format(format!(
                "{}: expected {FORMAT} v{VERSION}, found {} v{}",
                path.display(),
                report.format,
                report.version
            )));
        }
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn results_csv(&self) -> String {
        let mut out = format!("domain,split,mechanism,k,{},f1_without_retrieval\n", EvalResult::CSV_HEADER);
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6}",
                csv_field(&self.domain),
                self.split,
                csv_field(&row.mechanism.to_string()),
                row.k,
                row.with_retrieval.csv_row(),
                row.without_retrieval.f1
            );
        }
        out
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("domain,k,mechanism,f_with_retrieval,f_without_retrieval\n");
        for best in &self.best {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                csv_field(&self.domain),
                best.k,
                csv_field(&best.mechanism.to_string()),
                best.f_with_retrieval,
                best.f_without_retrieval
            );
        }
        out
    }

    pub fn examples_csv(&self) -> String {
        let mut out = String::from("id,mechanism,k,tp,fp,fn\n");
        for row in &self.examples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(row.id.as_str()),
                csv_field(&row.mechanism.to_string()),
                row.k,
                row.counts.tp,
                row.counts.fp,
                row.counts.fn_
            );
        }
        out
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "RENER {} report: {} ({} split)", match self.kind {
            ReportKind::Sweep => "sweep",
            ReportKind::Eval => "evaluation",
        }, self.domain, self.split);
        let _ = writeln!(out, "model:            {} via {}", self.model, self.provider);
        let _ = writeln!(out, "template:         {}", self.template_version);
        let _ = writeln!(out, "config digest:    {}", self.config_digest);
        let _ = writeln!(out, "aggregation:      {}", self.aggregation);
        let _ = writeln!(out, "baseline:         {}", self.baseline);
        let _ = writeln!(
            out,
            "runtime:          {} ms, {} cache hits, {} backend calls, hit ratio {:.4}",
            self.runtime.elapsed_ms, self.runtime.cache_hits, self.runtime.backend_calls, self.runtime.cache_hit_ratio
        );
        out.push('\n');
        if self.best.is_empty() {
            out.push_str("no results\n");
            return out;
        }
        let width = self
            .best
            .iter()
            .map(|b| b.mechanism.to_string().len())
            .max()
            .unwrap_or(0)
            .max("mechanism".len());
        let _ = writeln!(out, "{:<12} {:>3}  {:<width$}  {:>8}  {:>8}", "domain", "k", "mechanism", "F with", "F w/o");
        for best in &self.best {
            let _ = writeln!(
                out,
                "{:<12} {:>3}  {:<width$}  {:>8}  {:>8}",
                self.domain,
                best.k,
                best.mechanism.to_string(),
                pct(best.f_with_retrieval),
                pct(best.f_without_retrieval)
            );
        }
        out
    }

    /// Writes all report files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("report.json", self.to_json()),
            ("results.csv", self.results_csv()),
            ("table.csv", self.table_csv()),
            ("examples.csv", self.examples_csv()),
            ("report.txt", self.text()),
        ];
        let mut written = Vec::new();
        for (name, content) in files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }

    /// Rewrites every report file from an existing `report.json`.
    pub fn regenerate(json: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
        Self::load(json)?.write(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mechanism: &str, k: usize, f_counts: EvalCounts) -> ReportRow {
        ReportRow {
            mechanism: mechanism.parse().unwrap(),
            k,
            with_retrieval: EvalResult::from_counts(f_counts),
            without_retrieval: EvalResult::default(),
        }
    }

    fn report(rows: Vec<ReportRow>) -> Report {
        Report::new(ReportKind::Sweep, "politics", Split::Validation, "m", "p", "t@1", "d", 7, rows, vec![], Runtime::default())
    }

    #[test]
    fn best_row_prefers_higher_f_then_smaller_k() {
        let rows = vec![
            row("bm25", 1, EvalCounts::new(1, 1, 1)),
            row("bm25", 2, EvalCounts::new(2, 0, 0)),
            row("semantic", 1, EvalCounts::new(1, 0, 0)),
            row("bm25", 3, EvalCounts::new(3, 0, 0)),
        ];
        let best = best_rows(&rows);
        assert_eq!(best.len(), 2);
        assert_eq!((best[0].mechanism.to_string(), best[0].k), ("bm25".into(), 2));
        assert_eq!((best[1].mechanism.to_string(), best[1].k), ("semantic".into(), 1));
    }

    #[test]
    fn table_has_the_expected_columns() {
        let r = report(vec![row("bm25", 13, EvalCounts::new(1, 0, 0))]);
        let table = r.table_csv();
        assert_eq!(table.lines().next().unwrap(), "domain,k,mechanism,f_with_retrieval,f_without_retrieval");
        assert_eq!(table.lines().nth(1).unwrap(), "politics,13,bm25,1.000000,0.000000");
        assert!(r.text().contains("aggregation:      micro"));
        assert!(r.to_json().contains("\"aggregation\": \"micro\""));
    }

    #[test]
    fn empty_report_is_valid_and_regeneration_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let empty = report(vec![]);
        empty.write(dir.path()).unwrap();
        assert!(Report::load(&dir.path().join("report.json")).unwrap().rows.is_empty());

        let full = report(vec![row("hybrid(60)", 4, EvalCounts::new(3, 1, 2)), row("semantic+mmr(0.5)", 4, EvalCounts::default())]);
        let first = dir.path().join("a");
        let second = dir.path().join("b");
        let written = full.write(&first).unwrap();
        Report::regenerate(&first.join("report.json"), &second).unwrap();
        for path in written {
            let name = path.file_name().unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name:?}");
        }
    }
}
