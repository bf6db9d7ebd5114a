//! Rendering of result documents to JSON and CSV.
//!
//! JSON carries full double precision; CSV prints 6 significant digits.
//! Infinite confidence-set endpoints appear as `"inf"` / `"-inf"` in both.

use shiftshare_core::{ConfidenceSetShape, FitResult, InferenceResult};
use std::path::Path;

pub struct EstimateDocument<'a> {
    pub mode: &'a str,
    pub config_hash: String,
    pub level: f64,
    pub null_value: f64,
    pub fit: &'a FitResult,
    pub results: &'a [InferenceResult],
    pub warnings: &'a [String],
}

fn sig6(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.5e}")
    }
}

impl EstimateDocument<'_> {
    pub fn to_json(&self) -> String {
        let doc = serde_json::json!({
            "mode": self.mode,
            "config_hash": self.config_hash,
            "level": self.level,
            "null_value": self.null_value,
            "fit": self.fit,
            "results": self.results,
            "warnings": self.warnings,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("document");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,estimate,se,ci_shape,ci_lo,ci_hi,effective_se,level\n");
        for r in self.results {
            let shape = match r.confset.shape {
                ConfidenceSetShape::Interval => "interval",
                ConfidenceSetShape::UnionOfTwoRays => "union_of_two_rays",
                ConfidenceSetShape::FullLine => "full_line",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                sig6(r.estimate),
                r.se.map(sig6).unwrap_or_default(),
                shape,
                sig6(r.confset.lo),
                sig6(r.confset.hi),
                sig6(r.confset.effective_se),
                self.level,
            ));
        }
        out
    }
}

pub fn emit(out: Option<&Path>, rendered: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, rendered),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}
