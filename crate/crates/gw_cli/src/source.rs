//! Source files: `{ "alphabet": [n1, n2], "probs": [[...]], "d1": [[...]], "d2": [[...]] }`.
//! Missing distortion matrices default to Hamming distortion.

use anyhow::{bail, Context, Result};
use gray_wyner::model::{DistortionSpec, JointPmf, Validate};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceFile {
    alphabet: [usize; 2],
    probs: Vec<Vec<f64>>,
    #[serde(default)]
    d1: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    d2: Option<Vec<Vec<f64>>>,
}

fn check_rows(name: &str, rows: &[Vec<f64>], want_rows: usize, want_cols: Option<usize>) -> Result<()> {
    if rows.len() != want_rows {
        bail!("{} has {} rows, expected {}", name, rows.len(), want_rows);
    }
    let cols = want_cols.unwrap_or_else(|| rows.first().map_or(0, Vec::len));
    if cols == 0 {
        bail!("{} row 0 is empty", name);
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            bail!("{} row {} has {} entries, expected {}", name, i, row.len(), cols);
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                bail!("{} row {} entry {} is {}; entries must be finite and non-negative", name, i, j, v);
            }
        }
    }
    Ok(())
}

/// Parses and validates a source description.
pub fn parse_source(text: &str) -> Result<(JointPmf, DistortionSpec)> {
    let f: SourceFile = serde_json::from_str(text)?;
    let [n1, n2] = f.alphabet;
    if n1 == 0 || n2 == 0 {
        bail!("alphabet sizes must be at least 1, got [{}, {}]", n1, n2);
    }
    check_rows("probs", &f.probs, n1, Some(n2))?;
    let pmf = JointPmf::from_rows(&f.probs)?;
    if let Err(v) = pmf.validate() {
        bail!("probs: {}", v);
    }
    let dist = match (&f.d1, &f.d2) {
        (None, None) => DistortionSpec::hamming(n1, n2),
        (Some(d1), Some(d2)) => {
            check_rows("d1", d1, n1, None)?;
            check_rows("d2", d2, n2, None)?;
            DistortionSpec::from_rows(d1, d2)?
        }
        _ => bail!("give both d1 and d2, or neither for Hamming distortion"),
    };
    if let Err(v) = dist.validate() {
        bail!("distortion: {}", v);
    }
    Ok((pmf, dist))
}

pub fn read_source(path: &Path) -> Result<(JointPmf, DistortionSpec)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_source(&text).with_context(|| format!("invalid source file {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_is_the_default_distortion() {
        let (pmf, dist) = parse_source(r#"{"alphabet":[2,2],"probs":[[0.4,0.1],[0.1,0.4]]}"#).unwrap();
        assert_eq!(pmf.p(1, 1), 0.4);
        assert_eq!((dist.d1(0, 1), dist.d2(1, 1)), (1.0, 0.0));
    }

    #[test]
    fn short_row_is_named() {
        let e = parse_source(r#"{"alphabet":[2,2],"probs":[[0.5,0.5],[0.0]]}"#).unwrap_err();
        assert_eq!(e.to_string(), "probs row 1 has 1 entries, expected 2");
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let e = parse_source("{\n\"alphabet\": [2,2],\n\"probs\": [[0.5 0.5]]\n}").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{}", e);
    }

    #[test]
    fn unnormalized_probs_are_rejected() {
        assert!(parse_source(r#"{"alphabet":[1,2],"probs":[[0.5,0.6]]}"#).is_err());
    }

    #[test]
    fn distortion_rows_must_match_the_alphabet() {
        let e = parse_source(r#"{"alphabet":[2,1],"probs":[[0.5],[0.5]],"d1":[[0,1]],"d2":[[0]]}"#).unwrap_err();
        assert_eq!(e.to_string(), "d1 has 1 rows, expected 2");
    }
}
