//! Small shared writers for the artifacts every experiment leaves behind:
//! CSV tables with the generating config embedded as a comment line, and a
//! pretty-printed JSON result document.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::HarnessError;

/// Every CSV emitted by the harness starts with one comment line carrying
/// the exact configuration that produced it, so a result file is enough to
/// rerun the experiment.
pub const CONFIG_COMMENT_PREFIX: &str = "# config = ";

/// Render a float for CSV output. Six decimals is enough to reconstruct
/// every quantity we export (visibilities, QBER, fitness scores) well below
/// their statistical noise, and NaN is spelled out so downstream parsers do
/// not have to guess.
pub fn fmt_float(value: f64) -> String {
    if value.is_nan() {
        "nan".to_owned()
    } else {
        format!("{value:.6}")
    }
}

/// Like [`fmt_float`] but for quantities that may be absent entirely.
pub fn fmt_opt(value: Option<f64>) -> String {
    fmt_float(value.unwrap_or(f64::NAN))
}

/// Write a CSV file: config comment, header, then rows. Rows are already
/// joined strings; the caller owns the column formatting.
pub fn write_csv(
    path: &Path,
    config_json: &str,
    header: &str,
    rows: &[String],
) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = String::with_capacity(rows.iter().map(|r| r.len() + 1).sum::<usize>() + 256);
    out.push_str(CONFIG_COMMENT_PREFIX);
    out.push_str(config_json);
    out.push('\n');
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Serialize a result document as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_render_fixed_width_and_nan_is_literal() {
        assert_eq!(fmt_float(0.5), "0.500000");
        assert_eq!(fmt_float(f64::NAN), "nan");
        assert_eq!(fmt_opt(None), "nan");
        assert_eq!(fmt_opt(Some(1.25)), "1.250000");
    }

    #[test]
    fn csv_round_trips_the_config_comment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("table.csv");
        write_csv(
            &path,
            "{\"answer\":42}",
            "a,b",
            &["1,2".to_owned(), "3,4".to_owned()],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let comment = lines.next().unwrap();
        assert!(comment.starts_with(CONFIG_COMMENT_PREFIX));
        let embedded: serde_json::Value =
            serde_json::from_str(comment.trim_start_matches(CONFIG_COMMENT_PREFIX)).unwrap();
        assert_eq!(embedded["answer"], 42);
        assert_eq!(lines.next(), Some("a,b"));
        assert_eq!(lines.collect::<Vec<_>>(), vec!["1,2", "3,4"]);
    }
}
