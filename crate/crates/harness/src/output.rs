//! CSV tables with a provenance comment line, and the JSON summary.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::HarnessError;
use crate::report::{RunSummary, Table};

/// Writes `table` as `<dir>/<scenario>_<table>.csv`, preceded by one comment
/// line carrying the config hash.
pub fn write_table(dir: &Path, scenario: &str, hash: &str, table: &Table) -> Result<PathBuf, HarnessError> {
    let path = dir.join(format!("{scenario}_{}.csv", table.name));
    let mut buf = Vec::new();
    writeln!(buf, "# scenario={scenario} table={} config_sha256={hash}", table.name)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    std::fs::write(&path, buf)?;
    Ok(path)
}

pub fn write_summary(dir: &Path, summary: &RunSummary) -> Result<PathBuf, HarnessError> {
    let path = dir.join(format!("{}_summary.json", summary.scenario));
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Header and rows of a CSV written by [`write_table`]; comment lines are skipped.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("demo", &["a", "b"]);
        t.push(vec!["1e0".into(), "x,y".into()]);
        let p = write_table(dir.path(), "s", "abc", &t).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# scenario=s table=demo config_sha256=abc\n"));
        let (h, rows) = read_table(&p).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows, vec![vec!["1e0".to_string(), "x,y".to_string()]]);
    }
}
