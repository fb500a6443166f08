//! TREC run files: `qid Q0 docid rank score run_tag`, score with 6 decimals.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::metrics::{RunEntry, RunFile};

/// Writes every query in `run`, optionally preceded by `# ` comment lines.
pub fn write_run(
    out: &mut impl Write,
    run: &RunFile,
    tag: &str,
    comments: &[String],
) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    for (qid, entries) in run {
        for e in entries {
            writeln!(out, "{qid} Q0 {} {} {:.6} {tag}", e.doc_id, e.rank, e.score)?;
        }
    }
    Ok(())
}

/// Reads a run, skipping `#` comments; entries are ordered by rank.
pub fn read_run(path: &Path) -> Result<RunFile> {
    let reader = BufReader::new(File::open(path)?);
    let mut run = RunFile::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 6 fields, got {}", f.len()),
            ));
        }
        let rank = f[3]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("invalid rank `{}`", f[3])))?;
        let score = f[4]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("invalid score `{}`", f[4])))?;
        run.entry(f[0].to_owned()).or_default().push(RunEntry {
            doc_id: f[2].to_owned(),
            score,
            rank,
        });
    }
    for entries in run.values_mut() {
        entries.sort_by_key(|e| e.rank);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::metrics::rank_scores;

    #[test]
    fn write_read_write_is_identical() {
        let mut run = RunFile::new();
        run.insert(
            "q1".into(),
            rank_scores(vec![
                ("d2".into(), 0.5),
                ("d1".into(), 1.25),
                ("d3".into(), 0.5),
            ]),
        );
        run.insert("q2".into(), rank_scores(vec![("x".into(), -3.0)]));
        let mut first = Vec::new();
        write_run(&mut first, &run, "tag", &["seed=3".into()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.txt");
        std::fs::write(&path, &first).unwrap();
        let back = read_run(&path).unwrap();
        assert_eq!(back, run);
        let mut second = Vec::new();
        write_run(&mut second, &back, "tag", &["seed=3".into()]).unwrap();
        assert_eq!(first, second);
        let text = String::from_utf8(first).unwrap();
        assert!(text.contains("q1 Q0 d1 1 1.250000 tag"));
        assert!(text.contains("q1 Q0 d2 2 0.500000 tag\nq1 Q0 d3 3 0.500000 tag"));
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.txt");
        std::fs::write(&path, "q Q0 d 1 0.5 t\nq Q0 d x 0.5 t\n").unwrap();
        assert!(matches!(read_run(&path), Err(Error::Parse { line: 2, .. })));
    }
}
