use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use hwrec::ranking::{competition_ranks, write_csv};
use hwrec::RankingTable;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// Aligned text table; tied rows share a rank and are marked with `=`.
pub fn ranking_text(table: &RankingTable) -> String {
    let ranks = competition_ranks(table);
    let tied: std::collections::HashSet<usize> = table.ties.iter().flatten().copied().collect();
    let width = table.candidate_ids.iter().map(String::len).max().unwrap_or(0).max("model".len());
    let mut out = format!("{:>4}  {:<width$}  {:>14}  method: {}\n", "rank", "model", "score", table.method);
    for (i, id) in table.candidate_ids.iter().enumerate() {
        let mark = if tied.contains(&i) { "=" } else { " " };
        out.push_str(&format!("{:>3}{mark}  {id:<width$}  {:>14.6}\n", ranks[i], table.scores[i]));
    }
    if !table.ties.is_empty() {
        out.push_str("= tied scores, listed by id\n");
    }
    out
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

/// Writes a ranking as CSV when the path ends in `.csv`, JSON otherwise.
/// `extra` replaces the bare table in JSON output.
pub fn export<T: Serialize>(path: &Path, table: &RankingTable, extra: Option<&T>) -> Result<()> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut buf = Vec::new();
        write_csv(table, &mut buf)?;
        fs::write(path, buf)
    } else {
        let text = match extra {
            Some(v) => serde_json::to_string_pretty(v)?,
            None => serde_json::to_string_pretty(table)?,
        };
        fs::write(path, text)
    }
    .with_context(|| format!("writing {}", path.display()))
}
