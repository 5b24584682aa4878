use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{InteractionGraph, UserId};
use crate::{Error, Result};

/// Column layout of an edge-list file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeFormat {
    /// Two or three columns, decided per line.
    #[default]
    Auto,
    /// `source target`
    Pairs,
    /// `source target count`
    Counted,
}

impl FromStr for EdgeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(EdgeFormat::Auto),
            "pairs" | "2col" => Ok(EdgeFormat::Pairs),
            "counted" | "3col" => Ok(EdgeFormat::Counted),
            other => Err(Error::config(format!(
                "unknown edge format {other:?} (expected auto, pairs, counted)"
            ))),
        }
    }
}

pub fn ingest_edges(path: &Path, format: EdgeFormat) -> Result<InteractionGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_edges(file, format, path)
}

/// Parse an edge list. `origin` only labels error messages.
pub fn read_edges<R: Read>(reader: R, format: EdgeFormat, origin: &Path) -> Result<InteractionGraph> {
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let bad = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            msg,
        };
        let expected_ok = match format {
            EdgeFormat::Auto => fields.len() == 2 || fields.len() == 3,
            EdgeFormat::Pairs => fields.len() == 2,
            EdgeFormat::Counted => fields.len() == 3,
        };
        if !expected_ok {
            return Err(bad(format!(
                "expected {} columns, found {}",
                match format {
                    EdgeFormat::Auto => "2 or 3",
                    EdgeFormat::Pairs => "2",
                    EdgeFormat::Counted => "3",
                },
                fields.len()
            )));
        }
        let parse_id = |s: &str| {
            s.parse::<u64>()
                .map(UserId)
                .map_err(|_| bad(format!("invalid user id {s:?}")))
        };
        let source = parse_id(fields[0])?;
        let target = parse_id(fields[1])?;
        let count = match fields.get(2) {
            Some(c) => match c.parse::<u64>() {
                Ok(0) | Err(_) => return Err(bad(format!("invalid count {c:?}"))),
                Ok(v) => v,
            },
            None => 1,
        };
        records.push((source, target, count));
    }
    InteractionGraph::from_records(records)
}

/// Write the canonical three-column form: aggregated, sorted by
/// (source, target), tab-separated.
pub fn write_edges<W: Write>(graph: &InteractionGraph, mut out: W) -> std::io::Result<()> {
    for e in graph.edges() {
        writeln!(out, "{}\t{}\t{}", e.source, e.target, e.count)?;
    }
    out.flush()
}

pub fn export_edges(graph: &InteractionGraph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_edges(graph, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RetweetEdge;
    use proptest::prelude::*;

    fn parse(text: &str, format: EdgeFormat) -> Result<InteractionGraph> {
        read_edges(text.as_bytes(), format, Path::new("<mem>"))
    }

    #[test]
    fn two_column_duplicates_sum() {
        let g = parse("1 2\n1 2\n2 3\n", EdgeFormat::Auto).unwrap();
        let e: Vec<_> = g.edges().collect();
        assert_eq!(e[0], RetweetEdge { source: UserId(1), target: UserId(2), count: 2 });
        assert_eq!(e[1], RetweetEdge { source: UserId(2), target: UserId(3), count: 1 });
    }

    #[test]
    fn empty_and_comment_only() {
        assert_eq!(parse("", EdgeFormat::Auto).unwrap().num_users(), 0);
        assert_eq!(parse("# header\n\n", EdgeFormat::Auto).unwrap().num_users(), 0);
    }

    #[test]
    fn three_column_count() {
        let g = parse("1 2 5\n", EdgeFormat::Counted).unwrap();
        assert_eq!(g.edges().next().unwrap().count, 5);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("1 2\n# c\n1 x\n", EdgeFormat::Auto).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("1 2 3\n", EdgeFormat::Pairs).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse("1 2 0\n", EdgeFormat::Auto).is_err());
    }

    proptest! {
        #[test]
        fn export_ingest_round_trip(
            recs in proptest::collection::vec((0u64..20, 0u64..20, 1u64..4), 0..50)
        ) {
            let text: String = recs.iter().map(|(s, t, c)| format!("{s}\t{t}\t{c}\n")).collect();
            let g = parse(&text, EdgeFormat::Auto).unwrap();
            let mut buf = Vec::new();
            write_edges(&g, &mut buf).unwrap();
            let g2 = parse(std::str::from_utf8(&buf).unwrap(), EdgeFormat::Counted).unwrap();
            prop_assert_eq!(g.edges().collect::<Vec<_>>(), g2.edges().collect::<Vec<_>>());
            let mut buf2 = Vec::new();
            write_edges(&g2, &mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
        }
    }
}
