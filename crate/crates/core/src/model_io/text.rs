//! Line-oriented text fixtures.
//!
//! Concept pairs:
//!
//! ```text
//! # comment
//! concept male⇒female
//! 101	202
//! 103	204
//! ```
//!
//! Quadruples (ids ordered `Y(0,0) Y(0,1) Y(1,0) Y(1,1)`):
//!
//! ```text
//! quad male⇒female|lower⇒upper
//! 11 12 13 14
//! ```
//!
//! Labels: one label per line, parallel to the rows of an embedding set.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::types::{ConceptPairSet, ConceptQuadruple};
use crate::error::{Error, Result};

/// Yields (1-based line number, trimmed content) for non-blank, non-comment lines.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
}

fn parse_id(token: &str, line: usize) -> Result<usize> {
    token.parse::<usize>().map_err(|_| Error::MalformedLine {
        line,
        reason: format!("`{token}` is not a token id"),
    })
}

fn header_name<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(keyword)?;
    if rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

/// Parses concept-pair text. Structural invariants are enforced, ids are not
/// range-checked (see [`ConceptPairSet::validate`]).
pub fn parse_concept_pairs(text: &str) -> Result<Vec<ConceptPairSet>> {
    let mut sets: Vec<(String, Vec<(usize, usize)>)> = Vec::new();
    for (line_no, line) in content_lines(text) {
        if let Some(name) = header_name(line, "concept") {
            if name.is_empty() {
                return Err(Error::MalformedLine {
                    line: line_no,
                    reason: "concept header without a name".into(),
                });
            }
            sets.push((name.to_string(), Vec::new()));
            continue;
        }
        let Some((_, pairs)) = sets.last_mut() else {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: "pair before any `concept` header".into(),
            });
        };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: "expected `id0<TAB>id1`".into(),
            });
        }
        pairs.push((parse_id(fields[0], line_no)?, parse_id(fields[1], line_no)?));
    }
    if sets.is_empty() {
        return Err(Error::EmptyConcept("file defines no concepts".into()));
    }
    sets.into_iter()
        .map(|(name, pairs)| ConceptPairSet::new(name, pairs))
        .collect()
}

pub fn load_concept_pairs(
    path: impl AsRef<Path>,
    vocab_size: usize,
) -> Result<Vec<ConceptPairSet>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sets = parse_concept_pairs(&text)?;
    for set in &sets {
        set.validate(vocab_size)?;
    }
    Ok(sets)
}

pub fn format_concept_pairs(sets: &[ConceptPairSet]) -> String {
    let mut out = String::new();
    for set in sets {
        writeln!(out, "concept {}", set.name).unwrap();
        for (id0, id1) in &set.pairs {
            writeln!(out, "{id0}\t{id1}").unwrap();
        }
    }
    out
}

pub fn save_concept_pairs(path: impl AsRef<Path>, sets: &[ConceptPairSet]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_concept_pairs(sets)).map_err(|e| Error::io(path, e))
}

pub fn parse_quadruples(text: &str) -> Result<Vec<ConceptQuadruple>> {
    let mut quads = Vec::new();
    let mut pending: Option<(usize, String, String)> = None;
    for (line_no, line) in content_lines(text) {
        if let Some(names) = header_name(line, "quad") {
            if let Some((open, ..)) = pending {
                return Err(Error::MalformedLine {
                    line: open,
                    reason: "quad header without an id line".into(),
                });
            }
            let Some((w, z)) = names.split_once('|') else {
                return Err(Error::MalformedLine {
                    line: line_no,
                    reason: "expected `quad <W>|<Z>`".into(),
                });
            };
            let (w, z) = (w.trim(), z.trim());
            if w.is_empty() || z.is_empty() {
                return Err(Error::MalformedLine {
                    line: line_no,
                    reason: "empty concept name in quad header".into(),
                });
            }
            pending = Some((line_no, w.to_string(), z.to_string()));
            continue;
        }
        let Some((_, w, z)) = pending.take() else {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: "ids before any `quad` header".into(),
            });
        };
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(|t| parse_id(t, line_no))
            .collect::<Result<_>>()?;
        let ids: [usize; 4] = ids.try_into().map_err(|_| Error::MalformedLine {
            line: line_no,
            reason: "expected four token ids".into(),
        })?;
        quads.push(ConceptQuadruple::new(w, z, ids)?);
    }
    if let Some((open, ..)) = pending {
        return Err(Error::MalformedLine {
            line: open,
            reason: "quad header without an id line".into(),
        });
    }
    Ok(quads)
}

pub fn load_quadruples(path: impl AsRef<Path>, vocab_size: usize) -> Result<Vec<ConceptQuadruple>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let quads = parse_quadruples(&text)?;
    for quad in &quads {
        quad.validate(vocab_size)?;
    }
    Ok(quads)
}

pub fn format_quadruples(quads: &[ConceptQuadruple]) -> String {
    let mut out = String::new();
    for quad in quads {
        writeln!(out, "quad {}|{}", quad.names.0, quad.names.1).unwrap();
        let [a, b, c, d] = quad.ids;
        writeln!(out, "{a}\t{b}\t{c}\t{d}").unwrap();
    }
    out
}

pub fn save_quadruples(path: impl AsRef<Path>, quads: &[ConceptQuadruple]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_quadruples(quads)).map_err(|e| Error::io(path, e))
}

/// One label per line; a trailing newline does not add an empty label.
pub fn parse_labels(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect()
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_labels(&text))
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for label in labels {
        out.push_str(label);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_concepts_with_comments() {
        let text = "# fixture\nconcept male⇒female\n1\t2\n\n3\t4\nconcept lower⇒upper\n# x\n5\t6\n";
        let sets = parse_concept_pairs(text).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].name, "male⇒female");
        assert_eq!(sets[0].pairs, vec![(1, 2), (3, 4)]);
        assert_eq!(sets[1].pairs, vec![(5, 6)]);
    }

    #[test]
    fn empty_file_is_empty_concept() {
        assert!(matches!(
            parse_concept_pairs(""),
            Err(Error::EmptyConcept(_))
        ));
        assert!(matches!(
            parse_concept_pairs("# only a comment\n"),
            Err(Error::EmptyConcept(_))
        ));
    }

    #[test]
    fn header_without_pairs_is_empty_concept() {
        let err = parse_concept_pairs("concept a⇒b\nconcept c⇒d\n1\t2\n").unwrap_err();
        assert!(matches!(err, Error::EmptyConcept(msg) if msg.contains("a⇒b")));
    }

    #[test]
    fn self_pair_rejected() {
        let err = parse_concept_pairs("concept a⇒b\n5\t5\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateTokenInPair { id: 5, .. }));
    }

    #[test]
    fn pair_before_header_is_malformed() {
        let err = parse_concept_pairs("1\t2\n").unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn space_separated_pair_is_malformed() {
        let err = parse_concept_pairs("concept a\n1 2\n").unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn concepts_with_spaces_in_names() {
        let sets = parse_concept_pairs("concept verb ⇒ V + able\n0\t1\n").unwrap();
        assert_eq!(sets[0].name, "verb ⇒ V + able");
    }

    #[test]
    fn parses_quadruple_names() {
        let quads = parse_quadruples("quad male⇒female|lower⇒upper\n10 11 12 13\n").unwrap();
        assert_eq!(quads[0].names.0, "male⇒female");
        assert_eq!(quads[0].names.1, "lower⇒upper");
        assert_eq!(quads[0].ids, [10, 11, 12, 13]);
    }

    #[test]
    fn quadruple_with_repeated_id_rejected() {
        let err = parse_quadruples("quad a|b\n1 2 1 3\n").unwrap_err();
        assert!(matches!(err, Error::RepeatedQuadrupleId { id: 1, .. }));
    }

    #[test]
    fn quadruple_header_needs_ids() {
        assert!(matches!(
            parse_quadruples("quad a|b\n"),
            Err(Error::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_quadruples("quad a|b\n1 2 3\n"),
            Err(Error::MalformedLine { line: 2, .. })
        ));
    }

    #[test]
    fn text_round_trip_is_byte_identical() {
        let text = "concept a⇒b\n0\t1\n4\t2\nconcept c\n7\t3\n";
        assert_eq!(
            format_concept_pairs(&parse_concept_pairs(text).unwrap()),
            text
        );
        let quads = "quad a|b\n0\t1\t2\t3\n";
        assert_eq!(format_quadruples(&parse_quadruples(quads).unwrap()), quads);
    }
}
