//! Line-oriented N-Triples reader/writer for the supported subset:
//! absolute IRIs, blank node labels, and literals with optional language tag
//! or datatype IRI. One statement per line, terminated by ` .`.

use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Iri(String),
    Blank(String),
    Literal {
        lexical: String,
        lang: Option<String>,
        datatype: Option<String>,
    },
}

impl Term {
    pub fn iri(&self) -> Option<&str> {
        match self {
            Term::Iri(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NtError {
    #[error("malformed N-Triples statement at line {0}")]
    MalformedLine(usize),
    #[error("i/o error reading triples: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    /// Skip malformed lines and count them instead of aborting.
    Lenient,
}

#[derive(Debug, Default)]
pub struct ParseStats {
    pub skipped: usize,
}

pub fn parse_ntriples<R: BufRead>(reader: R) -> Result<Vec<Triple>, NtError> {
    parse_ntriples_with(reader, ParseMode::Strict).map(|(t, _)| t)
}

pub fn parse_ntriples_with<R: BufRead>(
    reader: R,
    mode: ParseMode,
) -> Result<(Vec<Triple>, ParseStats), NtError> {
    let mut triples = Vec::new();
    let mut stats = ParseStats::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| NtError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_statement(trimmed) {
            Some(t) => triples.push(t),
            None => match mode {
                ParseMode::Strict => return Err(NtError::MalformedLine(idx + 1)),
                ParseMode::Lenient => stats.skipped += 1,
            },
        }
    }
    Ok((triples, stats))
}

fn parse_statement(line: &str) -> Option<Triple> {
    let mut cur = Cursor { s: line, pos: 0 };
    let subject = cur.term()?;
    if matches!(subject, Term::Literal { .. }) {
        return None;
    }
    cur.skip_ws();
    let predicate = cur.term()?;
    if !matches!(predicate, Term::Iri(_)) {
        return None;
    }
    cur.skip_ws();
    let object = cur.term()?;
    cur.skip_ws();
    if !cur.eat('.') {
        return None;
    }
    cur.skip_ws();
    if !cur.done() {
        return None;
    }
    Some(Triple {
        subject,
        predicate,
        object,
    })
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn done(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.s.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> bool {
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn take_until(&mut self, c: char) -> Option<&'a str> {
        let rest = self.rest();
        let end = rest.find(c)?;
        self.pos += end + c.len_utf8();
        Some(&rest[..end])
    }

    fn term(&mut self) -> Option<Term> {
        let rest = self.rest();
        if rest.starts_with('<') {
            self.pos += 1;
            let iri = self.take_until('>')?;
            if iri.is_empty() || iri.contains(char::is_whitespace) {
                return None;
            }
            Some(Term::Iri(iri.to_string()))
        } else if let Some(stripped) = rest.strip_prefix("_:") {
            let end = stripped
                .find(|c: char| c.is_whitespace())
                .unwrap_or(stripped.len());
            if end == 0 {
                return None;
            }
            self.pos += 2 + end;
            Some(Term::Blank(stripped[..end].to_string()))
        } else if rest.starts_with('"') {
            self.pos += 1;
            let lexical = self.quoted_string()?;
            let mut lang = None;
            let mut datatype = None;
            if self.rest().starts_with('@') {
                self.pos += 1;
                let rest = self.rest();
                let end = rest
                    .find(|c: char| c.is_whitespace())
                    .unwrap_or(rest.len());
                if end == 0 {
                    return None;
                }
                lang = Some(rest[..end].to_string());
                self.pos += end;
            } else if self.rest().starts_with("^^<") {
                self.pos += 3;
                let dt = self.take_until('>')?;
                if dt.is_empty() {
                    return None;
                }
                datatype = Some(dt.to_string());
            }
            Some(Term::Literal {
                lexical,
                lang,
                datatype,
            })
        } else {
            None
        }
    }

    /// Reads up to the closing quote, handling `\"` `\\` `\n` `\t` `\r`.
    fn quoted_string(&mut self) -> Option<String> {
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Some(out);
                }
                '\\' => match chars.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, 'r')) => out.push('\r'),
                    _ => return None,
                },
                _ => out.push(c),
            }
        }
        None
    }
}

fn escape_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn write_term(out: &mut String, term: &Term) {
    match term {
        Term::Iri(iri) => {
            out.push('<');
            out.push_str(iri);
            out.push('>');
        }
        Term::Blank(label) => {
            out.push_str("_:");
            out.push_str(label);
        }
        Term::Literal {
            lexical,
            lang,
            datatype,
        } => {
            out.push('"');
            out.push_str(&escape_literal(lexical));
            out.push('"');
            if let Some(lang) = lang {
                out.push('@');
                out.push_str(lang);
            } else if let Some(dt) = datatype {
                out.push_str("^^<");
                out.push_str(dt);
                out.push('>');
            }
        }
    }
}

pub fn serialize_ntriples(triples: &[Triple]) -> String {
    let mut out = String::new();
    for t in triples {
        write_term(&mut out, &t.subject);
        out.push(' ');
        write_term(&mut out, &t.predicate);
        out.push(' ');
        write_term(&mut out, &t.object);
        out.push_str(" .\n");
    }
    out
}
