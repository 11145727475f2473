//! Text front end for the grammar subset: `parse_sparql` and the canonical
//! printer `print_sparql`. The printer emits uppercase keywords, single
//! spaces, and ` . `-joined patterns, so canonical strings compare bytewise.

use super::ast::*;
use super::CodecError;

#[derive(Debug, Clone, PartialEq)]
enum Lex {
    Word(String),
    Prefixed(Prefix, String),
    Var(String),
    Num(String),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Dot,
    Cmp(Comparator),
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Local-name characters beyond identifiers; `.` is handled with lookahead
/// so the pattern separator stays unambiguous.
fn is_local_char(c: char) -> bool {
    is_ident_char(c) || matches!(c, '-' | '(' | ')' | ',' | '%' | '\'')
}

/// Whether `s` can lex as a prefixed-name local part. Interior dots are
/// allowed, leading/trailing ones are not.
pub fn valid_local_name(s: &str) -> bool {
    let chars: Vec<char> = s.chars().collect();
    if chars.is_empty() {
        return false;
    }
    for (i, &c) in chars.iter().enumerate() {
        if is_local_char(c) {
            continue;
        }
        if c == '.' && i > 0 && chars.get(i + 1).is_some_and(|&d| is_local_char(d)) {
            continue;
        }
        return false;
    }
    true
}

fn lex(text: &str) -> Result<Vec<(usize, Lex)>, CodecError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
            }
            '{' => {
                out.push((start, Lex::LBrace));
                i += 1;
            }
            '}' => {
                out.push((start, Lex::RBrace));
                i += 1;
            }
            '(' => {
                out.push((start, Lex::LParen));
                i += 1;
            }
            ')' => {
                out.push((start, Lex::RParen));
                i += 1;
            }
            '.' => {
                out.push((start, Lex::Dot));
                i += 1;
            }
            '<' | '>' | '=' | '!' => {
                let two = chars.get(i + 1) == Some(&'=');
                let cmp = match (c, two) {
                    ('<', false) => Comparator::Lt,
                    ('<', true) => Comparator::Le,
                    ('>', false) => Comparator::Gt,
                    ('>', true) => Comparator::Ge,
                    ('=', false) => Comparator::Eq,
                    ('!', true) => Comparator::Ne,
                    _ => {
                        return Err(CodecError::SyntaxError {
                            position: start,
                            expected: "comparator".into(),
                        })
                    }
                };
                out.push((start, Lex::Cmp(cmp)));
                i += if two { 2 } else { 1 };
            }
            '?' => {
                i += 1;
                let s = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                if i == s {
                    return Err(CodecError::SyntaxError {
                        position: start,
                        expected: "variable name after '?'".into(),
                    });
                }
                out.push((start, Lex::Var(chars[s..i].iter().collect())));
            }
            '"' => {
                i += 1;
                let s = i;
                while i < chars.len() && chars[i] != '"' {
                    if chars[i].is_whitespace() {
                        return Err(CodecError::SyntaxError {
                            position: start,
                            expected: "whitespace-free string literal".into(),
                        });
                    }
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(CodecError::SyntaxError {
                        position: start,
                        expected: "closing '\"'".into(),
                    });
                }
                out.push((start, Lex::Str(chars[s..i].iter().collect())));
                i += 1;
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                i += 1;
                let mut seen_dot = false;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || (chars[i] == '.'
                            && !seen_dot
                            && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())))
                {
                    if chars[i] == '.' {
                        seen_dot = true;
                    }
                    i += 1;
                }
                out.push((start, Lex::Num(chars[start..i].iter().collect())));
            }
            c if c.is_ascii_alphabetic() => {
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                if chars.get(i) == Some(&':') {
                    let Some(prefix) = Prefix::parse(&word) else {
                        return Err(CodecError::SyntaxError {
                            position: start,
                            expected: "known prefix (dbr|dbo|dbp|rdf|rdfs|foaf)".into(),
                        });
                    };
                    i += 1;
                    let s = i;
                    while i < chars.len()
                        && (is_local_char(chars[i])
                            || (chars[i] == '.'
                                && chars.get(i + 1).is_some_and(|&d| is_local_char(d))))
                    {
                        i += 1;
                    }
                    if i == s {
                        return Err(CodecError::SyntaxError {
                            position: start,
                            expected: "local name after prefix".into(),
                        });
                    }
                    out.push((start, Lex::Prefixed(prefix, chars[s..i].iter().collect())));
                } else {
                    out.push((start, Lex::Word(word)));
                }
            }
            _ => {
                return Err(CodecError::SyntaxError {
                    position: start,
                    expected: "query token".into(),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    lexemes: Vec<(usize, Lex)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Lex> {
        self.lexemes.get(self.pos).map(|(_, l)| l)
    }

    fn offset(&self) -> usize {
        self.lexemes.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn next(&mut self) -> Option<Lex> {
        let lex = self.lexemes.get(self.pos).map(|(_, l)| l.clone());
        if lex.is_some() {
            self.pos += 1;
        }
        lex
    }

    fn err<T>(&self, expected: &str) -> Result<T, CodecError> {
        Err(CodecError::SyntaxError {
            position: self.offset(),
            expected: expected.into(),
        })
    }

    fn keyword(&mut self, kw: &str) -> Result<(), CodecError> {
        match self.peek() {
            Some(Lex::Word(w)) if w.eq_ignore_ascii_case(kw) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(kw),
        }
    }

    fn try_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Lex::Word(w)) if w.eq_ignore_ascii_case(kw)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn variable(&mut self) -> Result<String, CodecError> {
        match self.next() {
            Some(Lex::Var(v)) => Ok(v),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.err("variable")
            }
        }
    }

    fn expect(&mut self, lex: Lex, what: &str) -> Result<(), CodecError> {
        if self.peek() == Some(&lex) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(what)
        }
    }

    fn term(&mut self) -> Result<PatternTerm, CodecError> {
        match self.peek().cloned() {
            Some(Lex::Prefixed(prefix, local)) => {
                self.pos += 1;
                Ok(PatternTerm::Prefixed { prefix, local })
            }
            Some(Lex::Var(v)) => {
                self.pos += 1;
                Ok(PatternTerm::Var(v))
            }
            Some(Lex::Num(n)) => {
                self.pos += 1;
                Ok(PatternTerm::Literal(Literal::Num(n)))
            }
            Some(Lex::Str(s)) => {
                self.pos += 1;
                Ok(PatternTerm::Literal(Literal::Str(s)))
            }
            _ => self.err("triple pattern term"),
        }
    }

    fn literal(&mut self) -> Result<Literal, CodecError> {
        match self.peek().cloned() {
            Some(Lex::Num(n)) => {
                self.pos += 1;
                Ok(Literal::Num(n))
            }
            Some(Lex::Str(s)) => {
                self.pos += 1;
                Ok(Literal::Str(s))
            }
            _ => self.err("literal"),
        }
    }

    fn group(&mut self, ast: &mut QueryAst) -> Result<(), CodecError> {
        self.expect(Lex::LBrace, "'{'")?;
        loop {
            if self.try_keyword("FILTER") {
                self.expect(Lex::LParen, "'('")?;
                let var = self.variable()?;
                let op = match self.next() {
                    Some(Lex::Cmp(c)) => c,
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        return self.err("comparator");
                    }
                };
                let value = self.literal()?;
                self.expect(Lex::RParen, "')'")?;
                ast.filters.push(Filter { var, op, value });
            } else {
                let subject = self.term()?;
                let predicate = self.term()?;
                let object = self.term()?;
                ast.patterns.push(TriplePattern {
                    subject,
                    predicate,
                    object,
                });
            }
            match self.peek() {
                Some(Lex::Dot) => {
                    self.pos += 1;
                }
                Some(Lex::RBrace) => break,
                _ => return self.err("'.' or '}'"),
            }
        }
        self.expect(Lex::RBrace, "'}'")?;
        Ok(())
    }
}

pub fn parse_sparql(text: &str) -> Result<QueryAst, CodecError> {
    let lexemes = lex(text)?;
    let mut p = Parser {
        lexemes,
        pos: 0,
        end: text.len(),
    };
    let mut ast = QueryAst {
        form: QueryForm::Select,
        distinct: false,
        count_var: None,
        projection: Vec::new(),
        patterns: Vec::new(),
        filters: Vec::new(),
        order: None,
        limit: None,
    };
    if p.try_keyword("SELECT") {
        ast.form = QueryForm::Select;
        ast.distinct = p.try_keyword("DISTINCT");
        if p.try_keyword("COUNT") {
            p.expect(Lex::LParen, "'('")?;
            ast.count_var = Some(p.variable()?);
            p.expect(Lex::RParen, "')'")?;
        } else {
            while let Some(Lex::Var(_)) = p.peek() {
                ast.projection.push(p.variable()?);
            }
            if ast.projection.is_empty() {
                return p.err("projection variable or COUNT");
            }
        }
        p.keyword("WHERE")?;
        p.group(&mut ast)?;
        if p.try_keyword("ORDER") {
            p.keyword("BY")?;
            let dir = if p.try_keyword("ASC") {
                OrderDir::Asc
            } else if p.try_keyword("DESC") {
                OrderDir::Desc
            } else {
                return p.err("ASC or DESC");
            };
            p.expect(Lex::LParen, "'('")?;
            let var = p.variable()?;
            p.expect(Lex::RParen, "')'")?;
            ast.order = Some(Order { dir, var });
        }
        if p.try_keyword("LIMIT") {
            match p.next() {
                Some(Lex::Num(n)) => {
                    let limit: u64 = n.parse().map_err(|_| CodecError::SyntaxError {
                        position: p.offset(),
                        expected: "positive integer limit".into(),
                    })?;
                    if limit == 0 {
                        return p.err("positive integer limit");
                    }
                    ast.limit = Some(limit);
                }
                _ => return p.err("limit count"),
            }
        }
    } else if p.try_keyword("ASK") {
        ast.form = QueryForm::Ask;
        p.keyword("WHERE")?;
        p.group(&mut ast)?;
    } else {
        return p.err("SELECT or ASK");
    }
    if p.peek().is_some() {
        return p.err("end of query");
    }
    ast.validate()
        .map_err(CodecError::UnsupportedConstruct)?;
    Ok(ast)
}

fn print_term(out: &mut String, term: &PatternTerm) {
    match term {
        PatternTerm::Prefixed { prefix, local } => {
            out.push_str(prefix.as_str());
            out.push(':');
            out.push_str(local);
        }
        PatternTerm::Var(v) => {
            out.push('?');
            out.push_str(v);
        }
        PatternTerm::Literal(l) => print_literal(out, l),
    }
}

fn print_literal(out: &mut String, literal: &Literal) {
    match literal {
        Literal::Num(n) => out.push_str(n),
        Literal::Str(s) => {
            out.push('"');
            out.push_str(s);
            out.push('"');
        }
    }
}

pub fn print_sparql(ast: &QueryAst) -> String {
    let mut out = String::new();
    match ast.form {
        QueryForm::Select => {
            out.push_str("SELECT ");
            if ast.distinct {
                out.push_str("DISTINCT ");
            }
            if let Some(v) = &ast.count_var {
                out.push_str("COUNT(?");
                out.push_str(v);
                out.push(')');
            } else {
                let vars: Vec<String> = ast.projection.iter().map(|v| format!("?{v}")).collect();
                out.push_str(&vars.join(" "));
            }
            out.push_str(" WHERE { ");
        }
        QueryForm::Ask => out.push_str("ASK WHERE { "),
    }
    let mut items: Vec<String> = Vec::new();
    for p in &ast.patterns {
        let mut s = String::new();
        print_term(&mut s, &p.subject);
        s.push(' ');
        print_term(&mut s, &p.predicate);
        s.push(' ');
        print_term(&mut s, &p.object);
        items.push(s);
    }
    for f in &ast.filters {
        let mut s = String::new();
        s.push_str("FILTER(?");
        s.push_str(&f.var);
        s.push(' ');
        s.push_str(f.op.symbol());
        s.push(' ');
        print_literal(&mut s, &f.value);
        s.push(')');
        items.push(s);
    }
    out.push_str(&items.join(" . "));
    out.push_str(" }");
    if let Some(order) = &ast.order {
        out.push_str(match order.dir {
            OrderDir::Asc => " ORDER BY ASC(?",
            OrderDir::Desc => " ORDER BY DESC(?",
        });
        out.push_str(&order.var);
        out.push(')');
    }
    if let Some(limit) = ast.limit {
        out.push_str(&format!(" LIMIT {limit}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_select() {
        let ast = parse_sparql("SELECT ?a WHERE { dbr:Inception dbo:director ?a }").unwrap();
        assert_eq!(ast.form, QueryForm::Select);
        assert_eq!(ast.projection, vec!["a"]);
        assert_eq!(ast.patterns.len(), 1);
        assert_eq!(
            ast.patterns[0].subject,
            PatternTerm::prefixed(Prefix::Dbr, "Inception")
        );
    }

    #[test]
    fn parses_ask() {
        let ast = parse_sparql("ASK WHERE { dbr:Inception rdf:type dbo:Film }").unwrap();
        assert_eq!(ast.form, QueryForm::Ask);
        assert_eq!(ast.patterns.len(), 1);
    }

    #[test]
    fn union_is_rejected() {
        let err = parse_sparql("SELECT ?a WHERE { ?a dbo:director ?b } UNION { }").unwrap_err();
        assert!(matches!(err, CodecError::SyntaxError { .. }));
    }

    #[test]
    fn optional_is_rejected() {
        let err = parse_sparql("SELECT ?a WHERE { OPTIONAL { ?a dbo:x ?b } }").unwrap_err();
        assert!(matches!(err, CodecError::SyntaxError { .. }));
    }

    #[test]
    fn full_modifier_stack() {
        let ast = parse_sparql(
            "SELECT DISTINCT ?a WHERE { ?a dbo:starring dbr:Tom_Hanks . FILTER(?b > 1999) . ?a dbo:year ?b } ORDER BY DESC(?b) LIMIT 5",
        )
        .unwrap();
        assert!(ast.distinct);
        assert_eq!(ast.filters.len(), 1);
        assert_eq!(ast.filters[0].op, Comparator::Gt);
        assert_eq!(ast.order.as_ref().unwrap().dir, OrderDir::Desc);
        assert_eq!(ast.limit, Some(5));
    }

    #[test]
    fn count_projection() {
        let ast = parse_sparql("SELECT COUNT(?f) WHERE { ?f rdf:type dbo:Film }").unwrap();
        assert_eq!(ast.count_var.as_deref(), Some("f"));
        assert!(ast.projection.is_empty());
    }

    #[test]
    fn unbound_projection_is_unsupported() {
        let err = parse_sparql("SELECT ?z WHERE { ?a dbo:x ?b }").unwrap_err();
        assert!(matches!(err, CodecError::UnsupportedConstruct(_)));
    }

    #[test]
    fn unknown_prefix_is_rejected() {
        let err = parse_sparql("SELECT ?a WHERE { yago:Thing dbo:x ?a }").unwrap_err();
        assert!(matches!(err, CodecError::SyntaxError { .. }));
    }

    #[test]
    fn local_names_with_punctuation() {
        let ast =
            parse_sparql("SELECT ?a WHERE { dbr:Berlin_(band) dbo:member ?a . dbr:St._Trinian's dbo:x ?a }")
                .unwrap();
        assert_eq!(
            ast.patterns[0].subject,
            PatternTerm::prefixed(Prefix::Dbr, "Berlin_(band)")
        );
        assert_eq!(
            ast.patterns[1].subject,
            PatternTerm::prefixed(Prefix::Dbr, "St._Trinian's")
        );
    }

    #[test]
    fn print_is_canonical() {
        let ast = parse_sparql("select ?a where { dbr:Inception dbo:director ?a }").unwrap();
        assert_eq!(
            print_sparql(&ast),
            "SELECT ?a WHERE { dbr:Inception dbo:director ?a }"
        );
        let ask = parse_sparql("ask where { dbr:Inception rdf:type dbo:Film }").unwrap();
        assert_eq!(print_sparql(&ask), "ASK WHERE { dbr:Inception rdf:type dbo:Film }");
    }

    #[test]
    fn parse_print_round_trip() {
        let sources = [
            "SELECT ?a WHERE { dbr:Inception dbo:director ?a }",
            "SELECT DISTINCT ?a ?b WHERE { ?a dbo:starring ?b . ?a dbo:year ?y . FILTER(?y >= 2000) } ORDER BY ASC(?y) LIMIT 10",
            "SELECT COUNT(?f) WHERE { ?f rdf:type dbo:Film . ?f dbo:director dbr:Christopher_Nolan }",
            "ASK WHERE { dbr:Inception dbo:budget ?b . FILTER(?b != 100) }",
            "SELECT ?n WHERE { dbr:Inception foaf:name ?n . ?x rdfs:label \"Inception\" }",
        ];
        for src in sources {
            let ast = parse_sparql(src).unwrap();
            let printed = print_sparql(&ast);
            let reparsed = parse_sparql(&printed).unwrap();
            assert_eq!(ast, reparsed, "round trip failed for {src}");
        }
    }
}
