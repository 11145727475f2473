//! Abstract syntax for the SPARQL grammar subset:
//! SELECT/ASK + basic graph patterns + FILTER + ORDER BY + LIMIT + COUNT.

use std::collections::BTreeSet;
use std::fmt;

/// Closed prefix set; queries never carry angle-bracket IRIs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prefix {
    Dbr,
    Dbo,
    Dbp,
    Rdf,
    Rdfs,
    Foaf,
}

pub const ALL_PREFIXES: [Prefix; 6] = [
    Prefix::Dbr,
    Prefix::Dbo,
    Prefix::Dbp,
    Prefix::Rdf,
    Prefix::Rdfs,
    Prefix::Foaf,
];

impl Prefix {
    pub fn as_str(self) -> &'static str {
        match self {
            Prefix::Dbr => "dbr",
            Prefix::Dbo => "dbo",
            Prefix::Dbp => "dbp",
            Prefix::Rdf => "rdf",
            Prefix::Rdfs => "rdfs",
            Prefix::Foaf => "foaf",
        }
    }

    pub fn namespace(self) -> &'static str {
        match self {
            Prefix::Dbr => "http://dbpedia.org/resource/",
            Prefix::Dbo => "http://dbpedia.org/ontology/",
            Prefix::Dbp => "http://dbpedia.org/property/",
            Prefix::Rdf => "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
            Prefix::Rdfs => "http://www.w3.org/2000/01/rdf-schema#",
            Prefix::Foaf => "http://xmlns.com/foaf/0.1/",
        }
    }

    pub fn parse(s: &str) -> Option<Prefix> {
        ALL_PREFIXES.into_iter().find(|p| p.as_str() == s)
    }

    /// Compresses a full IRI into a prefixed name using the closed set.
    pub fn compress(iri: &str) -> Option<(Prefix, &str)> {
        ALL_PREFIXES
            .into_iter()
            .find_map(|p| iri.strip_prefix(p.namespace()).map(|local| (p, local)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    /// Integer or decimal lexical form, e.g. `5`, `-2.5`.
    Num(String),
    /// Quoted string; the subset forbids whitespace inside so every literal
    /// stays a single token.
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternTerm {
    Prefixed { prefix: Prefix, local: String },
    Var(String),
    Literal(Literal),
}

impl PatternTerm {
    pub fn prefixed(prefix: Prefix, local: impl Into<String>) -> Self {
        PatternTerm::Prefixed {
            prefix,
            local: local.into(),
        }
    }

    pub fn var(name: impl Into<String>) -> Self {
        PatternTerm::Var(name.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Lt,
    Gt,
    Eq,
    Le,
    Ge,
    Ne,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Eq => "=",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Ne => "!=",
        }
    }

    pub fn merged_token(self) -> &'static str {
        match self {
            Comparator::Lt => "math_lt",
            Comparator::Gt => "math_gt",
            Comparator::Eq => "math_eq",
            Comparator::Le => "math_leq",
            Comparator::Ge => "math_geq",
            Comparator::Ne => "math_neq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Filter {
    pub var: String,
    pub op: Comparator,
    pub value: Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderDir {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Order {
    pub dir: OrderDir,
    pub var: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryForm {
    Select,
    Ask,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryAst {
    pub form: QueryForm,
    pub distinct: bool,
    pub count_var: Option<String>,
    pub projection: Vec<String>,
    pub patterns: Vec<TriplePattern>,
    pub filters: Vec<Filter>,
    pub order: Option<Order>,
    pub limit: Option<u64>,
}

impl QueryAst {
    pub fn select(projection: Vec<&str>, patterns: Vec<TriplePattern>) -> Self {
        QueryAst {
            form: QueryForm::Select,
            distinct: false,
            count_var: None,
            projection: projection.into_iter().map(String::from).collect(),
            patterns,
            filters: Vec::new(),
            order: None,
            limit: None,
        }
    }

    pub fn ask(patterns: Vec<TriplePattern>) -> Self {
        QueryAst {
            form: QueryForm::Ask,
            distinct: false,
            count_var: None,
            projection: Vec::new(),
            patterns,
            filters: Vec::new(),
            order: None,
            limit: None,
        }
    }

    pub fn pattern_vars(&self) -> BTreeSet<&str> {
        let mut vars = BTreeSet::new();
        for p in &self.patterns {
            for term in [&p.subject, &p.predicate, &p.object] {
                if let PatternTerm::Var(v) = term {
                    vars.insert(v.as_str());
                }
            }
        }
        vars
    }

    /// Checks the structural invariants: non-empty patterns, every
    /// projected/count/order/filter variable bound in a pattern, a SELECT
    /// projects either variables or a count, an ASK projects nothing.
    pub fn validate(&self) -> Result<(), String> {
        if self.patterns.is_empty() {
            return Err("query has no triple patterns".into());
        }
        for p in &self.patterns {
            if matches!(p.subject, PatternTerm::Literal(_)) {
                return Err("literal in subject position".into());
            }
            if matches!(p.predicate, PatternTerm::Literal(_)) {
                return Err("literal in predicate position".into());
            }
        }
        let bound = self.pattern_vars();
        match self.form {
            QueryForm::Select => {
                if self.projection.is_empty() && self.count_var.is_none() {
                    return Err("SELECT projects nothing".into());
                }
                if !self.projection.is_empty() && self.count_var.is_some() {
                    return Err("SELECT mixes COUNT with plain projection".into());
                }
            }
            QueryForm::Ask => {
                if !self.projection.is_empty()
                    || self.count_var.is_some()
                    || self.order.is_some()
                    || self.limit.is_some()
                {
                    return Err("ASK carries solution modifiers".into());
                }
            }
        }
        let check = |v: &str| {
            if bound.contains(v) {
                Ok(())
            } else {
                Err(format!("variable ?{v} not bound in any pattern"))
            }
        };
        for v in &self.projection {
            check(v)?;
        }
        if let Some(v) = &self.count_var {
            check(v)?;
        }
        if let Some(o) = &self.order {
            check(&o.var)?;
        }
        for f in &self.filters {
            check(&f.var)?;
        }
        Ok(())
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
