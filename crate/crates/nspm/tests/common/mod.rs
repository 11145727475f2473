//! Shared helpers for integration tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use nspm::codec::{
    Comparator, Filter, Literal, Order, OrderDir, PatternTerm, Prefix, QueryAst, QueryForm,
    TriplePattern,
};

/// Uniformly random query inside the grammar subset.
pub fn random_ast(rng: &mut ChaCha8Rng) -> QueryAst {
    let prefixes = [Prefix::Dbr, Prefix::Dbo, Prefix::Dbp, Prefix::Rdf, Prefix::Rdfs, Prefix::Foaf];
    let vars = ["a", "b", "c", "y"];
    let locals = ["Inception", "Film", "director", "starring", "year", "type", "label", "Avatar_2"];
    let term = |rng: &mut ChaCha8Rng, allow_var: bool| -> PatternTerm {
        if allow_var && rng.gen_bool(0.4) {
            PatternTerm::var(*vars.choose(rng).unwrap())
        } else {
            PatternTerm::prefixed(*prefixes.choose(rng).unwrap(), *locals.choose(rng).unwrap())
        }
    };
    let n_patterns = rng.gen_range(1..=3);
    let mut patterns = Vec::new();
    for _ in 0..n_patterns {
        let object = if rng.gen_bool(0.15) {
            PatternTerm::Literal(if rng.gen_bool(0.5) {
                Literal::Num(rng.gen_range(1..3000).to_string())
            } else {
                Literal::Str("Inception".into())
            })
        } else {
            term(rng, true)
        };
        patterns.push(TriplePattern {
            subject: term(rng, true),
            predicate: term(rng, true),
            object,
        });
    }
    let mut ast = if rng.gen_bool(0.3) {
        QueryAst::ask(patterns)
    } else {
        QueryAst::select(vec![], patterns)
    };
    if ast.form == QueryForm::Select {
        if ast.pattern_vars().is_empty() {
            // force a variable binding so the query projects something
            ast.patterns[0].object = PatternTerm::var("a");
        }
        let bound: Vec<String> = ast.pattern_vars().iter().map(|v| v.to_string()).collect();
        let v = bound.choose(rng).unwrap().clone();
        if rng.gen_bool(0.25) {
            ast.count_var = Some(v);
        } else {
            ast.projection = vec![v];
            ast.distinct = rng.gen_bool(0.3);
        }
        if rng.gen_bool(0.3) {
            ast.order = Some(Order {
                dir: if rng.gen_bool(0.5) { OrderDir::Asc } else { OrderDir::Desc },
                var: bound.choose(rng).unwrap().clone(),
            });
        }
        if rng.gen_bool(0.3) {
            ast.limit = Some(rng.gen_range(1..100));
        }
        if rng.gen_bool(0.25) {
            ast.filters.push(Filter {
                var: bound.choose(rng).unwrap().clone(),
                op: *[
                    Comparator::Lt,
                    Comparator::Gt,
                    Comparator::Eq,
                    Comparator::Le,
                    Comparator::Ge,
                    Comparator::Ne,
                ]
                .choose(rng)
                .unwrap(),
                value: Literal::Num(rng.gen_range(1..3000).to_string()),
            });
        }
    }
    debug_assert!(ast.validate().is_ok(), "generated query must be valid");
    ast
}
