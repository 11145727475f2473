//! Ranked entity catalog built from an N-Triples knowledge-base subset.
//!
//! Ranks drive the generator: the number of training occurrences of an
//! entity is inversely proportional to its rank, so rank 1 is the most
//! prominent entity. The default ranking is total degree over the triple
//! set; an external TSV ranking can override it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use thiserror::Error;

use crate::ntriples::{Term, Triple};

pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRecord {
    pub uri: String,
    /// Preferred label first; language preference is `en`, then untagged,
    /// then anything else, ties broken lexicographically.
    pub labels: Vec<String>,
    pub classes: BTreeSet<String>,
    /// 1 = highest-ranked.
    pub rank: usize,
}

impl EntityRecord {
    pub fn preferred_label(&self) -> &str {
        &self.labels[0]
    }
}

#[derive(Debug, Clone, Default)]
pub struct EntityCatalog {
    pub entities: BTreeMap<String, EntityRecord>,
    /// class IRI -> member uris ordered by (rank, uri) ascending.
    pub class_index: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("no entity qualifies for the catalog")]
    EmptyCatalog,
    #[error("ranking file refers to unknown entity {0}")]
    UnknownEntity(String),
    #[error("bad rank {value:?} at line {line}")]
    BadRank { line: usize, value: String },
    #[error("i/o error reading ranking: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default)]
pub struct CatalogOptions {
    pub label_predicate: Option<String>,
    pub type_predicate: Option<String>,
    pub target_class: Option<String>,
    /// Optional manual allow-list of entity URIs; applied after the class
    /// filter when both are given.
    pub uri_allowlist: Option<BTreeSet<String>>,
}

/// Total degree (in + out) of each requested entity over the triple set,
/// turned into dense ranks 1..N. Ties break by ascending URI.
pub fn rank_by_degree<'a, I>(triples: &[Triple], entity_uris: I) -> BTreeMap<String, usize>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut degree: HashMap<&str, usize> = HashMap::new();
    for t in triples {
        if let Some(s) = t.subject.iri() {
            *degree.entry(s).or_default() += 1;
        }
        if let Some(o) = t.object.iri() {
            *degree.entry(o).or_default() += 1;
        }
    }
    let mut uris: Vec<&str> = entity_uris.into_iter().collect();
    uris.sort_unstable();
    uris.dedup();
    uris.sort_by_key(|u| std::cmp::Reverse(degree.get(u).copied().unwrap_or(0)));
    // sort_by_key is stable, so equal degrees keep the lexicographic order
    uris.iter()
        .enumerate()
        .map(|(i, u)| (u.to_string(), i + 1))
        .collect()
}

pub fn build_catalog(triples: &[Triple], opts: &CatalogOptions) -> Result<EntityCatalog, CatalogError> {
    let label_pred = opts.label_predicate.as_deref().unwrap_or(RDFS_LABEL);
    let type_pred = opts.type_predicate.as_deref().unwrap_or(RDF_TYPE);

    let mut labels: BTreeMap<&str, Vec<(&Option<String>, &str)>> = BTreeMap::new();
    let mut classes: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for t in triples {
        // blank-node subjects never become catalog entities
        let Some(subject) = t.subject.iri() else { continue };
        let Some(pred) = t.predicate.iri() else { continue };
        if pred == label_pred {
            if let Term::Literal { lexical, lang, .. } = &t.object {
                let trimmed = lexical.trim();
                if !trimmed.is_empty() {
                    labels.entry(subject).or_default().push((lang, trimmed));
                }
            }
        } else if pred == type_pred {
            if let Some(class) = t.object.iri() {
                classes.entry(subject).or_default().insert(class);
            }
        }
    }

    let qualifies = |uri: &str| {
        if let Some(target) = &opts.target_class {
            if !classes.get(uri).is_some_and(|cs| cs.contains(target.as_str())) {
                return false;
            }
        }
        if let Some(allow) = &opts.uri_allowlist {
            if !allow.contains(uri) {
                return false;
            }
        }
        true
    };

    let selected: Vec<&str> = labels.keys().copied().filter(|u| qualifies(u)).collect();
    if selected.is_empty() {
        return Err(CatalogError::EmptyCatalog);
    }

    let ranks = rank_by_degree(triples, selected.iter().copied());
    let mut entities = BTreeMap::new();
    for uri in &selected {
        let mut entity_labels: Vec<(u8, &str)> = labels[uri]
            .iter()
            .map(|(lang, text)| {
                let pref = match lang.as_deref() {
                    Some("en") => 0u8,
                    None => 1,
                    Some(_) => 2,
                };
                (pref, *text)
            })
            .collect();
        entity_labels.sort();
        entity_labels.dedup();
        entities.insert(
            uri.to_string(),
            EntityRecord {
                uri: uri.to_string(),
                labels: entity_labels.into_iter().map(|(_, t)| t.to_string()).collect(),
                classes: classes
                    .get(uri)
                    .map(|cs| cs.iter().map(|c| c.to_string()).collect())
                    .unwrap_or_default(),
                rank: ranks[*uri],
            },
        );
    }

    let mut catalog = EntityCatalog {
        entities,
        class_index: BTreeMap::new(),
    };
    catalog.rebuild_class_index();
    Ok(catalog)
}

impl EntityCatalog {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    fn rebuild_class_index(&mut self) {
        let mut index: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for record in self.entities.values() {
            for class in &record.classes {
                index.entry(class.clone()).or_default().push(record.uri.clone());
            }
        }
        for members in index.values_mut() {
            members.sort_by_key(|uri| (self.entities[uri].rank, uri.clone()));
        }
        self.class_index = index;
    }

    /// Entities ordered by (rank, uri).
    pub fn by_rank(&self) -> Vec<&EntityRecord> {
        let mut records: Vec<&EntityRecord> = self.entities.values().collect();
        records.sort_by_key(|r| (r.rank, r.uri.as_str()));
        records
    }

    pub fn export_tsv(&self) -> String {
        let mut out = String::new();
        for record in self.by_rank() {
            let classes: Vec<&str> = record.classes.iter().map(String::as_str).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                record.uri,
                record.rank,
                record.preferred_label(),
                classes.join(";")
            ));
        }
        out
    }
}

/// Replaces ranks with those from a `uri<TAB>rank` TSV stream. Listed
/// entities come first (ordered by their file rank), unlisted entities keep
/// their relative order after them; the result is re-densified to 1..N.
pub fn load_ranking<R: BufRead>(
    reader: R,
    catalog: &EntityCatalog,
    strict: bool,
) -> Result<EntityCatalog, CatalogError> {
    let mut overrides: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CatalogError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((uri, rank_text)) = trimmed.split_once('\t') else {
            return Err(CatalogError::BadRank {
                line: idx + 1,
                value: trimmed.to_string(),
            });
        };
        let rank: usize = rank_text.trim().parse().map_err(|_| CatalogError::BadRank {
            line: idx + 1,
            value: rank_text.trim().to_string(),
        })?;
        if rank == 0 {
            return Err(CatalogError::BadRank {
                line: idx + 1,
                value: rank_text.trim().to_string(),
            });
        }
        let uri = uri.trim();
        if !catalog.entities.contains_key(uri) {
            if strict {
                return Err(CatalogError::UnknownEntity(uri.to_string()));
            }
            continue;
        }
        overrides.insert(uri.to_string(), rank);
    }

    let mut order: Vec<(usize, usize, &str)> = catalog
        .entities
        .values()
        .map(|r| match overrides.get(&r.uri) {
            Some(&file_rank) => (0, file_rank, r.uri.as_str()),
            None => (1, r.rank, r.uri.as_str()),
        })
        .collect();
    order.sort();

    let mut updated = catalog.clone();
    for (dense, (_, _, uri)) in order.into_iter().enumerate() {
        updated.entities.get_mut(uri).unwrap().rank = dense + 1;
    }
    updated.rebuild_class_index();
    Ok(updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ntriples::parse_ntriples;

    fn toy_triples() -> Vec<Triple> {
        parse_ntriples(
            concat!(
                "<http://dbpedia.org/resource/Inception> <http://www.w3.org/2000/01/rdf-schema#label> \"Inception\"@en .\n",
                "<http://dbpedia.org/resource/Inception> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://dbpedia.org/ontology/Film> .\n",
            )
            .as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn class_filter_keeps_matching_entity() {
        let catalog = build_catalog(
            &toy_triples(),
            &CatalogOptions {
                target_class: Some("http://dbpedia.org/ontology/Film".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(catalog.len(), 1);
        let record = catalog.entities.values().next().unwrap();
        assert_eq!(record.preferred_label(), "Inception");
        assert_eq!(record.rank, 1);
    }

    #[test]
    fn class_filter_miss_is_empty_catalog() {
        let err = build_catalog(
            &toy_triples(),
            &CatalogOptions {
                target_class: Some("http://dbpedia.org/ontology/City".into()),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert_eq!(err, CatalogError::EmptyCatalog);
    }

    #[test]
    fn degree_ranking_with_lexicographic_tie_break() {
        // degrees: A=5, B=2, C=2 -> ranks A=1, B=2, C=3
        let mut nt = String::new();
        for i in 0..5 {
            nt.push_str(&format!("<http://ex/A> <http://ex/p{i}> <http://ex/o{i}> .\n"));
        }
        nt.push_str("<http://ex/B> <http://ex/p> <http://ex/x1> .\n");
        nt.push_str("<http://ex/B> <http://ex/p> <http://ex/x2> .\n");
        nt.push_str("<http://ex/C> <http://ex/p> <http://ex/y1> .\n");
        nt.push_str("<http://ex/C> <http://ex/p> <http://ex/y2> .\n");
        let triples = parse_ntriples(nt.as_bytes()).unwrap();
        let ranks = rank_by_degree(&triples, ["http://ex/A", "http://ex/B", "http://ex/C"]);
        assert_eq!(ranks["http://ex/A"], 1);
        assert_eq!(ranks["http://ex/B"], 2);
        assert_eq!(ranks["http://ex/C"], 3);
    }

    #[test]
    fn rank_by_degree_basics() {
        let triples = parse_ntriples("<A> <p> <B> .\n<A> <p> <C> .\n".as_bytes()).unwrap();
        let ranks = rank_by_degree(&triples, ["A", "B"]);
        assert_eq!(ranks["A"], 1);
        assert_eq!(ranks["B"], 2);
        let tied = rank_by_degree(&triples, ["B", "C"]);
        assert_eq!(tied["B"], 1); // degree tie, B < C
        assert_eq!(tied["C"], 2);
        let single = rank_by_degree(&triples, ["A"]);
        assert_eq!(single["A"], 1);
    }

    fn labelled(uris: &[&str]) -> EntityCatalog {
        let mut nt = String::new();
        for (i, uri) in uris.iter().enumerate() {
            // descending degree in list order
            nt.push_str(&format!(
                "<{uri}> <http://www.w3.org/2000/01/rdf-schema#label> \"L{i}\"@en .\n"
            ));
            for j in 0..(uris.len() - i) {
                nt.push_str(&format!("<{uri}> <http://ex/p{j}> <http://ex/o{i}_{j}> .\n"));
            }
        }
        let triples = parse_ntriples(nt.as_bytes()).unwrap();
        build_catalog(&triples, &CatalogOptions::default()).unwrap()
    }

    #[test]
    fn ranking_override_replaces_listed() {
        let catalog = labelled(&["http://ex/A", "http://ex/B"]);
        let updated = load_ranking(
            "http://ex/B\t1\nhttp://ex/A\t2\n".as_bytes(),
            &catalog,
            true,
        )
        .unwrap();
        assert_eq!(updated.entities["http://ex/B"].rank, 1);
        assert_eq!(updated.entities["http://ex/A"].rank, 2);
    }

    #[test]
    fn partial_override_densifies_unlisted_after_listed() {
        let catalog = labelled(&["http://ex/A", "http://ex/B", "http://ex/C"]);
        assert_eq!(catalog.entities["http://ex/A"].rank, 1);
        let updated = load_ranking("http://ex/B\t1\n".as_bytes(), &catalog, true).unwrap();
        assert_eq!(updated.entities["http://ex/B"].rank, 1);
        assert_eq!(updated.entities["http://ex/A"].rank, 2);
        assert_eq!(updated.entities["http://ex/C"].rank, 3);
    }

    #[test]
    fn zero_rank_is_rejected() {
        let catalog = labelled(&["http://ex/A"]);
        let err = load_ranking("http://ex/A\t0\n".as_bytes(), &catalog, true).unwrap_err();
        assert!(matches!(err, CatalogError::BadRank { line: 1, .. }));
    }

    #[test]
    fn unknown_entity_only_errors_in_strict_mode() {
        let catalog = labelled(&["http://ex/A"]);
        let err = load_ranking("http://ex/Z\t1\n".as_bytes(), &catalog, true).unwrap_err();
        assert_eq!(err, CatalogError::UnknownEntity("http://ex/Z".into()));
        let ok = load_ranking("http://ex/Z\t1\n".as_bytes(), &catalog, false).unwrap();
        assert_eq!(ok.entities["http://ex/A"].rank, 1);
    }

    #[test]
    fn ranks_stay_dense_after_override() {
        let catalog = labelled(&["http://ex/A", "http://ex/B", "http://ex/C", "http://ex/D"]);
        let updated = load_ranking("http://ex/D\t7\nhttp://ex/C\t3\n".as_bytes(), &catalog, true).unwrap();
        let mut ranks: Vec<usize> = updated.entities.values().map(|r| r.rank).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3, 4]);
        assert_eq!(updated.entities["http://ex/C"].rank, 1);
        assert_eq!(updated.entities["http://ex/D"].rank, 2);
    }

    #[test]
    fn label_language_preference() {
        let nt = concat!(
            "<http://ex/A> <http://www.w3.org/2000/01/rdf-schema#label> \"Zuletzt\"@de .\n",
            "<http://ex/A> <http://www.w3.org/2000/01/rdf-schema#label> \"Plain\" .\n",
            "<http://ex/A> <http://www.w3.org/2000/01/rdf-schema#label> \"English\"@en .\n",
        );
        let triples = parse_ntriples(nt.as_bytes()).unwrap();
        let catalog = build_catalog(&triples, &CatalogOptions::default()).unwrap();
        assert_eq!(
            catalog.entities["http://ex/A"].labels,
            vec!["English", "Plain", "Zuletzt"]
        );
    }

    #[test]
    fn class_index_sorted_by_rank_then_uri() {
        let catalog = labelled(&["http://ex/A", "http://ex/B"]);
        // give both a shared class via rebuild on a fresh build
        let nt = concat!(
            "<http://ex/A> <http://www.w3.org/2000/01/rdf-schema#label> \"a\"@en .\n",
            "<http://ex/A> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://ex/C> .\n",
            "<http://ex/A> <http://ex/p> <http://ex/o1> .\n",
            "<http://ex/B> <http://www.w3.org/2000/01/rdf-schema#label> \"b\"@en .\n",
            "<http://ex/B> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://ex/C> .\n",
        );
        drop(catalog);
        let triples = parse_ntriples(nt.as_bytes()).unwrap();
        let catalog = build_catalog(&triples, &CatalogOptions::default()).unwrap();
        assert_eq!(
            catalog.class_index["http://ex/C"],
            vec!["http://ex/A".to_string(), "http://ex/B".to_string()]
        );
    }

    #[test]
    fn export_tsv_format() {
        let nt = concat!(
            "<http://ex/A> <http://www.w3.org/2000/01/rdf-schema#label> \"Alpha\"@en .\n",
            "<http://ex/A> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://ex/C> .\n",
        );
        let triples = parse_ntriples(nt.as_bytes()).unwrap();
        let catalog = build_catalog(&triples, &CatalogOptions::default()).unwrap();
        assert_eq!(catalog.export_tsv(), "http://ex/A\t1\tAlpha\thttp://ex/C\n");
    }
}
