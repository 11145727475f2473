//! Dataset generator: parses question/query templates, instantiates them
//! with ranked catalog entities (occurrence count inversely proportional to
//! rank), and optionally adds direct label->entity-token alignment pairs.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::catalog::{EntityCatalog, EntityRecord};
use crate::codec::{
    encode_query, parse_sparql, tokenize_nl, valid_local_name, CodecError, CodecPreset, Prefix,
    TokenSeq,
};
use crate::dataset::{EncodedPair, DIRECT_TEMPLATE_ID};
use crate::util::{map_ordered, Execution};

/// Aligned NL/SPARQL patterns with typed placeholders `<A>`, `<B>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTemplate {
    pub id: String,
    pub nl_pattern: String,
    pub sparql_pattern: String,
    /// Placeholder letter -> class IRI; `None` admits any catalog entity.
    pub placeholder_classes: BTreeMap<char, Option<String>>,
}

impl QueryTemplate {
    pub fn placeholders(&self) -> Vec<char> {
        self.placeholder_classes.keys().copied().collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template row {0} does not have 4 tab-separated columns")]
    BadRow(usize),
    #[error("template {0}: NL and SPARQL placeholder sets differ")]
    PlaceholderMismatch(String),
    #[error("template {0}: needs 1 or 2 placeholders")]
    BadPlaceholderCount(String),
    #[error("template {0}: SPARQL pattern fails probe parse: {1}")]
    BadPattern(String, String),
    #[error("i/o error reading templates: {0}")]
    Io(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("template {template_id}: no eligible entity for class {class}")]
    NoEligibleEntities { template_id: String, class: String },
    #[error("direct translations need a merged-token preset")]
    NeedsMergedPreset,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub preset: CodecPreset,
    /// Keep templates with two placeholders (v2+ settings).
    pub allow_multi_placeholder: bool,
    /// Add label -> entity-token pairs (v4 setting).
    pub direct_translations: bool,
    /// Occurrences of the rank-1 entity per template slot (K).
    pub top_entity_count: usize,
    pub max_pairs: Option<usize>,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(preset: CodecPreset) -> Self {
        GeneratorConfig {
            preset,
            allow_multi_placeholder: true,
            direct_translations: false,
            top_entity_count: 10,
            max_pairs: None,
            seed: 0,
        }
    }
}

/// Everything the generator produced plus how many entities were skipped
/// for unencodable labels or local names.
#[derive(Debug, Clone)]
pub struct Generated {
    pub pairs: Vec<EncodedPair>,
    pub skipped_entities: usize,
}

fn placeholder_set(text: &str) -> Vec<char> {
    let mut found = Vec::new();
    for c in ['A', 'B'] {
        if text.contains(&format!("<{c}>")) {
            found.push(c);
        }
    }
    found
}

pub fn parse_templates<R: BufRead>(reader: R) -> Result<Vec<QueryTemplate>, TemplateError> {
    let mut templates = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TemplateError::Io(e.to_string()))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        let [id, classes, nl_pattern, sparql_pattern] = cols[..] else {
            return Err(TemplateError::BadRow(lineno + 1));
        };
        let id = id.trim().to_string();
        let nl_placeholders = placeholder_set(nl_pattern);
        let sparql_placeholders = placeholder_set(sparql_pattern);
        if nl_placeholders != sparql_placeholders {
            return Err(TemplateError::PlaceholderMismatch(id));
        }
        if nl_placeholders.is_empty() || nl_placeholders.len() > 2 {
            return Err(TemplateError::BadPlaceholderCount(id));
        }
        let class_list: Vec<&str> = classes.split(';').map(str::trim).collect();
        let mut placeholder_classes = BTreeMap::new();
        for (i, &placeholder) in nl_placeholders.iter().enumerate() {
            let class = class_list.get(i).copied().unwrap_or("");
            let class = if class.is_empty() || class == "*" {
                None
            } else {
                Some(class.to_string())
            };
            placeholder_classes.insert(placeholder, class);
        }
        // probe parse with dummy entities
        let probe = sparql_pattern
            .replace("<A>", "dbr:Probe_A")
            .replace("<B>", "dbr:Probe_B");
        if let Err(e) = parse_sparql(&probe) {
            return Err(TemplateError::BadPattern(id, e.to_string()));
        }
        templates.push(QueryTemplate {
            id,
            nl_pattern: nl_pattern.to_string(),
            sparql_pattern: sparql_pattern.to_string(),
            placeholder_classes,
        });
    }
    Ok(templates)
}

/// Occurrence count for an entity: `max(1, round(K / rank))`, so every
/// catalog entity appears at least once.
pub fn entity_frequency(rank: usize, top_entity_count: usize) -> usize {
    debug_assert!(rank >= 1 && top_entity_count >= 1);
    let scaled = (top_entity_count as f64 / rank as f64).round() as usize;
    scaled.max(1)
}

fn eligible<'a>(
    catalog: &'a EntityCatalog,
    class: &Option<String>,
) -> Vec<&'a EntityRecord> {
    match class {
        Some(class) => catalog
            .class_index
            .get(class)
            .map(|uris| uris.iter().map(|u| &catalog.entities[u]).collect())
            .unwrap_or_default(),
        None => catalog.by_rank(),
    }
}

fn entity_prefixed_name(record: &EntityRecord) -> Option<String> {
    let (prefix, local) = Prefix::compress(&record.uri)?;
    if !valid_local_name(local) {
        return None;
    }
    Some(format!("{}:{local}", prefix.as_str()))
}

fn instantiate_template(
    template: &QueryTemplate,
    catalog: &EntityCatalog,
    config: &GeneratorConfig,
) -> Result<(Vec<EncodedPair>, usize), GeneratorError> {
    let slots = template.placeholders();
    let a_entities = eligible(catalog, &template.placeholder_classes[&slots[0]]);
    if a_entities.is_empty() {
        return Err(GeneratorError::NoEligibleEntities {
            template_id: template.id.clone(),
            class: template.placeholder_classes[&slots[0]]
                .clone()
                .unwrap_or_else(|| "*".into()),
        });
    }
    let b_entities: Vec<&EntityRecord> = if slots.len() == 2 {
        let list = eligible(catalog, &template.placeholder_classes[&slots[1]]);
        if list.is_empty() {
            return Err(GeneratorError::NoEligibleEntities {
                template_id: template.id.clone(),
                class: template.placeholder_classes[&slots[1]]
                    .clone()
                    .unwrap_or_else(|| "*".into()),
            });
        }
        list
    } else {
        Vec::new()
    };

    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    let mut cycle = 0usize;
    for a in &a_entities {
        let Some(a_name) = entity_prefixed_name(a) else {
            skipped += 1;
            continue;
        };
        let count = entity_frequency(a.rank, config.top_entity_count);
        for _copy in 0..count {
            let (nl_text, sparql_text, uris) = if slots.len() == 2 {
                let b = b_entities[cycle % b_entities.len()];
                cycle += 1;
                let Some(b_name) = entity_prefixed_name(b) else {
                    skipped += 1;
                    continue;
                };
                (
                    template
                        .nl_pattern
                        .replace("<A>", a.preferred_label())
                        .replace("<B>", b.preferred_label()),
                    template
                        .sparql_pattern
                        .replace("<A>", &a_name)
                        .replace("<B>", &b_name),
                    vec![a.uri.clone(), b.uri.clone()],
                )
            } else {
                (
                    template.nl_pattern.replace("<A>", a.preferred_label()),
                    template.sparql_pattern.replace("<A>", &a_name),
                    vec![a.uri.clone()],
                )
            };
            let Ok(nl) = tokenize_nl(&nl_text) else {
                skipped += 1;
                continue;
            };
            let ast = match parse_sparql(&sparql_text) {
                Ok(ast) => ast,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
            let query = encode_query(&ast, &config.preset)?;
            pairs.push(EncodedPair {
                nl,
                query,
                template_id: template.id.clone(),
                entity_uris: uris,
            });
        }
    }
    Ok((pairs, skipped))
}

/// Instantiates every template over the catalog. Per-template work fans out
/// in parallel; results are re-ordered by (template id, entity rank, copy)
/// before the final seeded shuffle, so output is deterministic either way.
pub fn instantiate(
    templates: &[QueryTemplate],
    catalog: &EntityCatalog,
    config: &GeneratorConfig,
) -> Result<Generated, GeneratorError> {
    instantiate_with(templates, catalog, config, Execution::default())
}

pub fn instantiate_with(
    templates: &[QueryTemplate],
    catalog: &EntityCatalog,
    config: &GeneratorConfig,
    mode: Execution,
) -> Result<Generated, GeneratorError> {
    let kept: Vec<&QueryTemplate> = templates
        .iter()
        .filter(|t| config.allow_multi_placeholder || t.placeholders().len() == 1)
        .collect();
    let per_template = map_ordered(mode, &kept, |_, t| instantiate_template(t, catalog, config));

    let mut keyed: Vec<(String, Vec<EncodedPair>)> = Vec::new();
    let mut skipped = 0usize;
    for (template, result) in kept.iter().zip(per_template) {
        let (pairs, s) = result?;
        skipped += s;
        keyed.push((template.id.clone(), pairs));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut pairs: Vec<EncodedPair> = keyed.into_iter().flat_map(|(_, p)| p).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    pairs.shuffle(&mut rng);
    if let Some(cap) = config.max_pairs {
        pairs.truncate(cap);
    }
    Ok(Generated {
        pairs,
        skipped_entities: skipped,
    })
}

/// One pair per catalog entity mapping its label to its single entity token
/// (`inception` -> `dbr_Inception`). Needs a merged-token preset.
pub fn direct_translations(
    catalog: &EntityCatalog,
    preset: &CodecPreset,
) -> Result<Generated, GeneratorError> {
    if !preset.merged_tokens {
        return Err(GeneratorError::NeedsMergedPreset);
    }
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for record in catalog.by_rank() {
        let Some((prefix, local)) = Prefix::compress(&record.uri) else {
            skipped += 1;
            continue;
        };
        if !valid_local_name(local) {
            skipped += 1;
            continue;
        }
        let Ok(nl) = tokenize_nl(record.preferred_label()) else {
            skipped += 1;
            continue;
        };
        pairs.push(EncodedPair {
            nl,
            query: TokenSeq::new(vec![format!("{}_{local}", prefix.as_str())]),
            template_id: DIRECT_TEMPLATE_ID.into(),
            entity_uris: vec![record.uri.clone()],
        });
    }
    Ok(Generated {
        pairs,
        skipped_entities: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_catalog, CatalogOptions};
    use crate::codec::{decode_sequence, PRESET_V3};
    use crate::ntriples::parse_ntriples;

    const FILM: &str = "http://dbpedia.org/ontology/Film";

    fn film_catalog(n: usize) -> EntityCatalog {
        let mut nt = String::new();
        for i in 0..n {
            let uri = format!("http://dbpedia.org/resource/Film_{i:03}");
            nt.push_str(&format!(
                "<{uri}> <http://www.w3.org/2000/01/rdf-schema#label> \"Film {i:03}\"@en .\n"
            ));
            nt.push_str(&format!(
                "<{uri}> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <{FILM}> .\n"
            ));
            // entity i gets degree n - i, so ranks follow index order
            for j in 0..(n - i) {
                nt.push_str(&format!("<{uri}> <http://ex/p{j}> <http://ex/o_{i}_{j}> .\n"));
            }
        }
        let triples = parse_ntriples(nt.as_bytes()).unwrap();
        build_catalog(
            &triples,
            &CatalogOptions {
                target_class: Some(FILM.into()),
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn one_placeholder() -> QueryTemplate {
        parse_templates(
            format!("t1\t{FILM}\twho directed <A>\tSELECT ?x WHERE {{ <A> dbo:director ?x }}").as_bytes(),
        )
        .unwrap()
        .remove(0)
    }

    #[test]
    fn parses_single_placeholder_template() {
        let t = one_placeholder();
        assert_eq!(t.placeholders(), vec!['A']);
        assert_eq!(t.placeholder_classes[&'A'].as_deref(), Some(FILM));
    }

    #[test]
    fn placeholder_mismatch_is_rejected() {
        let err = parse_templates(
            "t1\tdbo:Film\twho directed <A>\tSELECT ?x WHERE { dbr:Fixed dbo:director ?x }".as_bytes(),
        )
        .unwrap_err();
        assert_eq!(err, TemplateError::PlaceholderMismatch("t1".into()));
    }

    #[test]
    fn two_placeholder_positional_classes() {
        let t = parse_templates(
            "t2\tdbo:Film;dbo:Person\tdid <B> star in <A>\tASK WHERE { <A> dbo:starring <B> }".as_bytes(),
        )
        .unwrap()
        .remove(0);
        assert_eq!(t.placeholder_classes[&'A'].as_deref(), Some("dbo:Film"));
        assert_eq!(t.placeholder_classes[&'B'].as_deref(), Some("dbo:Person"));
    }

    #[test]
    fn bad_pattern_fails_probe_parse() {
        let err = parse_templates(
            "t1\tdbo:Film\twho directed <A>\tSELECT ?x WHERE { <A> dbo:director ?x } UNION { }".as_bytes(),
        )
        .unwrap_err();
        assert!(matches!(err, TemplateError::BadPattern(id, _) if id == "t1"));
    }

    #[test]
    fn inverse_rank_frequency_values() {
        assert_eq!(entity_frequency(1, 6), 6);
        assert_eq!(entity_frequency(2, 6), 3);
        assert_eq!(entity_frequency(3, 6), 2);
        assert_eq!(entity_frequency(1, 1), 1);
        assert_eq!(entity_frequency(100, 6), 1);
    }

    #[test]
    fn frequency_is_monotone_non_increasing() {
        for k in [1, 3, 6, 10, 100] {
            let mut prev = usize::MAX;
            for rank in 1..=500 {
                let f = entity_frequency(rank, k);
                assert!(f <= prev && f >= 1);
                prev = f;
            }
        }
    }

    #[test]
    fn instantiate_composes_codec_maps() {
        let nt = concat!(
            "<http://dbpedia.org/resource/Inception> <http://www.w3.org/2000/01/rdf-schema#label> \"Inception\"@en .\n",
            "<http://dbpedia.org/resource/Inception> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://dbpedia.org/ontology/Film> .\n",
        );
        let triples = parse_ntriples(nt.as_bytes()).unwrap();
        let catalog = build_catalog(&triples, &CatalogOptions::default()).unwrap();
        let mut config = GeneratorConfig::new(PRESET_V3);
        config.top_entity_count = 1;
        let out = instantiate(&[one_placeholder()], &catalog, &config).unwrap();
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.pairs[0].nl.to_string(), "who directed inception");
        assert_eq!(
            out.pairs[0].query.to_string(),
            "select var_x where brack_open dbr_Inception dbo_director var_x brack_close"
        );
    }

    #[test]
    fn three_entities_k6_gives_11_pairs() {
        let catalog = film_catalog(3);
        let mut config = GeneratorConfig::new(PRESET_V3);
        config.top_entity_count = 6;
        let out = instantiate(&[one_placeholder()], &catalog, &config).unwrap();
        assert_eq!(out.pairs.len(), 6 + 3 + 2);
    }

    #[test]
    fn multi_placeholder_templates_skipped_when_disabled() {
        let catalog = film_catalog(3);
        let tsv = format!(
            "t1\t{FILM}\twho directed <A>\tSELECT ?x WHERE {{ <A> dbo:director ?x }}\n\
             t2\t{FILM};{FILM}\tare <A> and <B> related\tASK WHERE {{ <A> dbo:related <B> }}\n"
        );
        let templates = parse_templates(tsv.as_bytes()).unwrap();
        let mut config = GeneratorConfig::new(PRESET_V3);
        config.top_entity_count = 1;
        config.allow_multi_placeholder = false;
        let single = instantiate(&templates, &catalog, &config).unwrap();
        assert!(single.pairs.iter().all(|p| p.template_id == "t1"));
        config.allow_multi_placeholder = true;
        let multi = instantiate(&templates, &catalog, &config).unwrap();
        assert!(multi.pairs.iter().any(|p| p.template_id == "t2"));
    }

    #[test]
    fn every_query_decodes_and_no_placeholder_survives() {
        let catalog = film_catalog(5);
        let mut config = GeneratorConfig::new(PRESET_V3);
        config.top_entity_count = 4;
        let out = instantiate(&[one_placeholder()], &catalog, &config).unwrap();
        for pair in &out.pairs {
            decode_sequence(&pair.query, &PRESET_V3).unwrap();
            let line = format!("{} {}", pair.nl, pair.query);
            assert!(!line.contains("<A>") && !line.contains("<B>"));
        }
    }

    #[test]
    fn no_eligible_entities_error() {
        let catalog = film_catalog(2);
        let t = parse_templates(
            "t9\thttp://dbpedia.org/ontology/City\twhere is <A>\tSELECT ?x WHERE { <A> dbo:location ?x }"
                .as_bytes(),
        )
        .unwrap();
        let config = GeneratorConfig::new(PRESET_V3);
        let err = instantiate(&t, &catalog, &config).unwrap_err();
        assert!(matches!(err, GeneratorError::NoEligibleEntities { .. }));
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let catalog = film_catalog(6);
        let mut config = GeneratorConfig::new(PRESET_V3);
        config.top_entity_count = 3;
        config.seed = 99;
        let a = instantiate(&[one_placeholder()], &catalog, &config).unwrap();
        let b = instantiate_with(&[one_placeholder()], &catalog, &config, Execution::Sequential).unwrap();
        assert_eq!(a.pairs, b.pairs);
    }

    #[test]
    fn rank_monotonicity_of_occurrences() {
        let catalog = film_catalog(8);
        let mut config = GeneratorConfig::new(PRESET_V3);
        config.top_entity_count = 6;
        let out = instantiate(&[one_placeholder()], &catalog, &config).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &out.pairs {
            *counts.entry(p.entity_uris[0].as_str()).or_default() += 1;
        }
        let by_rank = catalog.by_rank();
        for pair in by_rank.windows(2) {
            assert!(counts[pair[0].uri.as_str()] >= counts[pair[1].uri.as_str()]);
        }
    }

    #[test]
    fn direct_translation_pairs() {
        let nt = concat!(
            "<http://dbpedia.org/resource/Inception> <http://www.w3.org/2000/01/rdf-schema#label> \"Inception\"@en .\n",
            "<http://dbpedia.org/resource/Berlin> <http://www.w3.org/2000/01/rdf-schema#label> \"Berlin\"@en .\n",
            "<http://dbpedia.org/resource/Berlin> <http://ex/p> <http://ex/o> .\n",
        );
        let triples = parse_ntriples(nt.as_bytes()).unwrap();
        let catalog = build_catalog(&triples, &CatalogOptions::default()).unwrap();
        let out = direct_translations(&catalog, &PRESET_V3).unwrap();
        assert_eq!(out.pairs.len(), 2);
        assert!(out
            .pairs
            .iter()
            .any(|p| p.nl.to_string() == "berlin" && p.query.to_string() == "dbr_Berlin"));
        assert!(out
            .pairs
            .iter()
            .any(|p| p.nl.to_string() == "inception" && p.query.to_string() == "dbr_Inception"));
        assert!(out.pairs.iter().all(|p| p.template_id == DIRECT_TEMPLATE_ID));
    }

    #[test]
    fn unencodable_labels_are_skipped_and_counted() {
        let nt = concat!(
            "<http://dbpedia.org/resource/Qmarks> <http://www.w3.org/2000/01/rdf-schema#label> \"???\"@en .\n",
            "<http://dbpedia.org/resource/Fine> <http://www.w3.org/2000/01/rdf-schema#label> \"Fine\"@en .\n",
        );
        let triples = parse_ntriples(nt.as_bytes()).unwrap();
        let catalog = build_catalog(&triples, &CatalogOptions::default()).unwrap();
        let out = direct_translations(&catalog, &PRESET_V3).unwrap();
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.skipped_entities, 1);
    }

    #[test]
    fn direct_translations_need_merged_preset() {
        let catalog = film_catalog(2);
        let err = direct_translations(&catalog, &crate::codec::PRESET_V1).unwrap_err();
        assert_eq!(err, GeneratorError::NeedsMergedPreset);
    }
}
