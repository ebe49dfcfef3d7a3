//! Competence assessment from prior semantic knowledge.
//!
//! Statements like `incompetent:nature` are checked against the current view
//! through a labeled atlas of scene categories. For every atlas entry the
//! visual similarity (calibrated kernel on embedding distance) is multiplied
//! with the semantic similarity between the entry's label and the statement's
//! concept (clipped cosine over word vectors). A statement's score is the
//! maximum of that product over the atlas.
//!
//! A desk-like view scores high visually against "office" but "office" is
//! semantically unrelated to "nature", while "forest" is related to "nature"
//! but looks nothing like a desk: both products stay near zero. A park-like
//! view sits visually halfway to "forest", which carries the concept fully,
//! so the score lands around one half.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{distance, CalibrationModel, EnvironmentDescriptor};
use crate::error::{Error, Result};
use crate::memory::CompetenceLabel;

/// Word vectors keyed by lowercase token.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticLexicon {
    entries: HashMap<String, Vec<f64>>,
    dimension: usize,
}

impl SemanticLexicon {
    pub fn new(dimension: usize) -> Self {
        Self {
            entries: HashMap::new(),
            dimension,
        }
    }

    /// Inserts or overwrites a token. The token is lowercased.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDescriptor {
                id: token.to_string(),
                reason: "non-finite word vector".into(),
            });
        }
        if vector.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroVector(token.to_string()));
        }
        self.entries.insert(token.to_lowercase(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<'a> FromIterator<(&'a str, Vec<f64>)> for SemanticLexicon {
    /// Panics on inconsistent or invalid vectors; meant for literals in tests and examples.
    fn from_iter<I: IntoIterator<Item = (&'a str, Vec<f64>)>>(iter: I) -> Self {
        let mut iter = iter.into_iter().peekable();
        let dim = iter.peek().map_or(0, |(_, v)| v.len());
        let mut lexicon = SemanticLexicon::new(dim);
        for (token, vector) in iter {
            lexicon.insert(token, vector).expect("valid word vector");
        }
        lexicon
    }
}

/// Lowercased tokens of a phrase; words split on whitespace and underscores.
pub fn tokens(phrase: &str) -> impl Iterator<Item = String> + '_ {
    phrase
        .split(|c: char| c.is_whitespace() || c == '_')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Mean of the in-vocabulary token vectors, normalized to unit length.
pub fn phrase_vector(phrase: &str, lexicon: &SemanticLexicon) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; lexicon.dimension()];
    let mut found = 0usize;
    for token in tokens(phrase) {
        if let Some(v) = lexicon.get(&token) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            found += 1;
        }
    }
    if found == 0 {
        return Err(Error::AllTokensOutOfVocabulary(phrase.to_string()));
    }
    let count = found as f64;
    for s in &mut sum {
        *s /= count;
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector(phrase.to_string()));
    }
    for s in &mut sum {
        *s /= norm;
    }
    Ok(sum)
}

fn clipped_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(0.0, 1.0)
}

/// Cosine similarity of two phrases with negative values clipped to 0.
pub fn semantic_similarity(a: &str, b: &str, lexicon: &SemanticLexicon) -> Result<f64> {
    let va = phrase_vector(a, lexicon)?;
    let vb = phrase_vector(b, lexicon)?;
    Ok(clipped_cosine(&va, &vb))
}

/// Calibrated kernel on the embedding distance between `query` and `env`.
pub fn visual_similarity(
    query: &EnvironmentDescriptor,
    env: &EnvironmentDescriptor,
    calib: &CalibrationModel,
) -> Result<f64> {
    calib.check_dimension(query.dimension())?;
    calib.check_dimension(env.dimension())?;
    Ok(calib.similarity(distance(query, env)?))
}

/// A prior statement such as "incompetent in nature environments".
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KnowledgeStatement {
    polarity: CompetenceLabel,
    concept: String,
}

impl KnowledgeStatement {
    pub fn new(polarity: CompetenceLabel, concept: &str) -> Result<Self> {
        let concept = tokens(concept).collect::<Vec<_>>().join(" ");
        if concept.is_empty() {
            return Err(Error::InvalidStatement(format!("{polarity}:")));
        }
        Ok(Self { polarity, concept })
    }

    pub fn polarity(&self) -> CompetenceLabel {
        self.polarity
    }

    pub fn concept(&self) -> &str {
        &self.concept
    }
}

impl fmt::Display for KnowledgeStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.polarity, self.concept)
    }
}

impl FromStr for KnowledgeStatement {
    type Err = Error;

    /// Parses `competent:<phrase>` or `incompetent:<phrase>`.
    fn from_str(s: &str) -> Result<Self> {
        let (polarity, concept) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidStatement(s.to_string()))?;
        let polarity = polarity
            .trim()
            .to_lowercase()
            .parse()
            .map_err(|_| Error::InvalidStatement(s.to_string()))?;
        Self::new(polarity, concept).map_err(|_| Error::InvalidStatement(s.to_string()))
    }
}

impl Serialize for KnowledgeStatement {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KnowledgeStatement {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Labeled scene categories used as visual anchors for semantic statements.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceAtlas {
    environments: Vec<EnvironmentDescriptor>,
}

impl ReferenceAtlas {
    pub fn new(environments: Vec<EnvironmentDescriptor>) -> Result<Self> {
        if let Some(first) = environments.first() {
            let dim = first.dimension();
            for env in &environments {
                if env.label().is_none_or(|l| l.trim().is_empty()) {
                    return Err(Error::UnlabeledAtlasEntry(env.id().to_string()));
                }
                if env.dimension() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: env.dimension(),
                    });
                }
            }
        }
        Ok(Self { environments })
    }

    pub fn environments(&self) -> &[EnvironmentDescriptor] {
        &self.environments
    }

    pub fn len(&self) -> usize {
        self.environments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.environments.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementScore {
    pub statement: KnowledgeStatement,
    pub score: f64,
    /// Atlas entry id attaining `score`.
    pub witness: String,
    pub witness_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertAssessment {
    pub per_statement: Vec<StatementScore>,
    pub p_incompetent: f64,
    pub p_competent: f64,
}

/// Scores each statement against `query` by argmax over the atlas of
/// visual × semantic similarity.
///
/// Atlas labels with no in-vocabulary token count as unrelated (similarity
/// 0). An unresolvable statement concept is an error. Ties keep the lowest
/// atlas index.
pub fn assess_expert(
    query: &EnvironmentDescriptor,
    atlas: &ReferenceAtlas,
    statements: &[KnowledgeStatement],
    lexicon: &SemanticLexicon,
    calib: &CalibrationModel,
) -> Result<ExpertAssessment> {
    if atlas.is_empty() {
        return Err(Error::EmptyAtlas);
    }
    let visual = atlas
        .environments()
        .iter()
        .map(|env| visual_similarity(query, env, calib))
        .collect::<Result<Vec<_>>>()?;
    let label_vectors: Vec<Option<Vec<f64>>> = atlas
        .environments()
        .iter()
        .map(|env| phrase_vector(env.label().unwrap_or_default(), lexicon).ok())
        .collect();

    let mut per_statement = Vec::with_capacity(statements.len());
    for statement in statements {
        let concept = phrase_vector(statement.concept(), lexicon)?;
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, (vis, label)) in visual.iter().zip(&label_vectors).enumerate() {
            let sem = label
                .as_deref()
                .map_or(0.0, |l| clipped_cosine(l, &concept));
            let score = vis * sem;
            if score > best.1 {
                best = (i, score);
            }
        }
        per_statement.push(StatementScore {
            statement: statement.clone(),
            score: best.1,
            witness: atlas.environments()[best.0].id().to_string(),
            witness_index: best.0,
        });
    }

    let strongest = |polarity| {
        per_statement
            .iter()
            .filter(|s| s.statement.polarity() == polarity)
            .map(|s| s.score)
            .fold(0.0_f64, f64::max)
    };
    Ok(ExpertAssessment {
        p_incompetent: strongest(CompetenceLabel::Incompetent),
        p_competent: strongest(CompetenceLabel::Competent),
        per_statement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(entries: &[(&str, &[f64])]) -> SemanticLexicon {
        entries.iter().map(|(t, v)| (*t, v.to_vec())).collect()
    }

    fn env(id: &str, label: &str, v: &[f64]) -> EnvironmentDescriptor {
        EnvironmentDescriptor::new(id, v.to_vec())
            .unwrap()
            .with_label(label)
    }

    /// nature ~ forest, office orthogonal; width 1.
    fn toy() -> (SemanticLexicon, CalibrationModel) {
        let lexicon = lex(&[
            ("nature", &[1.0, 0.0]),
            ("forest", &[1.0, 0.0]),
            ("office", &[0.0, 1.0]),
        ]);
        (
            lexicon,
            CalibrationModel::from_kernel_width(1.0, 2).unwrap(),
        )
    }

    /// Query at the origin with forest and office anchors placed so their
    /// kernel values are `kf` and `ko` (distance sqrt(-ln k) at width 1).
    fn scene(kf: f64, ko: f64) -> (ReferenceAtlas, EnvironmentDescriptor) {
        let atlas = ReferenceAtlas::new(vec![
            env("forest", "forest", &[(-kf.ln()).sqrt(), 0.0]),
            env("office", "office", &[0.0, (-ko.ln()).sqrt()]),
        ])
        .unwrap();
        (
            atlas,
            EnvironmentDescriptor::new("q", vec![0.0, 0.0]).unwrap(),
        )
    }

    #[test]
    fn phrase_vector_cases() {
        let l = lex(&[("forest", &[1.0, 0.0]), ("dense", &[1.0, 0.0])]);
        assert_eq!(phrase_vector("forest", &l).unwrap(), vec![1.0, 0.0]);
        let l = lex(&[("dense", &[1.0, 0.0]), ("forest", &[0.0, 1.0])]);
        let v = phrase_vector("dense forest", &l).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - h).abs() < 1e-15 && (v[1] - h).abs() < 1e-15);
        assert!(matches!(
            phrase_vector("xyzzy", &l),
            Err(Error::AllTokensOutOfVocabulary(_))
        ));
        assert!(matches!(
            phrase_vector("", &l),
            Err(Error::AllTokensOutOfVocabulary(_))
        ));
        // OOV tokens are skipped; case-folded
        assert_eq!(phrase_vector("Dense XYZZY", &l).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn phrase_vector_zero_mean() {
        let l = lex(&[("up", &[1.0, 0.0]), ("down", &[-1.0, 0.0])]);
        assert!(matches!(
            phrase_vector("up down", &l),
            Err(Error::ZeroVector(_))
        ));
    }

    #[test]
    fn semantic_similarity_cases() {
        let l = lex(&[
            ("forest", &[0.6, 0.8]),
            ("office", &[0.0, 1.0]),
            ("nature", &[1.0, 0.0]),
            ("anti", &[-1.0, 0.0]),
        ]);
        assert!((semantic_similarity("forest", "forest", &l).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(semantic_similarity("office", "nature", &l).unwrap(), 0.0);
        assert_eq!(semantic_similarity("nature", "anti", &l).unwrap(), 0.0);
        assert_eq!(
            semantic_similarity("forest", "nature", &l).unwrap(),
            semantic_similarity("nature", "forest", &l).unwrap()
        );
    }

    #[test]
    fn lexicon_rejects_bad_vectors() {
        let mut l = SemanticLexicon::new(2);
        assert!(l.insert("a", vec![1.0]).is_err());
        assert!(l.insert("a", vec![0.0, 0.0]).is_err());
        assert!(l.insert("a", vec![f64::NAN, 1.0]).is_err());
        l.insert("Forest", vec![1.0, 1.0]).unwrap();
        assert!(l.get("forest").is_some());
    }

    #[test]
    fn visual_similarity_cases() {
        let c = CalibrationModel::from_kernel_width(2.0, 1).unwrap();
        let q = env("q", "x", &[0.0]);
        assert_eq!(visual_similarity(&q, &q, &c).unwrap(), 1.0);
        let at_width = env("e", "x", &[2.0]);
        assert!((visual_similarity(&q, &at_width, &c).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let sims: Vec<f64> = [0.5, 1.0, 3.0]
            .iter()
            .map(|&x| visual_similarity(&q, &env("e", "x", &[x]), &c).unwrap())
            .collect();
        assert!(sims[0] > sims[1] && sims[1] > sims[2]);
    }

    #[test]
    fn statement_parsing() {
        let s: KnowledgeStatement = "incompetent:nature".parse().unwrap();
        assert_eq!(s.polarity(), CompetenceLabel::Incompetent);
        assert_eq!(s.concept(), "nature");
        let s: KnowledgeStatement = "Competent:  Living_Room ".parse().unwrap();
        assert_eq!(s.to_string(), "competent:living room");
        for bad in ["nature", "incompetent:", "maybe:nature", "incompetent:  "] {
            assert!(bad.parse::<KnowledgeStatement>().is_err(), "{bad}");
        }
    }

    #[test]
    fn park_case_scores_one_half() {
        let (lexicon, calib) = toy();
        let (atlas, q) = scene(0.5, 0.05);
        let stmt = vec!["incompetent:nature".parse().unwrap()];
        let out = assess_expert(&q, &atlas, &stmt, &lexicon, &calib).unwrap();
        assert!((out.p_incompetent - 0.5).abs() < 1e-12);
        assert_eq!(out.per_statement[0].witness, "forest");
        assert_eq!(out.p_competent, 0.0);
    }

    #[test]
    fn desk_case_scores_near_zero() {
        let (lexicon, calib) = toy();
        let (atlas, q) = scene(0.02, 0.9);
        let stmt = vec!["incompetent:nature".parse().unwrap()];
        let out = assess_expert(&q, &atlas, &stmt, &lexicon, &calib).unwrap();
        assert!((out.p_incompetent - 0.02).abs() < 1e-12);
        assert_eq!(out.per_statement[0].witness, "forest");
    }

    #[test]
    fn no_statements_and_empty_atlas() {
        let (lexicon, calib) = toy();
        let (atlas, q) = scene(0.5, 0.05);
        let out = assess_expert(&q, &atlas, &[], &lexicon, &calib).unwrap();
        assert!(out.per_statement.is_empty());
        assert_eq!((out.p_incompetent, out.p_competent), (0.0, 0.0));
        let empty = ReferenceAtlas::new(vec![]).unwrap();
        assert!(matches!(
            assess_expert(&q, &empty, &[], &lexicon, &calib),
            Err(Error::EmptyAtlas)
        ));
    }

    #[test]
    fn oov_atlas_label_counts_as_unrelated() {
        let (lexicon, calib) = toy();
        let atlas = ReferenceAtlas::new(vec![
            env("a", "quux", &[0.0, 0.0]),
            env("b", "forest", &[3.0, 0.0]),
        ])
        .unwrap();
        let q = EnvironmentDescriptor::new("q", vec![0.0, 0.0]).unwrap();
        let stmt = vec!["incompetent:nature".parse().unwrap()];
        let out = assess_expert(&q, &atlas, &stmt, &lexicon, &calib).unwrap();
        assert_eq!(out.per_statement[0].witness, "b");
        assert!((out.p_incompetent - (-9.0f64).exp()).abs() < 1e-15);

        let stmt = vec!["incompetent:xyzzy".parse().unwrap()];
        assert!(matches!(
            assess_expert(&q, &atlas, &stmt, &lexicon, &calib),
            Err(Error::AllTokensOutOfVocabulary(_))
        ));
    }

    #[test]
    fn aggregates_by_polarity() {
        let (lexicon, calib) = toy();
        let (atlas, q) = scene(0.5, 0.8);
        let stmts: Vec<KnowledgeStatement> = [
            "incompetent:nature",
            "competent:office",
            "incompetent:office",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
        let out = assess_expert(&q, &atlas, &stmts, &lexicon, &calib).unwrap();
        assert!((out.p_incompetent - 0.8).abs() < 1e-12);
        assert!((out.p_competent - 0.8).abs() < 1e-12);
        assert_eq!(out.per_statement[0].witness, "forest");
        assert_eq!(out.per_statement[1].witness, "office");
    }

    #[test]
    fn atlas_requires_labels() {
        let unlabeled = EnvironmentDescriptor::new("u", vec![0.0]).unwrap();
        assert!(matches!(
            ReferenceAtlas::new(vec![unlabeled]),
            Err(Error::UnlabeledAtlasEntry(_))
        ));
    }
}
