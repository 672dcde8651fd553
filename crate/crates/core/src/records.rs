//! JSONL input schemas and their resolution into scored record types.
//!
//! Inline matrices take precedence; otherwise the provider is queried with
//! the question as shared context.

use serde::{Deserialize, Serialize};

use crate::claims::ClaimRecord;
use crate::providers::{build_entailment_matrix, EntailmentProvider, EntailmentRequest, ProviderError};
use crate::semantic_graph::EntailmentMatrix;
use crate::sentence::QueryRecord;

/// One sentence-mode input line. Entailment-file records (`context`,
/// `texts`, `probs`) parse as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInput {
    pub id: String,
    #[serde(default, alias = "context")]
    pub question: String,
    #[serde(default)]
    pub greedy_response: String,
    #[serde(alias = "texts")]
    pub responses: Vec<String>,
    #[serde(default, alias = "probs", skip_serializing_if = "Option::is_none")]
    pub entailment: Option<EntailmentMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

impl QueryInput {
    pub fn resolve(self, provider: Option<&dyn EntailmentProvider>) -> Result<QueryRecord, ProviderError> {
        let entailment = match (self.entailment, provider) {
            (Some(em), _) => em,
            (None, Some(p)) => build_entailment_matrix(p, &self.question, &self.responses)?,
            (None, None) => {
                return Err(ProviderError::Config(format!(
                    "record {:?} has no inline entailment and no provider is configured",
                    self.id
                )))
            }
        };
        if entailment.n() != self.responses.len() {
            return Err(ProviderError::Request(format!(
                "record {:?}: entailment covers {} responses, record has {}",
                self.id,
                entailment.n(),
                self.responses.len()
            )));
        }
        Ok(QueryRecord {
            id: self.id,
            question: self.question,
            greedy_response: self.greedy_response,
            responses: self.responses,
            entailment,
            label: self.label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimInput {
    pub id: String,
    #[serde(default)]
    pub question: String,
    pub claims: Vec<String>,
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rc_entails: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<bool>>,
}

impl ClaimInput {
    /// A response supports a claim when entailment is its most probable class.
    pub fn resolve(self, provider: Option<&dyn EntailmentProvider>) -> Result<ClaimRecord, ProviderError> {
        let rc_entails = match (self.rc_entails, provider) {
            (Some(rc), _) => rc,
            (None, Some(p)) => support_matrix(p, &self.question, &self.responses, &self.claims)?,
            (None, None) => {
                return Err(ProviderError::Config(format!(
                    "record {:?} has no rc_entails and no provider is configured",
                    self.id
                )))
            }
        };
        Ok(ClaimRecord {
            id: self.id,
            question: self.question,
            claims: self.claims,
            responses: self.responses,
            rc_entails,
            labels: self.labels,
        })
    }
}

/// `N × M` binary support matrix from response → claim entailment.
pub fn support_matrix(
    provider: &dyn EntailmentProvider,
    context: &str,
    responses: &[String],
    claims: &[String],
) -> Result<Vec<Vec<u8>>, ProviderError> {
    let n = responses.len();
    let texts: Vec<String> = responses.iter().chain(claims).cloned().collect();
    let pairs = (0..n)
        .flat_map(|r| (0..claims.len()).map(move |c| (r, n + c)))
        .collect();
    let req = EntailmentRequest::new(context, texts, pairs)?;
    let triples = provider.fetch(&req)?;
    let mut rc = vec![vec![0u8; claims.len()]; n];
    for (&(r, c), t) in req.pairs().iter().zip(&triples) {
        rc[r][c - n] = u8::from(t[0] >= t[1] && t[0] >= t[2]);
    }
    Ok(rc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::MockProvider;

    #[test]
    fn inline_entailment_wins() {
        let line = r#"{"id":"q1","responses":["a","b"],"entailment":[[[1,0,0],[0,0,1]],[[0,0,1],[1,0,0]]],"label":true}"#;
        let input: QueryInput = serde_json::from_str(line).unwrap();
        let q = input.resolve(Some(&MockProvider::new(0))).unwrap();
        assert_eq!(q.entailment.get(0, 1), [0.0, 0.0, 1.0]);
        assert_eq!(q.label, Some(true));
    }

    #[test]
    fn entailment_file_lines_parse() {
        let line = r#"{"id":"f","context":"Q?","texts":["a","b"],"probs":[[[1,0,0],[0.2,0.3,0.5]],[[0.1,0.1,0.8],[1,0,0]]]}"#;
        let q = serde_json::from_str::<QueryInput>(line).unwrap().resolve(None).unwrap();
        assert_eq!(q.question, "Q?");
        assert_eq!(q.entailment.get(1, 0), [0.1, 0.1, 0.8]);
    }

    #[test]
    fn missing_entailment_needs_provider() {
        let input: QueryInput = serde_json::from_str(r#"{"id":"q","responses":["a","b"]}"#).unwrap();
        assert!(input.clone().resolve(None).is_err());
        let q = input.resolve(Some(&MockProvider::new(0))).unwrap();
        assert_eq!(q.entailment.n(), 2);
    }

    #[test]
    fn mismatched_inline_matrix() {
        let line = r#"{"id":"q","responses":["a","b","c"],"entailment":[[[1,0,0],[0,0,1]],[[0,0,1],[1,0,0]]]}"#;
        let input: QueryInput = serde_json::from_str(line).unwrap();
        assert!(matches!(input.resolve(None), Err(ProviderError::Request(_))));
    }

    #[test]
    fn identical_text_supports_claim() {
        let responses = vec!["Paris is the capital.".to_string(), "Lyon.".to_string()];
        let claims = vec!["Paris is the capital.".to_string()];
        let rc = support_matrix(&MockProvider::new(5), "", &responses, &claims).unwrap();
        assert_eq!(rc[0][0], 1);
        let input = ClaimInput {
            id: "c".into(),
            question: String::new(),
            claims,
            responses,
            rc_entails: None,
            labels: None,
        };
        let cr = input.resolve(Some(&MockProvider::new(5))).unwrap();
        assert_eq!(cr.rc_entails, rc);
    }
}
