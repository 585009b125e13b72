//! Turning a segment into a ternary feature vector by asking every question
//! of every bank.

use super::{BankMap, DetectorError, FeatureVector};
use crate::corpus::LabelRegistry;
use crate::gateway::{Gateway, ModelProfile};
use crate::prompts::{self, PromptSet};

const MARKERS: [(&str, i8); 3] = [("[[yes]]", 1), ("[[no]]", -1), ("[[other]]", 0)];

/// Maps an answer to 1 / −1 / 0. Answers mentioning no marker, or more than
/// one distinct marker, count as 0.
pub fn parse_answer(response: &str) -> i8 {
    let lower = response.to_lowercase();
    let mut found = MARKERS.iter().filter(|(m, _)| lower.contains(m));
    match (found.next(), found.next()) {
        (Some(&(_, value)), None) => value,
        _ => 0,
    }
}

/// Checks the banks against the registry and returns the common bank size.
fn bank_size(banks: &BankMap, registry: &LabelRegistry) -> Result<usize, DetectorError> {
    let mut f_c = None;
    for label in registry.labels() {
        let bank = banks.get(&label.key).ok_or_else(|| DetectorError::MissingBank(label.key.clone()))?;
        match f_c {
            None if bank.is_empty() => {
                return Err(DetectorError::InvalidBank {
                    label: label.key.clone(),
                    reason: "no questions".into(),
                })
            }
            None => f_c = Some(bank.len()),
            Some(n) if n != bank.len() => {
                return Err(DetectorError::InvalidBank {
                    label: label.key.clone(),
                    reason: format!("{} questions, other banks have {n}", bank.len()),
                })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = banks.keys().find(|k| registry.get(k).is_none()) {
        return Err(DetectorError::UnknownLabel(extra.clone()));
    }
    Ok(f_c.unwrap_or(0))
}

/// Featurizes several segments; all questions go through the gateway as one
/// batch. Index `block·F_c + q` holds the answer to question `q` of the
/// label at registry position `block`.
pub fn featurize_batch(
    segments: &[&str],
    banks: &BankMap,
    registry: &LabelRegistry,
    gateway: &Gateway,
    prompts: &PromptSet,
    profile: &ModelProfile,
) -> Result<Vec<FeatureVector>, DetectorError> {
    let f_c = bank_size(banks, registry)?;
    let dim = registry.len() * f_c;
    let mut requests = Vec::with_capacity(segments.len() * dim);
    for segment in segments {
        for label in registry.labels() {
            for question in &banks[&label.key] {
                requests.push(profile.request(prompts::render(
                    &prompts.feature_qa,
                    &[("review", segment), ("question", question.as_str())],
                )));
            }
        }
    }
    let mut vectors: Vec<FeatureVector> = segments
        .iter()
        .map(|_| FeatureVector {
            values: Vec::with_capacity(dim),
            registry_version: registry.version.clone(),
        })
        .collect();
    for (i, response) in gateway.complete_all(&requests).into_iter().enumerate() {
        let within = i % dim;
        match response {
            Ok(r) => vectors[i / dim].values.push(parse_answer(&r.content)),
            Err(source) => {
                return Err(DetectorError::Featurize {
                    label: registry.labels()[within / f_c].key.clone(),
                    question: within % f_c,
                    source,
                })
            }
        }
    }
    Ok(vectors)
}

pub fn featurize(
    segment: &str,
    banks: &BankMap,
    registry: &LabelRegistry,
    gateway: &Gateway,
    prompts: &PromptSet,
    profile: &ModelProfile,
) -> Result<FeatureVector, DetectorError> {
    let mut out = featurize_batch(&[segment], banks, registry, gateway, prompts, profile)?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_mapping() {
        assert_eq!(parse_answer("[[Yes]]"), 1);
        assert_eq!(parse_answer("The answer is [[No]]."), -1);
        assert_eq!(parse_answer("[[Other]]"), 0);
        assert_eq!(parse_answer("[[Yes]] ... [[Yes]]"), 1);
        assert_eq!(parse_answer("[[Yes]] or [[No]]"), 0);
        assert_eq!(parse_answer("Yes"), 0);
        assert_eq!(parse_answer(""), 0);
    }
}
