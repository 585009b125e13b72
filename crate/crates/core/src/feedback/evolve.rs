//! Population initialization, Boltzmann parent selection, crossover and the
//! generation loop.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fitness::{fitness, FitnessBreakdown};
use super::plan::{generate_plan, Plan};
use super::{FeedbackError, GaConfig, Stage};
use crate::corpus::{IssueLabel, PlanContext};
use crate::gateway::{ChatRequest, Gateway, ModelProfile};
use crate::prompts::{self, PromptSet};

/// Totals closer than this count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCandidate {
    pub id: String,
    pub text: String,
    pub fitness: FitnessBreakdown,
    pub generation: usize,
    pub parent_ids: Vec<String>,
}

impl FeedbackCandidate {
    fn scored(id: String, text: String, template: &str, config: &GaConfig, generation: usize, parent_ids: Vec<String>) -> Self {
        let fitness = fitness(&text, template, config);
        Self {
            id,
            text,
            fitness,
            generation,
            parent_ids,
        }
    }
}

/// Everything one feedback job needs.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackTask<'a> {
    pub segment: &'a str,
    pub label: &'a IssueLabel,
    pub context: &'a PlanContext,
    pub template: &'a str,
    pub gateway: &'a Gateway,
    pub prompts: &'a PromptSet,
    pub profile: &'a ModelProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSnapshot {
    pub generation: usize,
    /// Ids chosen as parents for this generation (empty for the initial one).
    pub selected: Vec<String>,
    pub candidates: Vec<FeedbackCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieBreak {
    pub leaders: Vec<String>,
    pub child: FeedbackCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub label: String,
    pub seed: u64,
    pub template: String,
    pub plan: Plan,
    pub generations: Vec<GenerationSnapshot>,
    pub tie_break: Option<TieBreak>,
    pub best: FeedbackCandidate,
}

/// Drops wrapping quotes and a leading "Feedback:" from a model answer.
pub(crate) fn clean_feedback(raw: &str) -> String {
    let mut text = raw.trim();
    if text.len() >= 2 && text.starts_with('"') && text.ends_with('"') {
        text = text[1..text.len() - 1].trim();
    }
    if text.get(..9).is_some_and(|head| head.eq_ignore_ascii_case("feedback:")) {
        text = text[9..].trim_start();
    }
    text.to_string()
}

fn count_word(n: usize) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| w.to_string())
}

pub(crate) fn generation_request(task: &FeedbackTask<'_>, plan: &Plan, candidate: &str) -> ChatRequest {
    task.profile.request(prompts::render(
        &task.prompts.feedback_plan,
        &[
            ("weakness", task.segment),
            ("issue", task.label.display.as_str()),
            ("template", task.template),
            ("plan", plan.plan.as_str()),
            ("explanation", plan.explanation.as_str()),
            ("candidate", candidate),
        ],
    ))
}

fn crossover_request(task: &FeedbackTask<'_>, parents: &[&FeedbackCandidate], offspring: &str) -> ChatRequest {
    let listing = parents
        .iter()
        .enumerate()
        .map(|(i, p)| format!("Parent {}: {}", i + 1, p.text))
        .collect::<Vec<_>>()
        .join("\n");
    let count = parents.len().to_string();
    let word = count_word(parents.len());
    task.profile.request(prompts::render(
        &task.prompts.crossover,
        &[
            ("count_word", word.as_str()),
            ("count", count.as_str()),
            ("weakness", task.segment),
            ("issue", task.label.display.as_str()),
            ("parents", listing.as_str()),
            ("offspring", offspring),
        ],
    ))
}

/// `n` independent candidates; the candidate-index line keeps every
/// request's fingerprint distinct.
pub fn init_population(
    task: &FeedbackTask<'_>,
    plan: &Plan,
    n: usize,
    config: &GaConfig,
) -> Result<Vec<FeedbackCandidate>, FeedbackError> {
    let requests: Vec<ChatRequest> = (0..n)
        .map(|i| generation_request(task, plan, &format!("{} of {n}", i + 1)))
        .collect();
    task.gateway
        .complete_all(&requests)
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let r = r.map_err(|source| FeedbackError::Gateway {
                stage: Stage::Init,
                source,
            })?;
            Ok(FeedbackCandidate::scored(
                format!("g0-c{i}"),
                clean_feedback(&r.content),
                task.template,
                config,
                0,
                Vec::new(),
            ))
        })
        .collect()
}

/// Softmax of `fitness / tau`, shifted by the maximum for stability.
pub fn selection_probabilities(fits: &[f64], tau: f64) -> Vec<f64> {
    let max = fits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = fits.iter().map(|f| ((f - max) / tau).exp()).collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

/// Boltzmann tournament: draws `n_parents` distinct indices, each draw from
/// the softmax over the candidates not yet drawn.
pub fn select_parents<R: Rng>(
    population: &[FeedbackCandidate],
    n_parents: usize,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<usize>, FeedbackError> {
    if population.len() < n_parents {
        return Err(FeedbackError::PopulationTooSmall {
            population: population.len(),
            wanted: n_parents,
        });
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(FeedbackError::InvalidConfig("tau must be positive".into()));
    }
    let mut remaining: Vec<usize> = (0..population.len()).collect();
    let mut chosen = Vec::with_capacity(n_parents);
    while chosen.len() < n_parents {
        let fits: Vec<f64> = remaining.iter().map(|&i| population[i].fitness.total).collect();
        let probs = selection_probabilities(&fits, tau);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (j, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = j;
                break;
            }
        }
        chosen.push(remaining.remove(pick));
    }
    Ok(chosen)
}

/// One child synthesized from all `parents`.
pub fn crossover(
    task: &FeedbackTask<'_>,
    parents: &[&FeedbackCandidate],
    id: &str,
    config: &GaConfig,
) -> Result<FeedbackCandidate, FeedbackError> {
    if parents.len() < 2 {
        return Err(FeedbackError::TooFewParents(parents.len()));
    }
    let response = task
        .gateway
        .complete(&crossover_request(task, parents, id))
        .map_err(|source| FeedbackError::Gateway {
            stage: Stage::Crossover,
            source,
        })?;
    Ok(child_of(task, parents, id.to_string(), &response.content, config))
}

fn child_of(
    task: &FeedbackTask<'_>,
    parents: &[&FeedbackCandidate],
    id: String,
    raw: &str,
    config: &GaConfig,
) -> FeedbackCandidate {
    let generation = 1 + parents.iter().map(|p| p.generation).max().unwrap_or(0);
    FeedbackCandidate::scored(
        id,
        clean_feedback(raw),
        task.template,
        config,
        generation,
        parents.iter().map(|p| p.id.clone()).collect(),
    )
}

/// Plan, initial population, `n_generations` rounds of selection and
/// pairwise crossover, then the best candidate ever seen. Several candidates
/// tied at the top are crossed over once more; that child is returned unless
/// it scores below the tied leaders.
pub fn run_evolution(task: &FeedbackTask<'_>, config: &GaConfig, seed: u64) -> Result<EvolutionTrace, FeedbackError> {
    config.validate()?;
    let plan = generate_plan(task.segment, task.label, task.context, task.gateway, task.prompts, task.profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut population = init_population(task, &plan, config.n, config)?;
    let mut pool = population.clone();
    let mut generations = vec![GenerationSnapshot {
        generation: 0,
        selected: Vec::new(),
        candidates: population.clone(),
    }];

    for generation in 1..=config.n_generations {
        let selected = select_parents(&population, config.n_parents, config.tau, &mut rng)?;
        let parents: Vec<FeedbackCandidate> = selected.iter().map(|&i| population[i].clone()).collect();
        let pairs: Vec<Vec<usize>> = (0..config.n - config.n_parents)
            .map(|_| index::sample(&mut rng, parents.len(), 2).into_vec())
            .collect();
        let ids: Vec<String> = (0..pairs.len()).map(|j| format!("g{generation}-c{j}")).collect();
        let requests: Vec<ChatRequest> = pairs
            .iter()
            .zip(&ids)
            .map(|(pair, id)| crossover_request(task, &[&parents[pair[0]], &parents[pair[1]]], id))
            .collect();
        let mut children = Vec::with_capacity(pairs.len());
        for ((response, pair), id) in task.gateway.complete_all(&requests).into_iter().zip(&pairs).zip(ids) {
            let response = response.map_err(|source| FeedbackError::Gateway {
                stage: Stage::Crossover,
                source,
            })?;
            children.push(child_of(
                task,
                &[&parents[pair[0]], &parents[pair[1]]],
                id,
                &response.content,
                config,
            ));
        }
        pool.extend(children.iter().cloned());
        population = parents;
        population.extend(children);
        generations.push(GenerationSnapshot {
            generation,
            selected: selected.iter().map(|&i| generations[generation - 1].candidates[i].id.clone()).collect(),
            candidates: population.clone(),
        });
    }

    let top = pool.iter().map(|c| c.fitness.total).fold(f64::NEG_INFINITY, f64::max);
    let leaders: Vec<&FeedbackCandidate> = pool.iter().filter(|c| c.fitness.total >= top - TIE_TOLERANCE).collect();
    let (best, tie_break) = if leaders.len() >= 2 {
        let child = crossover(task, &leaders, "final", config).map_err(|e| match e {
            FeedbackError::Gateway { source, .. } => FeedbackError::Gateway {
                stage: Stage::TieBreak,
                source,
            },
            other => other,
        })?;
        let best = if child.fitness.total >= top {
            child.clone()
        } else {
            leaders[0].clone()
        };
        let tie = TieBreak {
            leaders: leaders.iter().map(|c| c.id.clone()).collect(),
            child,
        };
        (best, Some(tie))
    } else {
        (leaders[0].clone(), None)
    };
    Ok(EvolutionTrace {
        label: task.label.key.clone(),
        seed,
        template: task.template.to_string(),
        plan,
        generations,
        tie_break,
        best,
    })
}
