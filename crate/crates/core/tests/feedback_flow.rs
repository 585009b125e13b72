#[path = "support/scripted.rs"]
mod scripted;

use std::sync::{Arc, Mutex};

use lazylint_core::corpus::{IssueLabel, LabelRegistry, PlanContext};
use lazylint_core::feedback::{
    crossover, fallback_plan, fitness, generate_feedback, generate_plan, init_population, run_evolution,
    EvolutionTrace, FeedbackCandidate, FeedbackError, FeedbackStrategy, FeedbackTask, GaConfig, Plan, Stage,
    TemplateRegistry,
};
use lazylint_core::gateway::{ChatRequest, Decoding, Gateway, ModelProfile};
use lazylint_core::prompts::PromptSet;

const KEY: &str = "h3-not-novel";
const SEGMENT: &str = "The approach is not novel.";

struct Setup {
    label: IssueLabel,
    context: PlanContext,
    template: String,
    prompts: PromptSet,
    profile: ModelProfile,
}

impl Setup {
    fn new() -> Self {
        Self {
            label: LabelRegistry::shipped().get(KEY).unwrap().clone(),
            context: PlanContext {
                abstract_text: Some("We train a retriever with hard negatives.".into()),
                reviewer_summary: None,
                reviewer_strengths: None,
            },
            template: TemplateRegistry::shipped().get(KEY).unwrap().to_string(),
            prompts: PromptSet::default(),
            profile: ModelProfile::new("scripted", Decoding::default()),
        }
    }

    fn task<'a>(&'a self, gateway: &'a Gateway) -> FeedbackTask<'a> {
        FeedbackTask {
            segment: SEGMENT,
            label: &self.label,
            context: &self.context,
            template: &self.template,
            gateway,
            prompts: &self.prompts,
            profile: &self.profile,
        }
    }

    fn plan(&self, gateway: &Gateway) -> Result<Plan, FeedbackError> {
        generate_plan(SEGMENT, &self.label, &self.context, gateway, &self.prompts, &self.profile)
    }
}

/// A gateway answering from a queue, recording every prompt it sees.
fn queued(answers: Vec<&'static str>) -> (Gateway, Arc<Mutex<Vec<String>>>) {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let gateway = scripted::gateway(move |r: &ChatRequest| {
        let mut log = log.lock().unwrap();
        log.push(scripted::prompt(r).to_string());
        answers.get(log.len() - 1).map(|a| a.to_string())
    });
    (gateway, seen)
}

// -------------------------------------------------------------------- plans

#[test]
fn plan_from_clean_json() {
    let s = Setup::new();
    let (gateway, seen) = queued(vec![scripted::PLAN_ANSWER]);
    let plan = s.plan(&gateway).unwrap();
    assert_eq!(plan.plan, "Quote the abstract");
    let prompt = &seen.lock().unwrap()[0];
    assert!(prompt.contains("We train a retriever with hard negatives."));
    assert!(prompt.contains("Not provided"));
}

#[test]
fn plan_embedded_in_prose() {
    let s = Setup::new();
    let (gateway, _) = queued(vec![
        r#"Let me think [briefly]. Plan: [{"plan": "Cite prior work", "explanation": "Novelty needs a comparison."}, {"plan": "x", "explanation": "y"}] Done."#,
    ]);
    let plan = s.plan(&gateway).unwrap();
    assert_eq!(plan.plan, "Cite prior work");
    assert_eq!(plan.explanation, "Novelty needs a comparison.");
}

#[test]
fn plan_falls_back_after_one_retry() {
    let s = Setup::new();
    let (gateway, seen) = queued(vec!["no idea", r#"[{"plan": "", "explanation": "empty"}]"#]);
    assert_eq!(s.plan(&gateway).unwrap(), fallback_plan());
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_ne!(seen[0], seen[1]);
}

// --------------------------------------------------------------- population

fn plan() -> Plan {
    Plan {
        plan: "Quote the abstract".into(),
        explanation: "It names the contribution.".into(),
    }
}

fn init_texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("Please cite prior work number {i}.")).collect()
}

#[test]
fn population_of_ten_distinct_prompts() {
    let s = Setup::new();
    let prompts = Arc::new(Mutex::new(Vec::new()));
    let log = prompts.clone();
    let script = scripted::ga_script(init_texts(10), |_| String::new());
    let gateway = scripted::gateway(move |r| {
        log.lock().unwrap().push(scripted::prompt(r).to_string());
        script(r)
    });
    let population = init_population(&s.task(&gateway), &plan(), 10, &GaConfig::default()).unwrap();
    assert_eq!(population.len(), 10);
    for (i, c) in population.iter().enumerate() {
        assert_eq!(c.id, format!("g0-c{i}"));
        assert_eq!(c.generation, 0);
        assert!(c.parent_ids.is_empty());
        assert_eq!(c.text, format!("Please cite prior work number {i}."));
        assert_eq!(c.fitness, fitness(&c.text, &s.template, &GaConfig::default()));
    }
    let mut seen = prompts.lock().unwrap().clone();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 10);
}

#[test]
fn single_candidate_population() {
    let s = Setup::new();
    let gateway = scripted::gateway(scripted::ga_script(init_texts(1), |_| String::new()));
    let population = init_population(&s.task(&gateway), &plan(), 1, &GaConfig::default()).unwrap();
    assert_eq!(population.len(), 1);
}

#[test]
fn duplicate_candidates_are_kept() {
    let s = Setup::new();
    let texts = vec!["Same text.".to_string(), "Same text.".to_string(), "Other.".to_string()];
    let gateway = scripted::gateway(scripted::ga_script(texts, |_| String::new()));
    let population = init_population(&s.task(&gateway), &plan(), 3, &GaConfig::default()).unwrap();
    assert_eq!(population[0].text, population[1].text);
    assert_eq!(population.len(), 3);
}

#[test]
fn missing_completion_fails_the_init_stage() {
    let s = Setup::new();
    let gateway = scripted::gateway(scripted::ga_script(init_texts(3), |_| String::new()));
    let err = init_population(&s.task(&gateway), &plan(), 5, &GaConfig::default()).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Init));
}

// ---------------------------------------------------------------- crossover

fn parent(id: &str, generation: usize, text: &str) -> FeedbackCandidate {
    let config = GaConfig::default();
    FeedbackCandidate {
        id: id.into(),
        text: text.into(),
        fitness: fitness(text, "", &config),
        generation,
        parent_ids: Vec::new(),
    }
}

#[test]
fn five_parent_crossover_records_lineage() {
    let s = Setup::new();
    let seen = Arc::new(Mutex::new(String::new()));
    let log = seen.clone();
    let gateway = scripted::gateway(move |r| {
        *log.lock().unwrap() = scripted::prompt(r).to_string();
        Some("\"Feedback: Please cite the closest prior work.\"".into())
    });
    let parents: Vec<FeedbackCandidate> = (0..5).map(|i| parent(&format!("p{i}"), i % 3, &format!("Draft {i}."))).collect();
    let refs: Vec<&FeedbackCandidate> = parents.iter().collect();
    let child = crossover(&s.task(&gateway), &refs, "x1", &GaConfig::default()).unwrap();
    assert_eq!(child.parent_ids, vec!["p0", "p1", "p2", "p3", "p4"]);
    assert_eq!(child.generation, 3);
    assert_eq!(child.id, "x1");
    assert_eq!(child.text, "Please cite the closest prior work.");
    assert_eq!(child.fitness, fitness(&child.text, &s.template, &GaConfig::default()));
    let prompt = seen.lock().unwrap().clone();
    assert!(prompt.contains("Parent 5: Draft 4."));
    assert!(prompt.contains("five"));
}

#[test]
fn crossover_needs_two_parents_and_allows_copies() {
    let s = Setup::new();
    let gateway = scripted::gateway(|_| Some("Draft 0.".into()));
    let a = parent("a", 0, "Draft 0.");
    let b = parent("b", 4, "Draft 1.");
    let err = crossover(&s.task(&gateway), &[&a], "x", &GaConfig::default()).unwrap_err();
    assert!(matches!(err, FeedbackError::TooFewParents(1)));
    let child = crossover(&s.task(&gateway), &[&a, &b], "x", &GaConfig::default()).unwrap();
    assert_eq!(child.generation, 5);
    assert_eq!(child.text, a.text);
}

// ---------------------------------------------------------------- evolution

const STRONG: &str = "Your comment says the approach is not novel. Please cite the prior work and explain the \
                      overlap so the authors can respond.";

#[test]
fn dominant_initial_candidate_is_returned() {
    let s = Setup::new();
    let init: Vec<String> = (0..10).map(|i| if i == 4 { STRONG.into() } else { format!("Note {i}.") }).collect();
    let gateway = scripted::gateway(scripted::ga_script(init, |_| "No.".into()));
    let config = GaConfig::default();
    for seed in 0..5 {
        let trace = run_evolution(&s.task(&gateway), &config, seed).unwrap();
        assert_eq!(trace.best.id, "g0-c4");
        assert!(trace.tie_break.is_none());
        assert_eq!(trace.generations.len(), 4);
        for (g, snap) in trace.generations.iter().enumerate() {
            assert_eq!(snap.generation, g);
            assert_eq!(snap.candidates.len(), 10);
            assert_eq!(snap.selected.len(), if g == 0 { 0 } else { 5 });
        }
    }
}

#[test]
fn weak_tie_child_leaves_first_leader() {
    let s = Setup::new();
    let init: Vec<String> = (0..10).map(|i| if i == 1 || i == 8 { STRONG.into() } else { format!("Note {i}.") }).collect();
    let gateway = scripted::gateway(scripted::ga_script(init, |_| "No.".into()));
    let trace = run_evolution(&s.task(&gateway), &GaConfig::default(), 3).unwrap();
    let tie = trace.tie_break.as_ref().unwrap();
    assert_eq!(tie.child.id, "final");
    assert!(tie.leaders.contains(&"g0-c1".to_string()) && tie.leaders.contains(&"g0-c8".to_string()));
    assert_eq!(trace.best.id, "g0-c1");
}

#[test]
fn evolution_is_deterministic_and_serializable() {
    let s = Setup::new();
    let gateway = scripted::gateway(scripted::ga_script(init_texts(10), |id| format!("Child {id} cites prior work.")));
    let a = run_evolution(&s.task(&gateway), &GaConfig::default(), 9).unwrap();
    let b = run_evolution(&s.task(&gateway), &GaConfig::default(), 9).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    assert_eq!(serde_json::from_str::<EvolutionTrace>(&json).unwrap(), a);
}

#[test]
fn invalid_config_is_rejected_before_any_call() {
    let s = Setup::new();
    let (gateway, seen) = queued(vec![]);
    let config = GaConfig {
        n: 3,
        n_parents: 5,
        ..GaConfig::default()
    };
    assert!(matches!(
        run_evolution(&s.task(&gateway), &config, 0),
        Err(FeedbackError::InvalidConfig(_))
    ));
    assert!(seen.lock().unwrap().is_empty());
}

#[test]
fn crossover_failure_reports_its_stage() {
    let s = Setup::new();
    let script = scripted::ga_script(init_texts(10), |_| String::new());
    let failing = scripted::gateway(move |r| {
        if scripted::prompt(r).contains("Offspring:") {
            None
        } else {
            script(r)
        }
    });
    let err = run_evolution(&s.task(&failing), &GaConfig::default(), 0).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Crossover));
}

// --------------------------------------------------------------- strategies

#[test]
fn every_strategy_scores_its_text_the_same_way() {
    let s = Setup::new();
    let registry = LabelRegistry::shipped();
    let script = scripted::ga_script(init_texts(10), |_| "Please cite prior work.".into());
    let gateway = scripted::gateway(move |r| {
        let p = scripted::prompt(r);
        if p.starts_with("Issues:") {
            Some("Feedback: Name the prior work you mean.".into())
        } else if p.starts_with("Task:") {
            Some("\"Cite the earlier papers.\"".into())
        } else {
            script(r)
        }
    });
    let config = GaConfig::default();
    let expected = [
        (FeedbackStrategy::ZeroShot, "Name the prior work you mean."),
        (FeedbackStrategy::Templatic, "Cite the earlier papers."),
        (FeedbackStrategy::PlanThenGenerate, "Please cite prior work number 0."),
    ];
    for (strategy, text) in expected {
        let out = generate_feedback(strategy, &s.task(&gateway), &registry, &config, 0).unwrap();
        assert_eq!(out.text, text, "{strategy:?}");
        assert_eq!(out.fitness, fitness(text, &s.template, &config));
        assert!(out.trace.is_none());
    }
    let genetic = generate_feedback(FeedbackStrategy::Genetic, &s.task(&gateway), &registry, &config, 0).unwrap();
    assert_eq!(genetic.fitness, genetic.trace.as_ref().unwrap().best.fitness);
}

#[test]
fn labels_without_templates_need_the_generic_fallback() {
    let templates = TemplateRegistry::shipped();
    let registry = LabelRegistry::shipped();
    let uncovered = templates.uncovered(&registry);
    assert!(!uncovered.is_empty());
    let key = uncovered[0];
    assert!(matches!(templates.resolve(key, false), Err(FeedbackError::MissingTemplate(_))));
    assert_eq!(templates.resolve(key, true).unwrap(), templates.get("generic").unwrap());
}
