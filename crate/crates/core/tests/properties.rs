use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reachlab::action_space::enumerate_action_space;
use reachlab::episode::{run_episode, EpisodeConfig, ScriptedAgent, Termination};
use reachlab::geometry::{BoundingBox, ScreenSize};
use reachlab::metrics::{judge_iou, judge_text, score_run, Prediction, ScoreConfig};
use reachlab::model::{Action, Edge, FlowStep, GuiFlow, GuiGraph, GuiPage};
use reachlab::reward::CompletionSpec;
use reachlab::sampler::{FlowSampler, SamplerConfig, TaskTemplates};
use reachlab::synth::{random_graph, PageXml, SynthConfig};

fn sample(seed: u64, pages: usize) -> (GuiGraph, Vec<GuiFlow>) {
    let g = random_graph(&SynthConfig { pages, ..Default::default() }, seed);
    let cfg = SamplerConfig { seed, ..Default::default() };
    let flows = FlowSampler::new(cfg).unwrap().sample(&g, 5, &TaskTemplates::default()).unwrap();
    (g, flows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn golden_replay_reproduces_the_flow(seed in 0u64..10_000, pages in 4usize..14) {
        let (g, flows) = sample(seed, pages);
        for f in &flows {
            let trace = run_episode(&g, &mut ScriptedAgent::golden(f), &f.task, f.start_page(), EpisodeConfig::default()).unwrap();
            prop_assert_eq!(trace.terminated_by, Termination::Complete);
            prop_assert_eq!(&trace.final_page, &f.terminal_page);
            let replayed: Vec<FlowStep> = trace.to_flow().steps.into_iter().filter(|s| !s.action.is_complete()).collect();
            prop_assert_eq!(&replayed, &f.steps);
            let spec = CompletionSpec::reach_terminal(f, &g).unwrap();
            prop_assert!(spec.completed_by(&g, f.start_page(), &trace.actions().cloned().collect::<Vec<_>>()));
        }
    }

    #[test]
    fn positional_match_implies_success(seed in 0u64..10_000, pages in 4usize..14, edits in 0usize..4) {
        let (g, flows) = sample(seed, pages);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all_pages: Vec<&GuiPage> = g.pages().collect();
        let cfg = ScoreConfig::default();
        for f in &flows {
            let mut actions: Vec<Action> = f.actions().cloned().chain([Action::complete()]).collect();
            for _ in 0..edits {
                let i = rng.random_range(0..actions.len());
                match rng.random_range(0..3) {
                    0 => {
                        let page = all_pages.choose(&mut rng).unwrap();
                        let mut a = enumerate_action_space(page).choose(&mut rng).unwrap().clone();
                        if let Action::Input { text, .. } = &mut a {
                            *text = ["phone", "laptop", "phone case"].choose(&mut rng).unwrap().to_string();
                        }
                        actions[i] = a;
                    }
                    1 => actions.truncate(i.max(1)),
                    _ => actions.insert(i, Action::complete()),
                }
            }
            let spec = CompletionSpec::reach_terminal(f, &g).unwrap();
            let pred = Prediction { task: f.task.clone(), actions };
            let r = score_run(&[pred], std::slice::from_ref(f), &[spec], &g, &cfg).unwrap();
            if r.counts.task_iou_hits == 1 && r.counts.task_text_hits == 1 {
                prop_assert_eq!(r.counts.task_successes, 1);
            }
        }
    }
}

/// Both judges accept a near-miss input text, but the environment matches
/// input text exactly, so the replay does not follow the gold edge.
#[test]
fn near_miss_text_passes_judges_but_not_the_environment() {
    let screen = ScreenSize::default();
    let b = BoundingBox::new(40, 100, 680, 180).unwrap();
    let xml = |label: &str| PageXml::new().label(label, BoundingBox::new(0, 0, 720, 60).unwrap()).input("query", b).build();
    let pages = vec![GuiPage::new("S", xml("search"), screen).unwrap(), GuiPage::new("R", xml("results"), screen).unwrap()];
    let gold = Action::input("query", b, "a b c d e f");
    let near = Action::input("query", b, "a b c d e g");
    let g = GuiGraph::new(screen, "S", pages, vec![Edge { src: "S".into(), action: gold.clone(), dst: "R".into() }]).unwrap();
    assert!(judge_iou(&near, &gold, screen, 0.14) && judge_text(&near, &gold));
    assert!(g.transition("S", &near).is_none());
}
