use std::collections::{HashMap, VecDeque};

use serde_json::{json, Value};

use reachlab::action_space::{align_action, enumerate_action_space, parse_page_xml};
use reachlab::geometry::ScreenSize;
use reachlab::metrics::{judge_step as judge, token_f1, MarginMode, ScoreConfig};
use reachlab::model::{Action, FlowStep, GuiFlow, GuiGraph, SubtaskSpec};
use reachlab::reward::{Classifier, CompletionSpec};
use reachlab::synth::{random_graph, SynthConfig};

fn screen(width: u32, height: u32) -> Result<ScreenSize, String> {
    ScreenSize::new(width, height).map_err(|e| e.to_string())
}

fn parse_action(s: &str) -> Result<Action, String> {
    serde_json::from_str(s).map_err(|e| format!("bad action: {e}"))
}

pub fn align_page(xml: &str, width: u32, height: u32) -> Result<String, String> {
    let screen = screen(width, height)?;
    let parsed = parse_page_xml(xml, screen).map_err(|e| e.to_string())?;
    let page = reachlab::model::GuiPage::new("page", xml, screen).map_err(|e| e.to_string())?;
    let actions: Vec<Value> = enumerate_action_space(&page)
        .into_iter()
        .map(|a| {
            let gesture = align_action(&a, screen).ok();
            json!({ "label": a.describe(), "action": a, "gesture": gesture })
        })
        .collect();
    let warnings: Vec<String> = parsed.warnings.iter().map(ToString::to_string).collect();
    Ok(json!({ "elements": parsed.elements, "warnings": warnings, "actions": actions }).to_string())
}

pub fn judge_step(pred: &str, gold: &str, width: u32, height: u32, margin: f64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&margin) {
        return Err(format!("margin must lie in [0, 1], got {margin}"));
    }
    let screen = screen(width, height)?;
    let (pred, gold) = (parse_action(pred)?, parse_action(gold)?);
    let cfg = ScoreConfig { margin, margin_mode: MarginMode::ExpandThenIntersect, ..Default::default() };
    let j = judge(&pred, &gold, screen, &cfg);
    let f1 = match (pred.input_text(), gold.input_text()) {
        (Some(p), Some(g)) => Some(token_f1(p, g)),
        _ => None,
    };
    let expanded = (!gold.is_complete()).then(|| gold.bounds().expand(screen, margin));
    Ok(json!({ "iou": j.iou_ok, "text": j.text_ok, "f1": f1, "expanded_gold": expanded }).to_string())
}

/// The page farthest from home by edge count, earliest page on ties.
fn farthest_page(g: &GuiGraph) -> Option<String> {
    let mut dist: HashMap<&str, usize> = HashMap::from([(g.home(), 0)]);
    let mut queue = VecDeque::from([g.home()]);
    let mut best = (0, None);
    while let Some(p) = queue.pop_front() {
        let d = dist[p];
        if d > best.0 {
            best = (d, Some(p));
        }
        for e in g.outgoing(p) {
            if !dist.contains_key(e.dst.as_str()) {
                dist.insert(&e.dst, d + 1);
                queue.push_back(&e.dst);
            }
        }
    }
    best.1.map(str::to_string)
}

pub fn reward_walk(seed: u64, pages: usize, history: &str) -> Result<String, String> {
    if !(2..=40).contains(&pages) {
        return Err(format!("pages must lie in 2..=40, got {pages}"));
    }
    let g = random_graph(&SynthConfig { pages, ..Default::default() }, seed);
    let target = farthest_page(&g).ok_or("home has no outgoing edges; try another seed")?;
    let spec = CompletionSpec::with_auto_depth(vec![SubtaskSpec::reach(&target, "")], &g, g.home())
        .map_err(|e| e.to_string())?;
    let classifier = Classifier::new(&g, g.home(), &spec).map_err(|e| e.to_string())?;

    let taken: Vec<Action> = if history.trim().is_empty() {
        Vec::new()
    } else {
        serde_json::from_str(history).map_err(|e| format!("bad history: {e}"))?
    };
    let mut page = g.home().to_string();
    let mut steps = Vec::with_capacity(taken.len());
    for (i, a) in taken.iter().enumerate() {
        if a.is_complete() {
            if i + 1 != taken.len() {
                return Err("nothing may follow Complete".into());
            }
            break;
        }
        let e = g.transition(&page, a).ok_or_else(|| format!("{} does nothing on {page}", a.describe()))?;
        steps.push(FlowStep { page_id: page.clone(), action: a.clone() });
        page = e.dst.clone();
    }
    let flow = GuiFlow { task: String::new(), steps, step_descriptions: Vec::new(), terminal_page: page.clone() };

    let current = g.require_page(&page).map_err(|e| e.to_string())?;
    let ended = taken.last().is_some_and(Action::is_complete);
    let mut options = Vec::new();
    for a in enumerate_action_space(current).into_iter().filter(|_| !ended) {
        let level = classifier.classify(&page, &flow, &a).map_err(|e| e.to_string())?;
        let dst = g.transition(&page, &a).map(|e| e.dst.clone());
        options.push(json!({ "label": a.describe(), "action": a, "level": level, "dst": dst }));
    }
    let edges: Vec<Value> = g.edges().iter().map(|e| json!({ "src": e.src, "dst": e.dst, "label": e.action.describe() })).collect();
    let path: Vec<&str> = flow.page_sequence();
    Ok(json!({
        "home": g.home(),
        "target": target,
        "golden_length": classifier.golden_length(),
        "max_search_depth": spec.max_search_depth,
        "page": page,
        "path": path,
        "done": spec.completed_by(&g, g.home(), &taken),
        "options": options,
        "edges": edges,
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligns_a_button() {
        let xml = r#"<hierarchy><node text="ok" clickable="true" bounds="[0,0][100,50]"/></hierarchy>"#;
        let v: Value = serde_json::from_str(&align_page(xml, 720, 1280).unwrap()).unwrap();
        let acts = v["actions"].as_array().unwrap();
        assert_eq!(acts.len(), 2);
        assert_eq!(acts[0]["gesture"], json!({ "kind": "tap", "at": [50, 25] }));
        assert_eq!(acts[1]["gesture"], Value::Null);
    }

    #[test]
    fn judges_near_miss_inside_margin() {
        let gold = r#"{"kind":"click","name":"ok","bounds":[100,100,200,200]}"#;
        let near = r#"{"kind":"click","name":"ok","bounds":[250,100,300,200]}"#;
        let v: Value = serde_json::from_str(&judge_step(near, gold, 720, 1280, 0.14).unwrap()).unwrap();
        assert_eq!(v["iou"], true);
        let v: Value = serde_json::from_str(&judge_step(near, gold, 720, 1280, 0.0).unwrap()).unwrap();
        assert_eq!(v["iou"], false);
        assert!(judge_step(near, gold, 720, 1280, 1.5).is_err());
    }

    #[test]
    fn walk_reaches_target_along_golden_options() {
        let mut history: Vec<Value> = Vec::new();
        for _ in 0..16 {
            let v: Value = serde_json::from_str(&reward_walk(1, 8, &Value::from(history.clone()).to_string()).unwrap()).unwrap();
            if v["done"] == true {
                assert_eq!(v["page"], v["target"]);
                assert!(v["options"].as_array().unwrap().is_empty());
                assert_eq!(history.len(), v["golden_length"].as_u64().unwrap() as usize);
                return;
            }
            let golden = v["options"]
                .as_array()
                .unwrap()
                .iter()
                .find(|o| o["level"] == "golden")
                .expect("a golden move exists until the walk ends");
            history.push(golden["action"].clone());
        }
        panic!("never reached the target");
    }
}
