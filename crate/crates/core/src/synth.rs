//! Synthetic pages and graphs for tests, demos and the CLI fixture suite.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action_space::enumerate_action_space;
use crate::geometry::{BoundingBox, ScreenSize};
use crate::model::{Action, Edge, GuiGraph, GuiPage};

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('"', "&quot;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Builder for UIAutomator-style page dumps.
#[derive(Debug, Clone, Default)]
pub struct PageXml {
    nodes: Vec<String>,
}

impl PageXml {
    pub fn new() -> Self {
        Self::default()
    }

    fn node(mut self, class: &str, name: &str, b: BoundingBox, flags: &[(&str, bool)]) -> Self {
        let mut attrs = format!(r#"class="{class}" text="{}""#, escape(name));
        for (k, v) in flags {
            attrs.push_str(&format!(r#" {k}="{v}""#));
        }
        self.nodes.push(format!(r#"    <node {attrs} bounds="{b}"/>"#));
        self
    }

    pub fn button(self, name: &str, b: BoundingBox) -> Self {
        self.node("android.widget.Button", name, b, &[("clickable", true)])
    }

    pub fn label(self, name: &str, b: BoundingBox) -> Self {
        self.node("android.widget.TextView", name, b, &[("clickable", false)])
    }

    pub fn list(self, name: &str, b: BoundingBox) -> Self {
        self.node(
            "androidx.recyclerview.widget.RecyclerView",
            name,
            b,
            &[("clickable", false), ("scrollable", true)],
        )
    }

    pub fn input(self, name: &str, b: BoundingBox) -> Self {
        self.node("android.widget.EditText", name, b, &[("editable", true)])
    }

    pub fn build(&self) -> String {
        let mut xml = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<hierarchy rotation=\"0\">\n");
        for n in &self.nodes {
            xml.push_str(n);
            xml.push('\n');
        }
        xml.push_str("</hierarchy>\n");
        xml
    }
}

/// Shorthand for boxes known to be well-formed.
pub fn bx(x1: i32, y1: i32, x2: i32, y2: i32) -> BoundingBox {
    BoundingBox::new(x1, y1, x2, y2).expect("well-formed literal box")
}

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub pages: usize,
    pub max_buttons: usize,
    /// Chance that a button leads somewhere; dead buttons stay in the action
    /// space but have no transition.
    pub p_wired: f64,
    pub p_list: f64,
    pub p_input: f64,
    pub screen: ScreenSize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pages: 10,
            max_buttons: 3,
            p_wired: 0.8,
            p_list: 0.3,
            p_input: 0.2,
            screen: ScreenSize::default(),
        }
    }
}

const WORDS: &[&str] = &[
    "search", "cart", "profile", "settings", "orders", "deals", "phone", "laptop", "white", "black", "ok", "back",
    "share", "review", "details", "menu",
];

/// Random page graph rooted at `p0`. Deterministic in `seed`.
///
/// The first button of every page is always wired, to a later page (the last
/// page links back to an earlier one), so every page has an exit and `p0`
/// reaches every page along the forward links. No edge loops back to its own
/// page.
pub fn random_graph(cfg: &SynthConfig, seed: u64) -> GuiGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.pages.max(1);
    let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
    let mut pages = Vec::with_capacity(n);
    for id in &ids {
        let mut xml = PageXml::new().label(&format!("{id} title"), bx(0, 0, 720, 60));
        let buttons = rng.random_range(1..=cfg.max_buttons.max(1));
        for b in 0..buttons {
            let word = WORDS.choose(&mut rng).copied().unwrap_or("item");
            let y = 80 + 90 * b as i32;
            xml = xml.button(&format!("{word} {b}"), bx(20, y, 700, y + 80));
        }
        if rng.random_bool(cfg.p_list) {
            xml = xml.list("", bx(0, 600, 720, 1100));
        }
        if rng.random_bool(cfg.p_input) {
            xml = xml.input("query", bx(40, 1120, 680, 1200));
        }
        pages.push(GuiPage::new(id.clone(), xml.build(), cfg.screen).expect("generated XML parses"));
    }
    let mut edges = Vec::new();
    for (i, page) in pages.iter().enumerate() {
        for (k, action) in enumerate_action_space(page).into_iter().enumerate() {
            let forced = k == 0 && n > 1;
            let wired = match &action {
                Action::Complete { .. } => false,
                Action::Click { .. } => forced || rng.random_bool(cfg.p_wired),
                _ => rng.random_bool(cfg.p_wired * 0.5),
            };
            if !wired {
                continue;
            }
            let action = match action {
                Action::Input { name, bounds, .. } => Action::input(name, bounds, *["phone", "laptop"].choose(&mut rng).unwrap()),
                other => other,
            };
            let dst = if n == 1 {
                ids[0].clone()
            } else if forced && i + 1 < n {
                ids[rng.random_range(i + 1..n)].clone()
            } else {
                let j = rng.random_range(0..n - 1);
                ids[if j >= i { j + 1 } else { j }].clone()
            };
            edges.push(Edge { src: page.page_id().to_string(), action, dst });
        }
    }
    GuiGraph::new(cfg.screen, ids[0].clone(), pages, edges).expect("generated edges are in space")
}

/// Graph whose pages form a chain `ids[0] -> ids[1] -> ...`, one button each.
pub fn chain_graph(ids: &[&str]) -> GuiGraph {
    let screen = ScreenSize::default();
    let mut pages = Vec::new();
    let mut edges = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let mut xml = PageXml::new().label(id, bx(0, 0, 720, 60));
        if let Some(next) = ids.get(i + 1) {
            let b = bx(20, 100, 700, 180);
            let name = format!("to {next}");
            xml = xml.button(&name, b);
            edges.push(Edge { src: id.to_string(), action: Action::click(name, b), dst: next.to_string() });
        }
        pages.push(GuiPage::new(*id, xml.build(), screen).expect("chain XML parses"));
    }
    GuiGraph::new(screen, ids[0], pages, edges).expect("chain graph is valid")
}
