//! Hand-built graphs and flows with known answers.
//!
//! * [`shopping_flow`]: an eight-step phone-shopping flow (search, open the
//!   product, add to cart, scroll the parameter sheet, pick a colour,
//!   confirm), with its step-by-step description and brief task.
//! * [`cart_scenario`]: a small graph with two shortest routes, one longer
//!   route and one dead end for the task "add product A to the cart".
//! * [`two_route_graph`]: home to target via either of two pages.

use crate::geometry::ScreenSize;
use crate::model::{Action, Direction, Edge, FlowStep, GuiFlow, GuiGraph, GuiPage, SubtaskSpec};
use crate::synth::{bx, PageXml};

fn page(id: &str, xml: PageXml) -> GuiPage {
    GuiPage::new(id, xml.build(), ScreenSize::default()).expect("fixture XML parses")
}

fn edge(src: &str, action: Action, dst: &str) -> Edge {
    Edge { src: src.into(), action, dst: dst.into() }
}

pub const SHOPPING_TASK: &str =
    "Help me find detailed information about xiaomi 14, and add a white one to the shopping cart.";

pub const SHOPPING_DESCRIPTIONS: [&str; 8] = [
    "On the homepage of Xiaomi Mall, click the search icon to enter the search page.",
    "On the search page, enter \"xiaomi 14\" in the search box to search.",
    "On the search page, click the search icon to search.",
    "On the search results page, select the detailed information of \"xiaomi 14\".",
    "On the detailed information page, select and click \"Add to Cart\" to enter the parameter page of the phone.",
    "On the parameter page, scroll the page to view more parameter information.",
    "On the parameter page, select \"white\" to confirm the parameters of the phone.",
    "On the parameter page, click the \"Confirm\" button at the bottom to confirm the parameter configuration of the phone.",
];

/// Element names the shopping flow's clicks share with an existing dataset:
/// everything except the product name.
pub const SHOPPING_KNOWN_NAMES: [&str; 4] = ["search", "Add to cart", "white", "OK"];

/// The eight actions of the shopping flow, `a1..a8`.
pub fn shopping_actions() -> [Action; 8] {
    [
        Action::click("search", bx(177, 96, 273, 168)),
        Action::input("water purifier", bx(231, 72, 555, 168), "xiaomi 14"),
        Action::click("search", bx(597, 48, 702, 192)),
        Action::click("Xiaomi 14", bx(425, 1074, 628, 1125)),
        Action::click("Add to cart", bx(294, 1122, 429, 1154)),
        Action::scroll("", bx(0, 585, 720, 1088), Direction::Up),
        Action::click("white", bx(187, 693, 235, 722)),
        Action::click("OK", bx(333, 1121, 387, 1153)),
    ]
}

fn parameter_sheet(scrolled: bool, picked: bool) -> PageXml {
    let mut xml = PageXml::new()
        .label("Xiaomi 14", bx(0, 400, 720, 460))
        .label("price 3999", bx(0, 470, 360, 520))
        .button("8GB+256GB", bx(40, 530, 300, 580))
        .list("", bx(0, 585, 720, 1088))
        .button("OK", bx(333, 1121, 387, 1153))
        .button("close", bx(640, 400, 700, 460));
    if scrolled {
        xml = xml
            .button("black", bx(40, 693, 120, 722))
            .button("white", bx(187, 693, 235, 722))
            .button("blue", bx(280, 693, 360, 722));
    } else {
        xml = xml.label("memory", bx(40, 600, 200, 640)).label("network", bx(40, 650, 200, 690));
    }
    if picked {
        xml = xml.label("selected: white", bx(0, 1060, 720, 1088));
    }
    xml
}

/// Graph `P1..P9` for the shopping flow plus a few off-flow pages.
pub fn shopping_graph() -> GuiGraph {
    let [a1, a2, a3, a4, a5, a6, a7, a8] = shopping_actions();
    let search_page = |query: &str| {
        PageXml::new()
            .button("back", bx(0, 72, 96, 168))
            .input(query, bx(231, 72, 555, 168))
            .button("search", bx(597, 48, 702, 192))
            .label("search history", bx(0, 220, 720, 280))
            .button("water purifier", bx(20, 300, 340, 360))
            .button("headphones", bx(360, 300, 700, 360))
    };
    let pages = vec![
        page(
            "P1",
            PageXml::new()
                .label("Xiaomi Mall", bx(0, 0, 177, 96))
                .button("search", bx(177, 96, 273, 168))
                .button("cart", bx(600, 1180, 720, 1280))
                .button("categories", bx(150, 1180, 300, 1280))
                .list("", bx(0, 200, 720, 1160)),
        ),
        page("P2", search_page("water purifier")),
        page("P3", search_page("xiaomi 14")),
        page(
            "P4",
            PageXml::new()
                .button("back", bx(0, 48, 96, 192))
                .label("results for xiaomi 14", bx(100, 48, 600, 192))
                .button("filter", bx(600, 200, 720, 260))
                .list("", bx(0, 260, 720, 1280))
                .button("Xiaomi 14", bx(425, 1074, 628, 1125))
                .button("Xiaomi 14 Pro", bx(40, 1074, 400, 1125)),
        ),
        page(
            "P5",
            PageXml::new()
                .button("back", bx(0, 48, 96, 144))
                .label("Xiaomi 14 details", bx(100, 48, 720, 144))
                .list("", bx(0, 150, 720, 1100))
                .button("Add to cart", bx(294, 1122, 429, 1154))
                .button("Buy now", bx(450, 1122, 700, 1154)),
        ),
        page("P6", parameter_sheet(false, false)),
        page("P7", parameter_sheet(true, false)),
        page("P8", parameter_sheet(true, true)),
        page(
            "P9",
            PageXml::new()
                .label("Added to cart", bx(160, 600, 560, 680))
                .button("go to cart", bx(160, 700, 560, 780))
                .button("continue shopping", bx(160, 800, 560, 880)),
        ),
        page(
            "cart",
            PageXml::new().label("Shopping cart", bx(0, 0, 720, 96)).button("back", bx(0, 100, 96, 196)),
        ),
    ];
    let edges = vec![
        edge("P1", a1, "P2"),
        edge("P2", a2, "P3"),
        edge("P3", a3, "P4"),
        edge("P4", a4, "P5"),
        edge("P5", a5, "P6"),
        edge("P6", a6, "P7"),
        edge("P7", a7, "P8"),
        edge("P8", a8, "P9"),
        edge("P1", Action::click("cart", bx(600, 1180, 720, 1280)), "cart"),
        edge("P9", Action::click("go to cart", bx(160, 700, 560, 780)), "cart"),
        edge("cart", Action::click("back", bx(0, 100, 96, 196)), "P1"),
        edge("P2", Action::click("back", bx(0, 72, 96, 168)), "P1"),
    ];
    GuiGraph::new(ScreenSize::default(), "P1", pages, edges).expect("shopping graph is valid")
}

/// The annotated eight-step flow over [`shopping_graph`].
pub fn shopping_flow() -> GuiFlow {
    let steps = shopping_actions()
        .into_iter()
        .enumerate()
        .map(|(i, action)| FlowStep { page_id: format!("P{}", i + 1), action })
        .collect();
    GuiFlow {
        task: SHOPPING_TASK.to_string(),
        steps,
        step_descriptions: SHOPPING_DESCRIPTIONS.iter().map(|s| s.to_string()).collect(),
        terminal_page: "P9".into(),
    }
}

/// Named actions of [`cart_scenario`]. `a0_*` start on `P0`, `a1_*` on `P1^1`.
pub struct CartActions {
    pub a0_0: Action,
    pub a0_1: Action,
    pub a0_2: Action,
    pub a1_1: Action,
    pub a1_3: Action,
    pub a1_4: Action,
    pub add_to_cart: Action,
}

pub fn cart_actions() -> CartActions {
    CartActions {
        a0_0: Action::click("Product A", bx(20, 300, 700, 400)),
        a0_1: Action::click("search", bx(600, 40, 700, 120)),
        a0_2: Action::click("categories", bx(20, 420, 700, 520)),
        a1_1: Action::click("Product A", bx(20, 200, 700, 300)),
        a1_3: Action::click("more results", bx(20, 320, 700, 420)),
        a1_4: Action::click("orders", bx(20, 440, 700, 540)),
        add_to_cart: Action::click("add to cart", bx(300, 1100, 700, 1200)),
    }
}

/// Task "add product A to the cart" on a graph with golden routes
/// `P0,P1,P2,P3` and `P0,P1^1,P2,P3`, a longer route through `P1^2,P2^2`, and
/// a dead end `P3^1` reachable from `P1^1`.
///
/// Returns the graph and the obligations `[Reach(P2), Operate(P2, add to cart)]`.
pub fn cart_scenario() -> (GuiGraph, Vec<SubtaskSpec>) {
    let a = cart_actions();
    let to_p2 = Action::click("Product A details", bx(20, 300, 700, 400));
    let p2_2_to_p2 = Action::click("Product A", bx(20, 600, 700, 700));
    let p1_2_to_p2_2 = Action::click("phones", bx(20, 200, 700, 300));
    let pages = vec![
        page(
            "P0",
            PageXml::new()
                .button("search", bx(600, 40, 700, 120))
                .button("Product A", bx(20, 300, 700, 400))
                .button("categories", bx(20, 420, 700, 520)),
        ),
        page("P1", PageXml::new().label("Product A preview", bx(0, 0, 720, 100)).button("Product A details", bx(20, 300, 700, 400))),
        page(
            "P1^1",
            PageXml::new()
                .label("search results", bx(0, 0, 720, 100))
                .button("Product A", bx(20, 200, 700, 300))
                .button("more results", bx(20, 320, 700, 420))
                .button("orders", bx(20, 440, 700, 540)),
        ),
        page("P1^2", PageXml::new().label("categories", bx(0, 0, 720, 100)).button("phones", bx(20, 200, 700, 300))),
        page("P2^2", PageXml::new().label("more", bx(0, 0, 720, 100)).button("Product A", bx(20, 600, 700, 700))),
        page(
            "P2",
            PageXml::new()
                .label("Product A", bx(0, 0, 720, 100))
                .button("add to cart", bx(300, 1100, 700, 1200))
                .button("buy now", bx(20, 1100, 290, 1200)),
        ),
        page("P3", PageXml::new().label("added to cart", bx(0, 500, 720, 600))),
        page("P3^1", PageXml::new().label("my orders", bx(0, 0, 720, 100))),
    ];
    let edges = vec![
        edge("P0", a.a0_0.clone(), "P1"),
        edge("P0", a.a0_1.clone(), "P1^1"),
        edge("P0", a.a0_2.clone(), "P1^2"),
        edge("P1", to_p2, "P2"),
        edge("P1^1", a.a1_1.clone(), "P2"),
        edge("P1^1", a.a1_3.clone(), "P2^2"),
        edge("P1^1", a.a1_4.clone(), "P3^1"),
        edge("P1^2", p1_2_to_p2_2, "P2^2"),
        edge("P2^2", p2_2_to_p2, "P2"),
        edge("P2", a.add_to_cart.clone(), "P3"),
    ];
    let graph = GuiGraph::new(ScreenSize::default(), "P0", pages, edges).expect("cart scenario is valid");
    let spec = vec![
        SubtaskSpec::reach("P2", "Go to the \"Product A\" page."),
        SubtaskSpec::operate("P2", a.add_to_cart, "Add Product A to the cart on the product page."),
    ];
    (graph, spec)
}

/// `H -> A -> T` and `H -> B -> T`. Returns the graph and the golden flow via `A`.
pub fn two_route_graph() -> (GuiGraph, GuiFlow) {
    let to_a = Action::click("route a", bx(20, 100, 700, 180));
    let to_b = Action::click("route b", bx(20, 900, 700, 980));
    let a_to_t = Action::click("target", bx(20, 300, 700, 380));
    let b_to_t = Action::click("target", bx(20, 1100, 700, 1180));
    let pages = vec![
        page("H", PageXml::new().label("home", bx(0, 0, 720, 60)).button("route a", bx(20, 100, 700, 180)).button("route b", bx(20, 900, 700, 980))),
        page("A", PageXml::new().label("a", bx(0, 0, 720, 60)).button("target", bx(20, 300, 700, 380))),
        page("B", PageXml::new().label("b", bx(0, 0, 720, 60)).button("target", bx(20, 1100, 700, 1180))),
        page("T", PageXml::new().label("target page", bx(0, 0, 720, 60))),
    ];
    let edges = vec![
        edge("H", to_a.clone(), "A"),
        edge("H", to_b, "B"),
        edge("A", a_to_t.clone(), "T"),
        edge("B", b_to_t, "T"),
    ];
    let g = GuiGraph::new(ScreenSize::default(), "H", pages, edges).expect("two-route graph is valid");
    let flow = GuiFlow {
        task: "Open the target page.".into(),
        steps: vec![
            FlowStep { page_id: "H".into(), action: to_a },
            FlowStep { page_id: "A".into(), action: a_to_t },
        ],
        step_descriptions: vec![
            "On the home page, click \"route a\".".into(),
            "On the a page, click \"target\".".into(),
        ],
        terminal_page: "T".into(),
    };
    (g, flow)
}
