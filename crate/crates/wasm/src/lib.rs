//! Browser bindings. Each export takes and returns JSON strings; the plain
//! functions in [`demo`] do the work and are tested natively.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Parses a page dump and returns every candidate action with its aligned gesture.
#[wasm_bindgen]
pub fn align_page(xml: &str, width: u32, height: u32) -> Result<String, JsError> {
    js(demo::align_page(xml, width, height))
}

/// Judges one predicted action against a gold action.
#[wasm_bindgen]
pub fn judge_step(pred: &str, gold: &str, width: u32, height: u32, margin: f64) -> Result<String, JsError> {
    js(demo::judge_step(pred, gold, width, height, margin))
}

/// Replays `history` on a seeded random graph and grades every action on the current page.
#[wasm_bindgen]
pub fn reward_walk(seed: u32, pages: u32, history: &str) -> Result<String, JsError> {
    js(demo::reward_walk(u64::from(seed), pages as usize, history))
}
