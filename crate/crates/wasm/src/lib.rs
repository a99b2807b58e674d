//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export takes a JSON request string and returns a JSON response
//! string; see [`demo`] for the request and response shapes.

pub mod demo;

use wasm_bindgen::prelude::*;

#[wasm_bindgen(js_name = simulateAndFilter)]
pub fn simulate_and_filter(request: &str) -> Result<String, JsError> {
    demo::simulate_and_filter(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn backtest(request: &str) -> Result<String, JsError> {
    demo::backtest(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bootstrapHistogram)]
pub fn bootstrap_histogram(request: &str) -> Result<String, JsError> {
    demo::bootstrap_histogram(request).map_err(|e| JsError::new(&e))
}
