//! CSV ingestion, simulation of synthetic datasets and binary persistence
//! of draws and variational states.

mod csvio;
mod sim;
mod store;

pub use csvio::{load_csv, read_csv, write_csv, DatasetSchema, INTERCEPT_NAME};
pub use sim::{simulate, SimModel, SimulationSpec, Truth};
pub use store::{
    load_chlrm_draws, load_chlrm_state, load_draws, load_lrm_state, save_chlrm_draws, save_chlrm_state, save_draws,
    save_lrm_state, ColumnStore, STORE_VERSION,
};

/// Parse `key=value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> crate::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| crate::Error::Format(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
