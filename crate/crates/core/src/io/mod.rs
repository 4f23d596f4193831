//! File formats and simulated data: panel ingestion, the draw store and the
//! data-generating process used by tests and the CLI.

mod panel;
mod simulate;
pub mod store;

pub use panel::{align_panels, load_dataset, load_panel, write_dataset, write_panel, Panel, PanelSpec, Transform};
pub use simulate::{
    quarterly_dates, simulate_dgp, simulate_toy_phillips, toy_phillips_design, CoefficientLaw, DgpSpec, ModifierLaw,
    PathLaw, Simulation, ToyLaw, VarianceLaw,
};
pub use store::{file_hash, read_manifest, read_store, timestamp, write_store, RunInfo, RunManifest};
