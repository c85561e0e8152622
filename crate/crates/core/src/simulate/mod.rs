//! Synthetic worker panels generated from the structural model.

mod heterogeneous;
mod panel;
mod population;

pub use heterogeneous::{
    simulate_heterogeneous, ComplianceType, HPanel, HeterogeneousConfig, LateTruth,
    PotentialMeans, TypeShares,
};
pub use panel::{discretize_schooling, simulate_panel, wage_path, Panel, PanelRecord, WorkerColumns};
pub use population::{draw_population, ExposureRegime, GroupConfig, SimulationConfig, WorkerDraw};
