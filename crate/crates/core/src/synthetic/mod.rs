//! Seeded synthetic data with known truth, used by tests, examples and the
//! end-to-end fixture.

mod fixture;
pub mod panel;
pub mod world;

pub use fixture::{write_fixture, FIXTURE_DEPLOY_YEARS, FIXTURE_SCENARIOS};
pub use panel::{
    generate_panel, recovery_benchmark, split_fixture, true_eta, true_interaction, true_smooth,
    CountrySpec, Panel, PanelSpec,
};
pub use world::{label_world, world_features, LabelPlan, World, WorldLabels, WorldSpec};
