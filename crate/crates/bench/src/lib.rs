//! Shared fixtures for the pipeline benchmarks.

use oprg::initial::InitialStage;
use oprg::model::apply_ir_cutoff;
use oprg::rg::RGConfig;
use oprg::{testkit, DiscretizedModel};

/// Named models exercised by the benchmarks.
pub fn models() -> Vec<(&'static str, DiscretizedModel)> {
    vec![("tls1", testkit::tls1()), ("three_level", testkit::three_level()), ("sigma_ladder", testkit::sigma_ladder())]
}

pub fn stage(model: &DiscretizedModel) -> InitialStage {
    InitialStage::new(model, RGConfig::default().xi).expect("valid stage")
}

/// `model` with an infrared cutoff suitable for the contour series.
pub fn series_model(model: &DiscretizedModel) -> DiscretizedModel {
    apply_ir_cutoff(model, 0.3).expect("valid cutoff")
}
