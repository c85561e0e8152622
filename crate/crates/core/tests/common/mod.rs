#![allow(dead_code)]

use emplearn::model::{Calibration, SkillPriceProfile, StructuralParams};
use emplearn::simulate::{draw_population, simulate_panel, ExposureRegime, GroupConfig, Panel, SimulationConfig};

pub fn calibrated() -> StructuralParams {
    StructuralParams::calibrated(&Calibration::default()).unwrap()
}

pub fn with_growing_prices(slope: f64) -> StructuralParams {
    let mut p = calibrated();
    p.skill_prices = SkillPriceProfile::linear(p.horizon(), slope).unwrap();
    p
}

pub fn panel(structure: &StructuralParams, n: usize, regime: ExposureRegime, seed: u64) -> Panel {
    let mut cfg = SimulationConfig::new(n, structure.horizon(), regime, seed);
    cfg.groups = GroupConfig::none();
    let workers = draw_population(&cfg, structure).unwrap();
    simulate_panel(&workers, structure, &cfg).unwrap()
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
