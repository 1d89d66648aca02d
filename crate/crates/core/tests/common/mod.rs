#![allow(dead_code)]

use cwhnet_core::dynamics::{cwh_system, ClosedLoop};
use cwhnet_core::geometry::{decompose_free_space, pyramid_obstacle, Polytope, RegionSet};
use cwhnet_core::synthesis::{synthesize, GainWeights};

pub fn closed_loop() -> ClosedLoop {
    synthesize(cwh_system(0.0013, 10.0).unwrap(), &GainWeights::cwh_default()).unwrap()
}

pub fn outer_box() -> Polytope {
    Polytope::axis_box(
        &[-150.0, -150.0, -100.0, -1.0, -1.0, -1.0],
        &[200.0, 150.0, 100.0, 1.0, 1.0, 1.0],
    )
    .unwrap()
}

pub fn regions() -> RegionSet {
    let cone = pyramid_obstacle([0.0; 3], [1.0, 0.0, 0.0], 30f64.to_radians(), 9, 6).unwrap();
    decompose_free_space(outer_box(), Some(cone)).unwrap()
}
