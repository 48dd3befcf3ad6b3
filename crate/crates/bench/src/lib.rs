//! Fixtures shared by the benchmarks.

use mdpjls_core::study::{self, StudySpec};
use mdpjls_core::{parse_model, MdpJls};

pub const COUNTEREXAMPLE: &str = include_str!("../../../data/counterexample.json");
pub const VEHICLE: &str = include_str!("../../../data/vehicle.json");

pub fn counterexample() -> MdpJls {
    parse_model(COUNTEREXAMPLE).expect("bundled counterexample parses")
}

pub fn vehicle() -> MdpJls {
    parse_model(VEHICLE).expect("bundled vehicle model parses")
}

/// First generated transportation instance with `state_dim` states and `modes` modes.
pub fn transport(state_dim: usize, modes: usize) -> MdpJls {
    let spec = StudySpec { state_dim, modes, instances: 1, ..StudySpec::default() };
    study::generate_instance(&spec, 0).expect("generator accepts the shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_load() {
        assert_eq!(counterexample().num_modes(), 2);
        assert_eq!(vehicle().system.state_dim(), 4);
        let t = transport(8, 8);
        assert_eq!((t.system.state_dim(), t.num_modes()), (8, 8));
    }
}
