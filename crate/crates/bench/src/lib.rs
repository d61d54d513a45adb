//! Fixtures shared by the criterion benches.

use pivotband::mc::stream_seed;
use pivotband::{gen_dataset, Dataset, Scenario, ScenarioKind};

/// One reproducible dataset of size `n` from `kind`.
pub fn fixture(kind: ScenarioKind, n: usize) -> Dataset {
    gen_dataset(&Scenario::new(kind), n, stream_seed(2024, 0, n, 0)).expect("fixture data")
}
